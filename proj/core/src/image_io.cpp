#include "univ/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <string>

#include "univ/error.hpp"

namespace univ::data {
namespace {

void skip_space_and_comments(std::istream& is) {
  for (;;) {
    const int c = is.peek();
    if (c == '#') {
      std::string ignored;
      std::getline(is, ignored);
    } else if (c != EOF && std::isspace(c)) {
      is.get();
    } else {
      return;
    }
  }
}

std::size_t read_header_int(std::istream& is, const std::filesystem::path& path, const char* field) {
  skip_space_and_comments(is);
  std::size_t value = 0;
  int digits = 0;
  while (std::isdigit(is.peek())) {
    value = value * 10 + static_cast<std::size_t>(is.get() - '0');
    if (++digits > 9) break;
  }
  if (digits == 0 || digits > 9) throw DataError("malformed " + std::string(field) + " in header of " + path.string());
  return value;
}

}  // namespace

Image8 read_pnm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open image " + path.string());
  char magic[2] = {};
  if (!is.read(magic, 2) || magic[0] != 'P' || (magic[1] != '5' && magic[1] != '6')) {
    throw DataError("malformed header in " + path.string() + ": expected P5 or P6");
  }
  Image8 img;
  img.channels = magic[1] == '5' ? 1 : 3;
  img.width = read_header_int(is, path, "width");
  img.height = read_header_int(is, path, "height");
  const std::size_t maxval = read_header_int(is, path, "maxval");
  if (img.width == 0 || img.height == 0) throw DataError("zero image size in " + path.string());
  if (maxval == 0 || maxval > 255) {
    throw DataError("unsupported maxval " + std::to_string(maxval) + " in " + path.string());
  }
  // Exactly one whitespace byte separates the header from the raster.
  if (!std::isspace(is.get())) throw DataError("malformed header terminator in " + path.string());
  img.pixels.resize(img.width * img.height * img.channels);
  if (!is.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()))) {
    throw DataError("truncated raster in " + path.string());
  }
  if (maxval != 255) {
    for (auto& p : img.pixels) {
      p = static_cast<std::uint8_t>(std::lround(std::min<double>(p, maxval) * 255.0 / static_cast<double>(maxval)));
    }
  }
  return img;
}

void write_pnm(const std::filesystem::path& path, const Image8& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw DataError("PNM output supports 1 or 3 channels, got " + std::to_string(image.channels));
  }
  if (image.pixels.size() != image.width * image.height * image.channels) {
    throw DataError("pixel buffer does not match image dimensions for " + path.string());
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  os << (image.channels == 1 ? "P5" : "P6") << '\n' << image.width << ' ' << image.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
  if (!os) throw DataError("write failed for " + path.string());
}

Tensor to_tensor(const Image8& image) {
  const std::size_t c = image.channels, h = image.height, w = image.width;
  Tensor out({c, h, w});
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        out[(ch * h + y) * w + x] = image.pixels[(y * w + x) * c + ch] / 255.0;
      }
    }
  }
  return out;
}

Image8 from_tensor(const Tensor& image) {
  if (image.rank() != 3) throw DimensionError("from_tensor expects [C×H×W], got " + shape_str(image.shape()));
  Image8 out;
  out.channels = image.shape()[0];
  out.height = image.shape()[1];
  out.width = image.shape()[2];
  out.pixels.resize(image.numel());
  const std::size_t c = out.channels, h = out.height, w = out.width;
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const double v = std::clamp(image[(ch * h + y) * w + x], 0.0, 1.0);
        out.pixels[(y * w + x) * c + ch] = static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
    }
  }
  return out;
}

}  // namespace univ::data
