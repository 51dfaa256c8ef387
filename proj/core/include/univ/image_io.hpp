#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "univ/tensor.hpp"

namespace univ::data {

/// 8-bit interleaved raster as stored in binary PGM (P5, 1 channel) or PPM (P6, 3 channels).
struct Image8 {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 0;
  std::vector<std::uint8_t> pixels;

  friend bool operator==(const Image8&, const Image8&) = default;
};

/// Reads P5 or P6. Header comments ('#') are skipped; maxval must be 1..255.
/// Samples are rescaled to 0..255 when maxval < 255.
Image8 read_pnm(const std::filesystem::path& path);

/// Writes P5 for one channel, P6 for three, always with maxval 255.
void write_pnm(const std::filesystem::path& path, const Image8& image);

/// [C×H×W] tensor in [0, 1].
Tensor to_tensor(const Image8& image);

/// Quantizes round(v·255) after clamping to [0, 1].
Image8 from_tensor(const Tensor& image);

}  // namespace univ::data
