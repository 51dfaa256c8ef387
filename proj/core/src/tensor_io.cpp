#include "univ/tensor_io.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "univ/error.hpp"

namespace univ {
namespace {

constexpr std::array<char, 8> kTensorMagic{'U', 'N', 'I', 'V', 'T', 'N', 'S', 'R'};
constexpr std::array<char, 8> kCheckpointMagic{'U', 'N', 'I', 'V', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kMaxRank = 8;

template <typename U>
void put_le(std::ostream& os, U value) {
  std::array<char, sizeof(U)> bytes{};
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xff);
  os.write(bytes.data(), bytes.size());
}

template <typename U>
U get_le(std::istream& is, const char* what) {
  std::array<unsigned char, sizeof(U)> bytes{};
  if (!is.read(reinterpret_cast<char*>(bytes.data()), bytes.size())) {
    throw DataError(std::string("truncated tensor data while reading ") + what);
  }
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
  return value;
}

void expect_magic(std::istream& is, const std::array<char, 8>& magic) {
  std::array<char, 8> got{};
  if (!is.read(got.data(), got.size()) || got != magic) {
    throw DataError("bad magic, expected " + std::string(magic.data(), magic.size()));
  }
}

}  // namespace

void write_tensor(std::ostream& os, const Tensor& t) {
  os.write(kTensorMagic.data(), kTensorMagic.size());
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
  for (auto e : t.shape()) put_le<std::uint64_t>(os, e);
  for (double v : t.data()) put_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(v));
}

Tensor read_tensor(std::istream& is) {
  expect_magic(is, kTensorMagic);
  const auto rank = get_le<std::uint32_t>(is, "rank");
  if (rank > kMaxRank) throw DataError("tensor rank " + std::to_string(rank) + " exceeds limit");
  Shape shape(rank);
  for (auto& e : shape) {
    e = get_le<std::uint64_t>(is, "extent");
    if (e == 0 || e > (1ULL << 32)) throw DataError("invalid tensor extent " + std::to_string(e));
  }
  std::vector<double> data(shape_numel(shape));
  for (double& v : data) v = std::bit_cast<double>(get_le<std::uint64_t>(is, "payload"));
  return Tensor(std::move(shape), std::move(data));
}

void save_tensor(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  write_tensor(os, t);
  if (!os) throw DataError("write failed for " + path.string());
}

Tensor load_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  return read_tensor(is);
}

void save_checkpoint(const std::filesystem::path& path, const ParameterSet& tensors,
                     const std::map<std::string, std::string>& header) {
  std::ostringstream text;
  for (const auto& [k, v] : header) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw DataError("checkpoint header entry '" + k + "' contains a separator");
    }
    text << k << '=' << v << '\n';
  }
  const std::string header_bytes = text.str();

  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  os.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(header_bytes.size()));
  os.write(header_bytes.data(), static_cast<std::streamsize>(header_bytes.size()));
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_tensor(os, t);
  }
  if (!os) throw DataError("write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  expect_magic(is, kCheckpointMagic);
  Checkpoint ckpt;
  const auto header_len = get_le<std::uint32_t>(is, "header length");
  std::string header(header_len, '\0');
  if (!is.read(header.data(), header_len)) throw DataError("truncated checkpoint header in " + path.string());
  std::istringstream lines(header);
  for (std::string line; std::getline(lines, line);) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError("malformed checkpoint header line '" + line + "'");
    ckpt.header[line.substr(0, eq)] = line.substr(eq + 1);
  }
  const auto count = get_le<std::uint32_t>(is, "entry count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = get_le<std::uint32_t>(is, "name length");
    if (name_len > 4096) throw DataError("implausible tensor name length in " + path.string());
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len)) throw DataError("truncated tensor name in " + path.string());
    ckpt.tensors.emplace(std::move(name), read_tensor(is));
  }
  return ckpt;
}

}  // namespace univ
