#pragma once

// Small configurations shared by the unit and acceptance tests.

#include <filesystem>
#include <string>

#include "univ/data.hpp"
#include "univ/encoder.hpp"
#include "univ/training.hpp"

namespace univ::fixture {

/// 8×8 images, 4 patches, one block: small enough for exhaustive gradient checks.
inline encoder::EncoderConfig small_encoder(std::uint64_t seed = 3) {
  encoder::EncoderConfig c;
  c.image_size = 8;
  c.patch_size = 4;
  c.channels = 3;
  c.depth = 1;
  c.dim = 8;
  c.heads = 2;
  c.mlp_ratio = 2;
  c.seed = seed;
  return c;
}

inline data::SyntheticTask small_task() {
  data::SyntheticTask t;
  t.image_size = 8;
  t.min_objects = 1;
  t.max_objects = 2;
  t.min_size = 1.5;
  t.max_size = 2.5;
  return t;
}

inline lora::LoraConfig small_lora() {
  lora::LoraConfig l;
  l.rank = 2;
  l.alpha = 4.0;
  l.dropout = 0.0;
  return l;
}

class TempDir {
 public:
  explicit TempDir(const std::string& name) : path_(std::filesystem::temp_directory_path() / ("univ_test_" + name)) {
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace univ::fixture
