#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>

#include "univ/tensor.hpp"

// Binary layout, all integers and floats little-endian:
//
//   tensor record : "UNIVTNSR" | u32 rank | u64 extent[rank] | f64 value[numel]
//   checkpoint    : "UNIVCKPT" | u32 header_len | header (key=value lines)
//                   | u32 count | count × (u32 name_len | name | tensor record)
//
// Checkpoint entries are written in name order, so identical parameter sets
// produce identical bytes.

namespace univ {

void write_tensor(std::ostream& os, const Tensor& t);
Tensor read_tensor(std::istream& is);

void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

struct Checkpoint {
  std::map<std::string, std::string> header;
  ParameterSet tensors;
};

void save_checkpoint(const std::filesystem::path& path, const ParameterSet& tensors,
                     const std::map<std::string, std::string>& header = {});
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace univ
