#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "univ/data.hpp"
#include "univ/encoder.hpp"
#include "univ/forgetting.hpp"
#include "univ/lora.hpp"
#include "univ/probe.hpp"
#include "univ/training.hpp"

// Flat key=value run configuration. '#' starts a comment, blank lines are
// ignored, every key may appear at most once and unknown keys are rejected.

namespace univ::cli {

struct RunConfig {
  encoder::EncoderConfig encoder;
  train::TrainConfig train;
  bool use_lora = false;
  lora::LoraConfig lora;

  std::optional<std::filesystem::path> manifest;  // synthetic pairs when unset
  std::optional<std::filesystem::path> teacher_checkpoint;
  std::size_t pairs = 64;
  double night_fraction = 0.5;
  std::size_t probe_samples = 160;
  double probe_train_fraction = 0.5;
  double probe_ridge = 1e-3;
  std::vector<std::uint64_t> forget_seeds{1, 2, 3, 4, 5};
  std::uint64_t seed = 0;

  /// Training configuration with lora and seed resolved.
  train::TrainConfig resolved_train() const;
  data::SyntheticTask task() const;
  train::ProbeOptions probe() const;
  train::ForgettingConfig forgetting() const;
};

/// Every known key, in the order they are echoed.
const std::vector<std::string>& config_keys();

/// Parses config text. Relative paths resolve against `base_dir`.
/// Throws ConfigError naming the offending key or line.
RunConfig parse_run_config(std::istream& in, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

/// Applies UNIV_SEED from the environment if set; returns true if it did.
bool apply_seed_override(RunConfig& cfg);

/// "key = value" for every key, defaults included.
std::string describe(const RunConfig& cfg);

}  // namespace univ::cli
