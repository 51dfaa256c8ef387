#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include "univ_cli/run_config.hpp"

// Subcommand bodies. Each writes its report to `out` and progress to `log`,
// and throws on failure; main() maps exceptions to exit codes.

namespace univ::cli {

enum ExitCode : int { kOk = 0, kUsageError = 1, kNumericError = 2 };

struct GenDataOptions {
  std::filesystem::path out;
  std::size_t pairs = 0;
  std::uint64_t seed = 0;
  double night_fraction = 0.0;
  std::size_t image_size = 16;
  /// Consecutive scenes sharing a sequence_id.
  std::size_t sequence_length = 8;
};

/// Writes manifest.tsv plus visible/<scene>.ppm and infrared/<scene>.pgm.
void gen_data(const GenDataOptions& options, std::ostream& log);

/// Writes initial.ckpt; with epochs > 0 also teacher.ckpt, final.ckpt,
/// best.ckpt (lowest epoch-mean loss), metrics.jsonl and, under LoRA,
/// final_adapters.ckpt and best_adapters.ckpt.
void pretrain(const RunConfig& cfg, const std::filesystem::path& out_dir, std::ostream& log);

/// mse, nce and pccl under identical seeds: final loss and probe accuracies.
void ablate(const RunConfig& cfg, std::ostream& out, std::ostream& log);

/// The five-row forgetting grid and its ordering checks.
void forget(const RunConfig& cfg, std::ostream& out, std::ostream& log);

/// One pretrain-style run per rank; trainable count, final loss and probes.
void sweep_rank(const RunConfig& cfg, const std::vector<std::size_t>& ranks, std::ostream& out, std::ostream& log);

struct MergeOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path adapters;
  std::filesystem::path out;
  std::uint64_t seed = 0;
  std::size_t verify_inputs = 10;
};

/// Merges adapters into the checkpoint and returns the largest feature
/// difference between merged and two-path forwards on random images.
double merge(const MergeOptions& options, std::ostream& out);

struct DumpOptions {
  std::filesystem::path teacher;
  std::filesystem::path student;
  std::optional<std::filesystem::path> adapters;
  std::filesystem::path manifest;
  std::filesystem::path out;
  std::size_t count = 1;
  double tau = pccl::kDefaultTau;
  double gamma = pccl::kDefaultGamma;
};

/// Per sample: <scene>.M_IV_S, .M_VV_S, .M_V_P and .M_V_A as tensor files.
void dump_matrices(const DumpOptions& options, std::ostream& log);

/// Encoder configuration recorded in a checkpoint header.
encoder::EncoderConfig encoder_from_header(const std::map<std::string, std::string>& header);
std::map<std::string, std::string> encoder_header(const encoder::EncoderConfig& config);

}  // namespace univ::cli
