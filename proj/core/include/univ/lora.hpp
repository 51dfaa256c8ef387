#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "univ/autograd.hpp"
#include "univ/rng.hpp"
#include "univ/tensor.hpp"

// Low-rank adapters for frozen linear weights.
//
// Weights are stored [out × in] and applied to row-major activations, so for
// a batch of rows x the adapted layer computes
//
//   h = x·Wᵀ + (alpha / rank) · drop(x)·Aᵀ·Bᵀ
//
// with B [out × rank] and A [rank × in]. This is the row-vector form of
// h = Wx + (alpha/r)·B·A·x. B starts at zero, so an attached model computes
// exactly what the frozen model computes until B receives an update.

namespace univ::lora {

struct LoraConfig {
  std::size_t rank = 8;
  double alpha = 32.0;
  double dropout = 0.1;
  /// Matched against the layer component of "<block>.<layer>.weight".
  std::vector<std::string> target_modules{"fc1", "qkv", "fc2", "proj", "patch"};

  void validate() const;
};

struct LoraAdapter {
  std::string target_name;
  Tensor B;  // [out × rank]
  Tensor A;  // [rank × in]
  std::size_t rank = 0;
  double alpha = 0.0;
  double dropout_p = 0.0;

  double scaling() const { return alpha / static_cast<double>(rank); }
};

struct AdapterSet {
  LoraConfig config;
  std::map<std::string, LoraAdapter> adapters;

  std::size_t parameter_count() const;
};

std::string a_name(std::string_view target);
std::string b_name(std::string_view target);

/// True if `pattern` equals the layer component of a "<block>.<layer>.weight" name.
bool target_matches(std::string_view param_name, std::string_view pattern);

/// Freezes every tensor in `params` except position embeddings ("*.pos.*") and
/// creates one adapter per matched weight. B is zero, A ~ N(0, 0.02²).
/// Throws ConfigError for a pattern that matches nothing or rank > min(out, in).
AdapterSet attach(ParameterSet& params, const LoraConfig& config, std::uint64_t seed);

/// Eval or training forward on plain tensors. `rng` is required when training with dropout.
Tensor forward_adapted(const Tensor& x, const Tensor& weight, const LoraAdapter& adapter, bool training,
                       Rng* rng = nullptr);

/// Differentiable adapted linear layer. Gradients reach W only if W's leaf requires them.
Var forward_adapted(Var x, Var weight, std::optional<Var> bias, Var a, Var b, const LoraAdapter& adapter,
                    bool training, Rng* rng);

/// W + (alpha/rank)·B·A. Entries whose update is exactly zero keep W's bits.
Tensor merge(const Tensor& weight, const LoraAdapter& adapter);
/// W* - (alpha/rank)·B·A.
Tensor unmerge(const Tensor& merged, const LoraAdapter& adapter);

/// Merges every adapter into a copy of `params`. Throws ConfigError naming any
/// target missing from `params`, DimensionError on shape mismatch.
ParameterSet merge_all(const ParameterSet& params, const AdapterSet& adapters);

/// Adds "<target>.lora_A" / "<target>.lora_B" leaves (requiring gradients) to `vars`.
void bind(Tape& tape, const AdapterSet& adapters, VarMap& vars);

/// Adapter tensors keyed "<target>.lora_A" / "<target>.lora_B".
std::map<std::string, Tensor*> trainable_tensors(AdapterSet& adapters);

struct AdapterStats {
  std::string target_name;
  std::vector<double> b_column_norms;  // one per rank component
  std::vector<double> a_row_norms;
  /// ‖b_k‖·‖a_k‖, the Frobenius norm of the k-th rank-one term.
  std::vector<double> component_norms;
  double gini = 0.0;
};

/// Gini coefficient of non-negative values; 0 when all are zero.
double gini(std::span<const double> values);

std::vector<AdapterStats> sparsity_report(const AdapterSet& adapters);

/// Adapter checkpoint: header holds rank, alpha, dropout and target patterns.
void save_adapters(const std::filesystem::path& path, const AdapterSet& adapters);
AdapterSet load_adapters(const std::filesystem::path& path);

}  // namespace univ::lora
