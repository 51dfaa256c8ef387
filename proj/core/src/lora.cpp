#include "univ/lora.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "univ/error.hpp"
#include "univ/tensor_io.hpp"
#include "univ/tensor_ops.hpp"

namespace univ::lora {
namespace {

constexpr double kInitStd = 0.02;

std::vector<std::string_view> split_dots(std::string_view s) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  for (;;) {
    const auto dot = s.find('.', start);
    parts.push_back(s.substr(start, dot == std::string_view::npos ? std::string_view::npos : dot - start));
    if (dot == std::string_view::npos) break;
    start = dot + 1;
  }
  return parts;
}

bool is_position_embedding(std::string_view name) { return name.find(".pos.") != std::string_view::npos; }

Tensor dropout_mask(const Shape& shape, double p, Rng& rng) {
  Tensor mask(shape);
  const double keep_scale = 1.0 / (1.0 - p);
  for (std::size_t i = 0; i < mask.numel(); ++i) mask[i] = rng.bernoulli(p) ? 0.0 : keep_scale;
  return mask;
}

void check_shapes(const Tensor& weight, const LoraAdapter& adapter) {
  if (weight.rank() != 2 || adapter.B.rows() != weight.rows() || adapter.A.cols() != weight.cols() ||
      adapter.B.cols() != adapter.rank || adapter.A.rows() != adapter.rank) {
    throw DimensionError("adapter for '" + adapter.target_name + "' has B " + shape_str(adapter.B.shape()) +
                         ", A " + shape_str(adapter.A.shape()) + " but weight is " + shape_str(weight.shape()));
  }
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) {
    if (!out.empty()) out += ',';
    out += s;
  }
  return out;
}

}  // namespace

void LoraConfig::validate() const {
  if (rank == 0) throw ConfigError("lora rank must be positive");
  if (!(alpha > 0.0)) throw ConfigError("lora alpha must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("lora dropout must lie in [0, 1)");
  if (target_modules.empty()) throw ConfigError("lora target_modules is empty");
}

std::size_t AdapterSet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, a] : adapters) n += a.A.numel() + a.B.numel();
  return n;
}

std::string a_name(std::string_view target) { return std::string(target) + ".lora_A"; }
std::string b_name(std::string_view target) { return std::string(target) + ".lora_B"; }

bool target_matches(std::string_view param_name, std::string_view pattern) {
  const auto parts = split_dots(param_name);
  return parts.size() >= 3 && parts.back() == "weight" && parts[parts.size() - 2] == pattern;
}

AdapterSet attach(ParameterSet& params, const LoraConfig& config, std::uint64_t seed) {
  config.validate();
  AdapterSet out;
  out.config = config;
  Rng rng(seed);
  std::set<std::string> unmatched(config.target_modules.begin(), config.target_modules.end());
  for (auto& [name, tensor] : params) {
    tensor.set_requires_grad(is_position_embedding(name));
    const auto hit = std::find_if(config.target_modules.begin(), config.target_modules.end(),
                                  [&](const std::string& p) { return target_matches(name, p); });
    if (hit == config.target_modules.end()) continue;
    unmatched.erase(*hit);
    const std::size_t out_dim = tensor.rows(), in_dim = tensor.cols();
    if (config.rank > std::min(out_dim, in_dim)) {
      throw ConfigError("lora rank " + std::to_string(config.rank) + " exceeds min dimension of '" + name + "' " +
                        shape_str(tensor.shape()));
    }
    LoraAdapter adapter;
    adapter.target_name = name;
    adapter.rank = config.rank;
    adapter.alpha = config.alpha;
    adapter.dropout_p = config.dropout;
    adapter.B = Tensor({out_dim, config.rank});
    adapter.A = Tensor({config.rank, in_dim});
    for (double& v : adapter.A.data()) v = rng.normal() * kInitStd;
    adapter.A.set_requires_grad(true);
    adapter.B.set_requires_grad(true);
    out.adapters.emplace(name, std::move(adapter));
  }
  if (!unmatched.empty()) {
    throw ConfigError("lora target pattern '" + *unmatched.begin() + "' matches no parameter");
  }
  return out;
}

Tensor forward_adapted(const Tensor& x, const Tensor& weight, const LoraAdapter& adapter, bool training, Rng* rng) {
  check_shapes(weight, adapter);
  if (x.rank() != 2 || x.cols() != weight.cols()) {
    throw DimensionError("forward_adapted: input " + shape_str(x.shape()) + " for weight " +
                         shape_str(weight.shape()));
  }
  Tensor base = matmul_nt(x, weight);
  Tensor branch_in = x;
  branch_in.clear_grad();
  if (training && adapter.dropout_p > 0.0) {
    if (!rng) throw ConfigError("forward_adapted: training with dropout requires an Rng");
    branch_in = hadamard(x, dropout_mask(x.shape(), adapter.dropout_p, *rng));
  }
  const Tensor update = scale(matmul_nt(matmul_nt(branch_in, adapter.A), adapter.B), adapter.scaling());
  Tensor out = add(base, update);
  require_finite(out, "forward_adapted");
  return out;
}

Var forward_adapted(Var x, Var weight, std::optional<Var> bias, Var a, Var b, const LoraAdapter& adapter,
                    bool training, Rng* rng) {
  check_shapes(weight.value(), adapter);
  Var base = ad::linear(x, weight, bias);
  Var branch_in = x;
  if (training && adapter.dropout_p > 0.0) {
    if (!rng) throw ConfigError("forward_adapted: training with dropout requires an Rng");
    branch_in = ad::hadamard_const(x, dropout_mask(x.shape(), adapter.dropout_p, *rng));
  }
  Var update = ad::scale(ad::matmul_nt(ad::matmul_nt(branch_in, a), b), adapter.scaling());
  return ad::add(base, update);
}

Tensor merge(const Tensor& weight, const LoraAdapter& adapter) {
  check_shapes(weight, adapter);
  const Tensor delta = scale(matmul(adapter.B, adapter.A), adapter.scaling());
  Tensor out = weight;
  out.clear_grad();
  for (std::size_t i = 0; i < out.numel(); ++i) {
    if (delta[i] != 0.0) out[i] += delta[i];
  }
  require_finite(out, "merge");
  return out;
}

Tensor unmerge(const Tensor& merged, const LoraAdapter& adapter) {
  check_shapes(merged, adapter);
  const Tensor delta = scale(matmul(adapter.B, adapter.A), adapter.scaling());
  Tensor out = merged;
  out.clear_grad();
  for (std::size_t i = 0; i < out.numel(); ++i) {
    if (delta[i] != 0.0) out[i] -= delta[i];
  }
  return out;
}

ParameterSet merge_all(const ParameterSet& params, const AdapterSet& adapters) {
  ParameterSet out = params;
  for (const auto& [target, adapter] : adapters.adapters) {
    auto it = out.find(target);
    if (it == out.end()) throw ConfigError("adapter target '" + target + "' not present in checkpoint");
    const bool trainable = it->second.requires_grad();
    it->second = merge(it->second, adapter);
    it->second.set_requires_grad(trainable);
  }
  return out;
}

void bind(Tape& tape, const AdapterSet& adapters, VarMap& vars) {
  for (const auto& [target, adapter] : adapters.adapters) {
    vars.insert_or_assign(a_name(target), tape.leaf(adapter.A, adapter.A.requires_grad()));
    vars.insert_or_assign(b_name(target), tape.leaf(adapter.B, adapter.B.requires_grad()));
  }
}

std::map<std::string, Tensor*> trainable_tensors(AdapterSet& adapters) {
  std::map<std::string, Tensor*> out;
  for (auto& [target, adapter] : adapters.adapters) {
    out.emplace(a_name(target), &adapter.A);
    out.emplace(b_name(target), &adapter.B);
  }
  return out;
}

double gini(std::span<const double> values) {
  if (values.empty()) return 0.0;
  double total = 0.0, pair_diffs = 0.0;
  for (double v : values) total += v;
  if (total == 0.0) return 0.0;
  for (double a : values) {
    for (double b : values) pair_diffs += std::abs(a - b);
  }
  return pair_diffs / (2.0 * static_cast<double>(values.size()) * total);
}

std::vector<AdapterStats> sparsity_report(const AdapterSet& adapters) {
  std::vector<AdapterStats> report;
  for (const auto& [target, adapter] : adapters.adapters) {
    AdapterStats stats;
    stats.target_name = target;
    for (std::size_t k = 0; k < adapter.rank; ++k) {
      double bn = 0.0, an = 0.0;
      for (std::size_t i = 0; i < adapter.B.rows(); ++i) bn += adapter.B.at(i, k) * adapter.B.at(i, k);
      for (std::size_t j = 0; j < adapter.A.cols(); ++j) an += adapter.A.at(k, j) * adapter.A.at(k, j);
      stats.b_column_norms.push_back(std::sqrt(bn));
      stats.a_row_norms.push_back(std::sqrt(an));
      stats.component_norms.push_back(std::sqrt(bn) * std::sqrt(an));
    }
    stats.gini = gini(stats.component_norms);
    report.push_back(std::move(stats));
  }
  return report;
}

void save_adapters(const std::filesystem::path& path, const AdapterSet& adapters) {
  ParameterSet tensors;
  for (const auto& [target, adapter] : adapters.adapters) {
    tensors.emplace(a_name(target), adapter.A);
    tensors.emplace(b_name(target), adapter.B);
  }
  std::ostringstream alpha, dropout;
  alpha.precision(17);
  dropout.precision(17);
  alpha << adapters.config.alpha;
  dropout << adapters.config.dropout;
  save_checkpoint(path, tensors,
                  {{"kind", "lora"},
                   {"rank", std::to_string(adapters.config.rank)},
                   {"alpha", alpha.str()},
                   {"dropout", dropout.str()},
                   {"target_modules", join(adapters.config.target_modules)}});
}

AdapterSet load_adapters(const std::filesystem::path& path) {
  Checkpoint ckpt = load_checkpoint(path);
  auto header = [&](const std::string& key) -> const std::string& {
    auto it = ckpt.header.find(key);
    if (it == ckpt.header.end()) throw DataError("adapter file " + path.string() + " lacks header key '" + key + "'");
    return it->second;
  };
  AdapterSet out;
  try {
    out.config.rank = std::stoul(header("rank"));
    out.config.alpha = std::stod(header("alpha"));
    out.config.dropout = std::stod(header("dropout"));
  } catch (const std::logic_error&) {
    throw DataError("adapter file " + path.string() + " has a malformed numeric header");
  }
  out.config.target_modules.clear();
  std::istringstream targets(header("target_modules"));
  for (std::string t; std::getline(targets, t, ',');) out.config.target_modules.push_back(t);

  constexpr std::string_view kA = ".lora_A", kB = ".lora_B";
  for (auto& [name, tensor] : ckpt.tensors) {
    const bool is_a = name.ends_with(kA);
    if (!is_a && !name.ends_with(kB)) throw DataError("unexpected tensor '" + name + "' in adapter file");
    const std::string target = name.substr(0, name.size() - kA.size());
    LoraAdapter& adapter = out.adapters[target];
    adapter.target_name = target;
    adapter.rank = out.config.rank;
    adapter.alpha = out.config.alpha;
    adapter.dropout_p = out.config.dropout;
    tensor.set_requires_grad(true);
    (is_a ? adapter.A : adapter.B) = std::move(tensor);
  }
  for (const auto& [target, adapter] : out.adapters) {
    if (adapter.A.numel() == 0 || adapter.B.numel() == 0) {
      throw DataError("adapter '" + target + "' is missing its A or B matrix");
    }
  }
  return out;
}

}  // namespace univ::lora
