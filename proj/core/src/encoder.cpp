#include "univ/encoder.hpp"

#include <cmath>
#include <string>

#include "univ/error.hpp"

namespace univ::encoder {
namespace {

constexpr double kInitStd = 0.02;

std::string block_name(std::size_t i) { return "block" + std::to_string(i); }

Tensor truncated_normal(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.truncated_normal(kInitStd);
  return t;
}

const Var& lookup(const VarMap& vars, const std::string& name) {
  auto it = vars.find(name);
  if (it == vars.end()) throw ConfigError("encoder parameter '" + name + "' is not bound");
  return it->second;
}

/// Linear layer "<prefix>.weight"/"<prefix>.bias", routed through an adapter when one targets the weight.
Var linear_layer(const VarMap& vars, const std::string& prefix, Var x, const ForwardOptions& options) {
  const std::string weight = prefix + ".weight";
  const Var& w = lookup(vars, weight);
  const Var& b = lookup(vars, prefix + ".bias");
  if (options.adapters) {
    auto it = options.adapters->adapters.find(weight);
    if (it != options.adapters->adapters.end()) {
      return lora::forward_adapted(x, w, b, lookup(vars, lora::a_name(weight)), lookup(vars, lora::b_name(weight)),
                                   it->second, options.training, options.rng);
    }
  }
  return ad::linear(x, w, b);
}

Var norm_layer(const VarMap& vars, const std::string& prefix, Var x) {
  return ad::layer_norm(x, lookup(vars, prefix + ".weight"), lookup(vars, prefix + ".bias"), kLayerNormEps);
}

}  // namespace

void EncoderConfig::validate() const {
  if (image_size == 0 || patch_size == 0 || channels == 0 || depth == 0 || dim == 0 || heads == 0 ||
      mlp_ratio == 0) {
    throw ConfigError("encoder sizes must all be positive");
  }
  if (image_size % patch_size != 0) {
    throw ConfigError("image_size " + std::to_string(image_size) + " is not divisible by patch_size " +
                      std::to_string(patch_size));
  }
  if (dim % heads != 0) {
    throw ConfigError("dim " + std::to_string(dim) + " is not divisible by heads " + std::to_string(heads));
  }
}

ParameterSet init_params(const EncoderConfig& config) {
  config.validate();
  Rng rng(config.seed);
  const std::size_t d = config.dim, h = config.hidden();
  ParameterSet p;
  p["embed.patch.weight"] = truncated_normal({d, config.patch_dim()}, rng);
  p["embed.patch.bias"] = Tensor({d});
  p["embed.pos.table"] = truncated_normal({config.num_patches(), d}, rng);
  for (std::size_t i = 0; i < config.depth; ++i) {
    const std::string b = block_name(i);
    p[b + ".norm1.weight"] = Tensor({d}, 1.0);
    p[b + ".norm1.bias"] = Tensor({d});
    p[b + ".qkv.weight"] = truncated_normal({3 * d, d}, rng);
    p[b + ".qkv.bias"] = Tensor({3 * d});
    p[b + ".proj.weight"] = truncated_normal({d, d}, rng);
    p[b + ".proj.bias"] = Tensor({d});
    p[b + ".norm2.weight"] = Tensor({d}, 1.0);
    p[b + ".norm2.bias"] = Tensor({d});
    p[b + ".fc1.weight"] = truncated_normal({h, d}, rng);
    p[b + ".fc1.bias"] = Tensor({h});
    p[b + ".fc2.weight"] = truncated_normal({d, h}, rng);
    p[b + ".fc2.bias"] = Tensor({d});
  }
  p["head.norm.weight"] = Tensor({d}, 1.0);
  p["head.norm.bias"] = Tensor({d});
  for (auto& [name, t] : p) t.set_requires_grad(true);
  return p;
}

void freeze(ParameterSet& params) {
  for (auto& [name, t] : params) t.set_requires_grad(false);
}

Tensor patchify(const Tensor& image, const EncoderConfig& config) {
  const std::size_t c = config.channels, s = config.image_size, p = config.patch_size, g = config.grid();
  if (image.shape() != Shape{c, s, s}) {
    throw ConfigError("encoder expects image " + shape_str({c, s, s}) + ", got " + shape_str(image.shape()));
  }
  Tensor out({g * g, config.patch_dim()});
  const auto src = image.data();
  for (std::size_t gy = 0; gy < g; ++gy) {
    for (std::size_t gx = 0; gx < g; ++gx) {
      const std::size_t row = gy * g + gx;
      std::size_t col = 0;
      for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t y = 0; y < p; ++y) {
          for (std::size_t x = 0; x < p; ++x) {
            out.at(row, col++) = src[(ch * s + gy * p + y) * s + gx * p + x];
          }
        }
      }
    }
  }
  return out;
}

Tensor replicate_channels(const Tensor& image, std::size_t channels) {
  if (image.rank() != 3 || image.shape()[0] != 1) {
    throw DimensionError("replicate_channels expects a [1×H×W] image, got " + shape_str(image.shape()));
  }
  const std::size_t plane = image.shape()[1] * image.shape()[2];
  Tensor out({channels, image.shape()[1], image.shape()[2]});
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t i = 0; i < plane; ++i) out[c * plane + i] = image[i];
  }
  return out;
}

VarMap bind(Tape& tape, const ParameterSet& params) {
  VarMap vars;
  for (const auto& [name, t] : params) vars.emplace(name, tape.leaf(t, t.requires_grad()));
  return vars;
}

TracedOutput encode(Tape& tape, const VarMap& vars, const EncoderConfig& config, const Tensor& image,
                    const ForwardOptions& options) {
  config.validate();
  const std::size_t n = config.num_patches(), dh = config.head_dim();
  Var patches = tape.constant(patchify(image, config));
  Var x = ad::add(linear_layer(vars, "embed.patch", patches, options), lookup(vars, "embed.pos.table"));

  Tensor attention_last({n, n});
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  for (std::size_t layer = 0; layer < config.depth; ++layer) {
    const std::string b = block_name(layer);
    Var qkv = linear_layer(vars, b + ".qkv", norm_layer(vars, b + ".norm1", x), options);
    std::vector<Var> head_outputs;
    head_outputs.reserve(config.heads);
    for (std::size_t h = 0; h < config.heads; ++h) {
      Var q = ad::slice_cols(qkv, h * dh, dh);
      Var k = ad::slice_cols(qkv, config.dim + h * dh, dh);
      Var v = ad::slice_cols(qkv, 2 * config.dim + h * dh, dh);
      Var attn = ad::softmax_rows(ad::scale(ad::matmul_nt(q, k), inv_sqrt_dh));
      if (layer + 1 == config.depth) {
        const Tensor& a = attn.value();
        for (std::size_t i = 0; i < n * n; ++i) attention_last[i] += a[i];
      }
      head_outputs.push_back(ad::matmul(attn, v));
    }
    x = ad::add(x, linear_layer(vars, b + ".proj", ad::concat_cols(head_outputs), options));
    Var hidden = ad::gelu(linear_layer(vars, b + ".fc1", norm_layer(vars, b + ".norm2", x), options));
    x = ad::add(x, linear_layer(vars, b + ".fc2", hidden, options));
  }
  for (double& v : attention_last.data()) v /= static_cast<double>(config.heads);
  return TracedOutput{norm_layer(vars, "head.norm", x), std::move(attention_last)};
}

EncoderOutput encode(const Tensor& image, const ParameterSet& params, const EncoderConfig& config,
                     const lora::AdapterSet* adapters) {
  Tape tape;
  VarMap vars;
  for (const auto& [name, t] : params) vars.emplace(name, tape.constant(t));
  if (adapters) {
    for (const auto& [target, adapter] : adapters->adapters) {
      vars.insert_or_assign(lora::a_name(target), tape.constant(adapter.A));
      vars.insert_or_assign(lora::b_name(target), tape.constant(adapter.B));
    }
  }
  ForwardOptions options;
  options.adapters = adapters;
  TracedOutput traced = encode(tape, vars, config, image, options);
  return EncoderOutput{traced.features.value(), std::move(traced.attention_last)};
}

}  // namespace univ::encoder
