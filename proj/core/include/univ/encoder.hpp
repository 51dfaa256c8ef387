#pragma once

#include <cstdint>

#include "univ/autograd.hpp"
#include "univ/lora.hpp"
#include "univ/rng.hpp"
#include "univ/tensor.hpp"

// Miniature patch transformer. Tokens are the N non-overlapping patches in
// row-major order; there is no class token, so every attention map is N×N.
//
// Parameter names:
//   embed.patch.{weight,bias}   [dim × C·p²], [dim]
//   embed.pos.table             [N × dim]
//   block<i>.norm1.{weight,bias}, block<i>.qkv.{weight,bias},
//   block<i>.proj.{weight,bias}, block<i>.norm2.{weight,bias},
//   block<i>.fc1.{weight,bias}, block<i>.fc2.{weight,bias}
//   head.norm.{weight,bias}

namespace univ::encoder {

inline constexpr double kLayerNormEps = 1e-6;

struct EncoderConfig {
  std::size_t image_size = 16;
  std::size_t patch_size = 4;
  std::size_t channels = 3;
  std::size_t depth = 2;
  std::size_t dim = 32;
  std::size_t heads = 4;
  std::size_t mlp_ratio = 4;
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t grid() const { return image_size / patch_size; }
  std::size_t num_patches() const { return grid() * grid(); }
  std::size_t patch_dim() const { return channels * patch_size * patch_size; }
  std::size_t head_dim() const { return dim / heads; }
  std::size_t hidden() const { return dim * mlp_ratio; }
};

/// Truncated-normal weights (std 0.02), zero biases, unit LayerNorm gains.
/// Every tensor starts trainable.
ParameterSet init_params(const EncoderConfig& config);

void freeze(ParameterSet& params);

/// [C×H×W] image to [N × C·p²] patch rows, channel-major inside each patch.
Tensor patchify(const Tensor& image, const EncoderConfig& config);

/// Tiles a single-channel image across `channels` channels.
Tensor replicate_channels(const Tensor& image, std::size_t channels);

/// One leaf per parameter; leaves require gradients iff the tensor does.
VarMap bind(Tape& tape, const ParameterSet& params);

struct ForwardOptions {
  const lora::AdapterSet* adapters = nullptr;
  bool training = false;
  Rng* rng = nullptr;  // dropout in adapter branches when training
};

struct TracedOutput {
  Var features;            // [N × dim], after the final LayerNorm
  Tensor attention_last;   // [N × N], head-averaged, not differentiable
};

/// Forward on a tape. `vars` must hold every parameter (and adapter leaves when
/// options.adapters is set). Throws ConfigError if the image shape does not match.
TracedOutput encode(Tape& tape, const VarMap& vars, const EncoderConfig& config, const Tensor& image,
                    const ForwardOptions& options = {});

struct EncoderOutput {
  Tensor features;
  Tensor attention_last;
};

/// Gradient-free forward in eval mode.
EncoderOutput encode(const Tensor& image, const ParameterSet& params, const EncoderConfig& config,
                     const lora::AdapterSet* adapters = nullptr);

}  // namespace univ::encoder
