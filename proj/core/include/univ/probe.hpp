#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "univ/data.hpp"
#include "univ/encoder.hpp"
#include "univ/lora.hpp"
#include "univ/tensor.hpp"

namespace univ::train {

struct ProbeOptions {
  /// Leading fraction of the samples used to fit; the rest is held out.
  double train_fraction = 0.5;
  double ridge = 1e-3;
};

/// Closed-form ridge regression onto one-hot labels over standardized
/// features plus a bias; predicts by argmax. Returns held-out accuracy.
///
/// Throws DegenerateInputError if the fitting split holds a single class and
/// ConfigError if either split is empty. Feature columns with zero variance
/// carry no information and are dropped, so constant features give the
/// majority-class prior of the fitting split.
double linear_probe(const Tensor& features, std::span<const std::size_t> labels, const ProbeOptions& options = {});

enum class ProbeModality { Visible, Infrared };

/// Mean over patches of the encoder features, one row per sample.
Tensor pooled_features(std::span<const data::LabeledSample> samples, ProbeModality modality,
                       const ParameterSet& params, const encoder::EncoderConfig& config,
                       const lora::AdapterSet* adapters = nullptr);

struct ProbeScores {
  double visible = 0.0;
  double infrared = 0.0;
};

ProbeScores probe_encoder(std::span<const data::LabeledSample> samples, const ParameterSet& params,
                          const encoder::EncoderConfig& config, const lora::AdapterSet* adapters = nullptr,
                          const ProbeOptions& options = {});

}  // namespace univ::train
