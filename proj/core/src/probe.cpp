#include "univ/probe.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <Eigen/Dense>

#include "univ/error.hpp"

namespace univ::train {

double linear_probe(const Tensor& features, std::span<const std::size_t> labels, const ProbeOptions& options) {
  if (features.rank() != 2) throw DimensionError("linear_probe: features must be a matrix, got " + shape_str(features.shape()));
  const std::size_t n = features.rows();
  const std::size_t d = features.cols();
  if (labels.size() != n) {
    throw DimensionError("linear_probe: " + std::to_string(n) + " feature rows vs " + std::to_string(labels.size()) +
                         " labels");
  }
  if (!(options.train_fraction > 0.0 && options.train_fraction < 1.0)) {
    throw ConfigError("linear_probe: train_fraction must lie in (0, 1)");
  }
  if (!(options.ridge >= 0.0)) throw ConfigError("linear_probe: ridge must be non-negative");
  const auto n_fit = static_cast<std::size_t>(std::floor(options.train_fraction * static_cast<double>(n)));
  if (n_fit == 0 || n_fit == n) throw ConfigError("linear_probe: both splits need at least one sample");

  const std::set<std::size_t> fit_classes(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n_fit));
  if (fit_classes.size() < 2) throw DegenerateInputError("linear_probe: fitting split contains a single class");
  const std::size_t num_classes = *std::max_element(labels.begin(), labels.end()) + 1;

  // Standardize with fitting-split statistics; drop constant columns.
  std::vector<std::size_t> kept;
  std::vector<double> mean, scale;
  for (std::size_t j = 0; j < d; ++j) {
    double mu = 0.0;
    for (std::size_t i = 0; i < n_fit; ++i) mu += features.at(i, j);
    mu /= static_cast<double>(n_fit);
    double var = 0.0;
    for (std::size_t i = 0; i < n_fit; ++i) var += (features.at(i, j) - mu) * (features.at(i, j) - mu);
    const double sd = std::sqrt(var / static_cast<double>(n_fit));
    if (sd > 1e-12 * (1.0 + std::abs(mu))) {
      kept.push_back(j);
      mean.push_back(mu);
      scale.push_back(1.0 / sd);
    }
  }

  const std::size_t k = kept.size() + 1;
  auto design = [&](std::size_t begin, std::size_t end) {
    Eigen::MatrixXd x(end - begin, k);
    for (std::size_t i = begin; i < end; ++i) {
      for (std::size_t c = 0; c < kept.size(); ++c) {
        x(i - begin, c) = (features.at(i, kept[c]) - mean[c]) * scale[c];
      }
      x(i - begin, k - 1) = 1.0;
    }
    return x;
  };

  const Eigen::MatrixXd x_fit = design(0, n_fit);
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(n_fit, num_classes);
  for (std::size_t i = 0; i < n_fit; ++i) y(i, labels[i]) = 1.0;

  Eigen::MatrixXd gram = x_fit.transpose() * x_fit;
  for (std::size_t c = 0; c + 1 < k; ++c) gram(c, c) += options.ridge * static_cast<double>(n_fit);
  const Eigen::MatrixXd w = gram.ldlt().solve(x_fit.transpose() * y);

  const Eigen::MatrixXd scores = design(n_fit, n) * w;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n - n_fit; ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < scores.cols(); ++c) {
      if (scores(i, c) > scores(i, best) + 1e-12) best = c;
    }
    if (static_cast<std::size_t>(best) == labels[n_fit + i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n - n_fit);
}

Tensor pooled_features(std::span<const data::LabeledSample> samples, ProbeModality modality,
                       const ParameterSet& params, const encoder::EncoderConfig& config,
                       const lora::AdapterSet* adapters) {
  Tensor out({samples.size(), config.dim});
  for (std::size_t s = 0; s < samples.size(); ++s) {
    const data::PairedSample& pair = samples[s].pair;
    const Tensor image = modality == ProbeModality::Visible ? pair.visible
                                                           : encoder::replicate_channels(pair.infrared, config.channels);
    const Tensor f = encoder::encode(image, params, config, adapters).features;
    for (std::size_t i = 0; i < f.rows(); ++i) {
      for (std::size_t j = 0; j < f.cols(); ++j) out.at(s, j) += f.at(i, j);
    }
    for (std::size_t j = 0; j < config.dim; ++j) out.at(s, j) /= static_cast<double>(f.rows());
  }
  return out;
}

ProbeScores probe_encoder(std::span<const data::LabeledSample> samples, const ParameterSet& params,
                          const encoder::EncoderConfig& config, const lora::AdapterSet* adapters,
                          const ProbeOptions& options) {
  std::vector<std::size_t> labels;
  labels.reserve(samples.size());
  for (const auto& s : samples) labels.push_back(s.label);
  ProbeScores scores;
  scores.visible =
      linear_probe(pooled_features(samples, ProbeModality::Visible, params, config, adapters), labels, options);
  scores.infrared =
      linear_probe(pooled_features(samples, ProbeModality::Infrared, params, config, adapters), labels, options);
  return scores;
}

}  // namespace univ::train
