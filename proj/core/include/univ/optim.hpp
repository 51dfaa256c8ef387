#pragma once

#include <cstddef>
#include <map>
#include <string>

#include "univ/tensor.hpp"

namespace univ::train {

/// Linear warmup from 0 to base_lr over warmup_steps, then cosine decay to 0 at total_steps.
struct Schedule {
  std::size_t warmup_steps = 0;
  std::size_t total_steps = 1;
  double base_lr = 1.5e-4;
};

double lr_at(std::size_t step, const Schedule& schedule);

/// Same schedule at a fractional step; lr_at(s) == lr_at_time(s) for integral s.
double lr_at_time(double t, const Schedule& schedule);

/// Adam with decoupled weight decay. Moments are keyed by parameter name.
///
/// Decay applies to matrices (rank ≥ 2) except position tables; vectors such
/// as biases and LayerNorm gains are not decayed.
class AdamW {
 public:
  AdamW(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8, double weight_decay = 0.05);

  /// One update from each tensor's accumulated gradient. Tensors without a
  /// gradient buffer are treated as having zero gradient.
  void step(const std::map<std::string, Tensor*>& params, double lr);

  std::size_t steps() const { return t_; }
  const std::map<std::string, Tensor>& first_moments() const { return m_; }
  const std::map<std::string, Tensor>& second_moments() const { return v_; }

 private:
  double beta1_, beta2_, eps_, weight_decay_;
  std::size_t t_ = 0;
  std::map<std::string, Tensor> m_;
  std::map<std::string, Tensor> v_;
};

}  // namespace univ::train
