#include "univ/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "univ/error.hpp"

namespace univ::train {

double lr_at_time(double t, const Schedule& schedule) {
  const double total = static_cast<double>(schedule.total_steps);
  const double warmup = static_cast<double>(std::min(schedule.warmup_steps, schedule.total_steps));
  if (t < 0.0) throw ConfigError("learning-rate step must be non-negative");
  if (t < warmup) return schedule.base_lr * t / warmup;
  if (t >= total) return 0.0;
  const double progress = (t - warmup) / (total - warmup);
  return schedule.base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

double lr_at(std::size_t step, const Schedule& schedule) { return lr_at_time(static_cast<double>(step), schedule); }

AdamW::AdamW(double beta1, double beta2, double eps, double weight_decay)
    : beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("AdamW betas must lie in [0, 1)");
  }
  if (!(eps > 0.0) || weight_decay < 0.0) throw ConfigError("AdamW eps must be positive and weight decay non-negative");
}

void AdamW::step(const std::map<std::string, Tensor*>& params, double lr) {
  ++t_;
  const double bias1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bias2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (const auto& [name, p] : params) {
    auto [mit, m_new] = m_.try_emplace(name, p->shape());
    auto [vit, v_new] = v_.try_emplace(name, p->shape());
    Tensor& m = mit->second;
    Tensor& v = vit->second;
    const bool decay = p->rank() >= 2 && name.find(".pos.") == std::string::npos;
    const auto g = p->grad();
    for (std::size_t i = 0; i < p->numel(); ++i) {
      const double gi = g[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * gi;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * gi * gi;
      const double update = (m[i] / bias1) / (std::sqrt(v[i] / bias2) + eps_);
      double& w = (*p)[i];
      if (decay) w -= lr * weight_decay_ * w;
      w -= lr * update;
    }
    if (!p->all_finite()) throw NumericError("AdamW produced a non-finite value in '" + name + "'");
  }
}

}  // namespace univ::train
