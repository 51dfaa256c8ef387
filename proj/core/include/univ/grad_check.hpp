#pragma once

#include <cstdint>
#include <functional>
#include <optional>

#include "univ/autograd.hpp"

namespace univ {

/// Builds a scalar on the given tape from the variable standing in for x.
using ScalarFn = std::function<Var(Tape&, Var)>;

struct GradCheckOptions {
  double step = 1e-5;
  /// Check only this many coordinates, chosen with `seed`; all when unset.
  std::optional<std::size_t> max_coords;
  std::uint64_t seed = 0;
};

/// Central finite differences against the tape gradient.
///
/// Returns max over checked coordinates of |analytic - numeric| / max(1, |numeric|).
/// Throws NumericError if f(x) is not finite.
double grad_check(const ScalarFn& f, const Tensor& x, const GradCheckOptions& options = {});

}  // namespace univ
