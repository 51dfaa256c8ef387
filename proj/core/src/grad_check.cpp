#include "univ/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "univ/error.hpp"
#include "univ/rng.hpp"

namespace univ {
namespace {

double evaluate(const ScalarFn& f, const Tensor& x) {
  Tape tape;
  Var v = tape.constant(x);
  const double y = f(tape, v).value().item();
  if (!std::isfinite(y)) throw NumericError("grad_check: non-finite function value");
  return y;
}

}  // namespace

double grad_check(const ScalarFn& f, const Tensor& x, const GradCheckOptions& options) {
  Tape tape;
  Var v = tape.leaf(x, true);
  Var y = f(tape, v);
  if (!std::isfinite(y.value().item())) throw NumericError("grad_check: non-finite function value");
  tape.backward(y);
  const auto g = tape.grad(v);
  std::vector<double> analytic(x.numel(), 0.0);
  std::copy(g.begin(), g.end(), analytic.begin());

  std::vector<std::size_t> coords(x.numel());
  std::iota(coords.begin(), coords.end(), 0);
  if (options.max_coords && *options.max_coords < coords.size()) {
    Rng rng(options.seed);
    for (std::size_t i = 0; i < *options.max_coords; ++i) {
      std::swap(coords[i], coords[i + rng.below(coords.size() - i)]);
    }
    coords.resize(*options.max_coords);
  }

  double worst = 0.0;
  Tensor probe = x;
  probe.clear_grad();
  for (std::size_t i : coords) {
    const double orig = probe[i];
    probe[i] = orig + options.step;
    const double up = evaluate(f, probe);
    probe[i] = orig - options.step;
    const double down = evaluate(f, probe);
    probe[i] = orig;
    const double numeric = (up - down) / (2.0 * options.step);
    worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric)));
  }
  return worst;
}

}  // namespace univ
