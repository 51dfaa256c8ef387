#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace univ {

/// Seeded generator with distribution code of our own so that sequences are
/// identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n);

  double normal();

  /// Normal(0, std) rejected outside [-2 std, 2 std].
  double truncated_normal(double std);

  bool bernoulli(double p) { return uniform() < p; }

  /// Independent child stream derived from this generator's seed material.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace univ
