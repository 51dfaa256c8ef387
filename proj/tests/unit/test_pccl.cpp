#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <numeric>

#include "oracles.hpp"
#include "univ/error.hpp"
#include "univ/grad_check.hpp"
#include "univ/pccl.hpp"
#include "univ/tensor_ops.hpp"

namespace univ::pccl {
namespace {

SimilarityMatrix wrap(Tensor t) { return SimilarityMatrix{std::move(t), kDefaultTau, SimilarityKind::CrossModal}; }

PseudoLabelMatrix labels_from(Tensor t) {
  PseudoLabelMatrix p;
  p.values = std::move(t);
  return p;
}

Tensor permute(const Tensor& a, const std::vector<std::size_t>& perm) {
  // out[i][j] = a[perm[i]][perm[j]]
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) out.at(i, j) = a.at(perm[i], perm[j]);
  }
  return out;
}

TEST(Similarity, OrthonormalSelfSimilarityAtDefaultTau) {
  const Tensor e = Tensor::matrix({{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}});
  const SimilarityMatrix s = similarity(e, e, 0.04);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(s.values.at(i, j), i == j ? 25.0 : 0.0, 1e-12);
  }
}

TEST(Similarity, HalvingTauDoublesExactly) {
  Rng rng(1);
  const Tensor a = oracle::random_matrix(rng, 5, 8);
  const Tensor b = oracle::random_matrix(rng, 5, 8);
  const Tensor s1 = similarity(a, b, 0.04).values;
  const Tensor s2 = similarity(a, b, 0.02).values;
  const Tensor s3 = similarity(a, b, 0.08).values;
  for (std::size_t i = 0; i < s1.numel(); ++i) {
    EXPECT_EQ(s2[i], 2.0 * s1[i]);
    EXPECT_EQ(s3[i], 0.5 * s1[i]);
  }
}

TEST(Similarity, MatchesDoubleLoopAndStaysInRange) {
  for (int trial = 0; trial < 50; ++trial) {
    Rng rng(trial);
    const Tensor a = oracle::random_matrix(rng, 5, 8);
    const Tensor b = oracle::random_matrix(rng, 5, 8);
    const Tensor s = similarity(a, b, 0.04).values;
    const Tensor ref = oracle::cosine(a, b);
    for (std::size_t i = 0; i < s.numel(); ++i) {
      EXPECT_NEAR(s[i], ref[i] / 0.04, 1e-12 / 0.04);
      EXPECT_LE(std::abs(s[i]), 25.0);
    }
  }
}

TEST(Similarity, IntraVisibleSelfIsSymmetricWithDiagonalOneOverTau) {
  Rng rng(4);
  const Tensor f = oracle::random_matrix(rng, 6, 5);
  const SimilarityMatrix s = similarity(f, f, 0.04, SimilarityKind::IntraVisible);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_NEAR(s.values.at(i, i), 25.0, 1e-9);
    for (std::size_t j = 0; j < 6; ++j) EXPECT_NEAR(s.values.at(i, j), s.values.at(j, i), 1e-12);
  }
}

TEST(Similarity, RejectsBadTauAndZeroRows) {
  const Tensor a = Tensor::matrix({{1, 0}, {0, 1}});
  EXPECT_THROW(similarity(a, a, 0.0), ConfigError);
  EXPECT_THROW(similarity(a, a, -1.0), ConfigError);
  EXPECT_THROW(similarity(a, Tensor::matrix({{1, 0}, {0, 0}}), 0.04), DegenerateInputError);
}

TEST(PseudoLabels, UniformRowSelectsThreeOfFour) {
  const PseudoLabelMatrix p = pseudo_labels(Tensor({4, 4}, 0.25), 0.6);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(p.selected_count[i], 3u);
    double ones = 0.0;
    for (std::size_t j = 0; j < 4; ++j) ones += p.values.at(i, j);
    // Lower indices win ties: columns 0..2, plus the diagonal.
    EXPECT_EQ(ones, i < 3 ? 3.0 : 4.0);
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(p.values.at(i, j), 1.0);
    EXPECT_EQ(p.values.at(i, i), 1.0);
  }
}

TEST(PseudoLabels, DominantEntryAloneExceedsGamma) {
  Tensor a({4, 4}, 0.25);
  a.at(3, 0) = 0.7;
  a.at(3, 1) = 0.2;
  a.at(3, 2) = 0.05;
  a.at(3, 3) = 0.05;
  const PseudoLabelMatrix p = pseudo_labels(a, 0.6);
  EXPECT_EQ(p.selected_count[3], 1u);
  EXPECT_EQ(p.values.at(3, 0), 1.0);
  EXPECT_EQ(p.values.at(3, 1), 0.0);
  EXPECT_EQ(p.values.at(3, 2), 0.0);
  EXPECT_EQ(p.values.at(3, 3), 1.0);
}

TEST(PseudoLabels, EqualityDoesNotStopSelection) {
  // 0.5 + 0.25 = 0.75 exactly; with gamma 0.75 a third entry is needed.
  const Tensor a = Tensor::matrix({{0.5, 0.25, 0.125, 0.125}, {0.25, 0.25, 0.25, 0.25},
                                   {0.25, 0.25, 0.25, 0.25}, {0.25, 0.25, 0.25, 0.25}});
  EXPECT_EQ(pseudo_labels(a, 0.75).selected_count[0], 3u);
}

TEST(PseudoLabels, MatchesExhaustiveOracle) {
  for (int trial = 0; trial < 200; ++trial) {
    Rng rng(Rng::derive(77, trial));
    const std::size_t n = 1 + rng.below(16);
    const Tensor a = oracle::random_stochastic(rng, n, trial % 2 == 0);
    for (double gamma : {0.3, 0.6}) {
      std::vector<std::size_t> m;
      const Tensor expected = oracle::exhaustive_pseudo_labels(a, gamma, &m);
      const PseudoLabelMatrix p = pseudo_labels(a, gamma);
      ASSERT_EQ(p.values, expected) << "trial " << trial << " gamma " << gamma;
      ASSERT_EQ(p.selected_count, m);
    }
  }
}

TEST(PseudoLabels, MinimalityAndBinaryValues) {
  for (int trial = 0; trial < 100; ++trial) {
    Rng rng(Rng::derive(5, trial));
    const std::size_t n = 2 + rng.below(15);
    const Tensor a = oracle::random_stochastic(rng, n, false);
    const double gamma = rng.uniform(0.05, 0.95);
    const PseudoLabelMatrix p = pseudo_labels(a, gamma);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> row(n);
      for (std::size_t j = 0; j < n; ++j) row[j] = a.at(i, j);
      std::sort(row.begin(), row.end(), std::greater<>());
      const std::size_t m = p.selected_count[i];
      const double top_m = std::accumulate(row.begin(), row.begin() + m, 0.0);
      const double top_m1 = std::accumulate(row.begin(), row.begin() + (m - 1), 0.0);
      EXPECT_GT(top_m, gamma);
      EXPECT_LE(top_m1, gamma);
      EXPECT_EQ(p.values.at(i, i), 1.0);
      for (std::size_t j = 0; j < n; ++j) EXPECT_TRUE(p.values.at(i, j) == 0.0 || p.values.at(i, j) == 1.0);
    }
  }
}

TEST(PseudoLabels, MonotoneInGamma) {
  for (int trial = 0; trial < 100; ++trial) {
    Rng rng(Rng::derive(9, trial));
    const std::size_t n = 2 + rng.below(15);
    const Tensor a = oracle::random_stochastic(rng, n, trial % 3 == 0);
    double g1 = rng.uniform(0.01, 0.99), g2 = rng.uniform(0.01, 0.99);
    if (g1 > g2) std::swap(g1, g2);
    const Tensor p1 = pseudo_labels(a, g1).values;
    const Tensor p2 = pseudo_labels(a, g2).values;
    for (std::size_t i = 0; i < p1.numel(); ++i) EXPECT_LE(p1[i], p2[i]);
  }
}

TEST(PseudoLabels, PermutationEquivariance) {
  for (int trial = 0; trial < 100; ++trial) {
    Rng rng(Rng::derive(13, trial));
    const std::size_t n = 2 + rng.below(15);
    // Continuous entries: no ties, so the tie-break rule cannot interfere.
    const Tensor a = oracle::random_stochastic(rng, n, false);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
    const Tensor lhs = pseudo_labels(permute(a, perm), 0.6).values;
    const Tensor rhs = permute(pseudo_labels(a, 0.6).values, perm);
    EXPECT_EQ(lhs, rhs);
    // With ties the oracle, run in the permuted coordinates, is the reference.
    const Tensor tied = permute(oracle::random_stochastic(rng, n, true), perm);
    EXPECT_EQ(pseudo_labels(tied, 0.6).values, oracle::exhaustive_pseudo_labels(tied, 0.6));
  }
}

TEST(PseudoLabels, RejectsBadInput) {
  EXPECT_THROW(pseudo_labels(Tensor({3, 3}, 0.3), 0.6), DegenerateInputError);
  EXPECT_THROW(pseudo_labels(Tensor({3, 3}, 1.0 / 3.0), 0.0), ConfigError);
  EXPECT_THROW(pseudo_labels(Tensor({3, 3}, 1.0 / 3.0), 1.0), ConfigError);
  EXPECT_THROW(pseudo_labels(Tensor({2, 3}, 1.0 / 3.0), 0.6), DimensionError);
  Tensor neg = Tensor::matrix({{1.2, -0.2}, {0.5, 0.5}});
  EXPECT_THROW(pseudo_labels(neg, 0.6), DegenerateInputError);
}

TEST(LossIv, ZeroSimilarityIsLn2) {
  Rng rng(2);
  const PseudoLabelMatrix p = pseudo_labels(oracle::random_stochastic(rng, 6, false), 0.6);
  EXPECT_NEAR(loss_iv(wrap(Tensor({6, 6})), p), std::numbers::ln2, 1e-15);
  EXPECT_NEAR(loss_vv(wrap(Tensor({6, 6})), p), std::numbers::ln2, 1e-15);
}

TEST(LossIv, SaturatedAgreementIsNearZero) {
  Rng rng(3);
  const PseudoLabelMatrix p = pseudo_labels(oracle::random_stochastic(rng, 6, false), 0.6);
  Tensor s({6, 6});
  for (std::size_t i = 0; i < s.numel(); ++i) s[i] = p.values[i] == 1.0 ? 40.0 : -40.0;
  EXPECT_LT(loss_iv(wrap(s), p), 1e-15);
  EXPECT_LT(loss_vv(wrap(s), p), 1e-15);
}

TEST(LossIv, MatchesNaiveOracle) {
  for (int trial = 0; trial < 50; ++trial) {
    Rng rng(trial);
    const Tensor s = oracle::random_matrix(rng, 7, 7, -25.0, 25.0);
    const PseudoLabelMatrix p = pseudo_labels(oracle::random_stochastic(rng, 7, false), 0.6);
    const double ref = oracle::bce(s, p.values);
    EXPECT_NEAR(loss_iv(wrap(s), p), ref, 1e-10 * ref);
    EXPECT_NEAR(loss_vv(wrap(s), p), ref, 1e-10 * ref);
  }
}

TEST(LossIv, ShapeMismatch) {
  const PseudoLabelMatrix p = pseudo_labels(Tensor({4, 4}, 0.25), 0.6);
  EXPECT_THROW(loss_iv(wrap(Tensor({3, 3})), p), DimensionError);
}

TEST(LossPccl, Combination) {
  EXPECT_EQ(loss_pccl(0.3, 0.5, 1.0, 0.0), 0.3);
  EXPECT_DOUBLE_EQ(loss_pccl(0.3, 0.5, 1.0, 1.0), 0.8);
  EXPECT_THROW(loss_pccl(0.3, 0.5, -1.0, 1.0), ConfigError);
  EXPECT_THROW(loss_pccl(0.3, 0.5, 1.0, -0.1), ConfigError);
}

TEST(LossPccl, GradientIsWeightedSumOfTermGradients) {
  Rng rng(21);
  const Tensor fi = oracle::random_matrix(rng, 5, 4);
  const Tensor fv = oracle::random_matrix(rng, 5, 4);
  const Tensor ft = oracle::random_matrix(rng, 5, 4);
  const PseudoLabelMatrix p = pseudo_labels(oracle::random_stochastic(rng, 5, false), 0.6);
  const double alpha = 0.7, beta = 1.3;
  auto total = [&](Tape& t, Var x) {
    Var s_iv = similarity(x, t.constant(ft), 0.5);
    Var s_vv = similarity(t.constant(fv), t.constant(ft), 0.5);
    return loss_pccl(loss_iv(s_iv, p), loss_vv(s_vv, p), alpha, beta);
  };
  EXPECT_LT(grad_check(total, fi), 1e-5);

  // Analytic: the combined gradient is alpha times the l_iv gradient.
  Tape t1, t2;
  Var x1 = t1.leaf(fi, true), x2 = t2.leaf(fi, true);
  t1.backward(total(t1, x1));
  t2.backward(loss_iv(similarity(x2, t2.constant(ft), 0.5), p));
  for (std::size_t i = 0; i < fi.numel(); ++i) EXPECT_NEAR(t1.grad(x1)[i], alpha * t2.grad(x2)[i], 1e-14);
}

TEST(LossMse, Examples) {
  Rng rng(6);
  const Tensor f = oracle::random_matrix(rng, 4, 3);
  EXPECT_EQ(loss_mse(f, f, f), 0.0);
  Tensor shifted = f;
  for (auto& v : shifted.data()) v += 1.0;
  EXPECT_NEAR(loss_mse(shifted, f, f), 1.0, 1e-15);
  EXPECT_THROW(loss_mse(f, Tensor({4, 2}), f), DimensionError);
}

TEST(LossMse, MatchesNaiveOracle) {
  for (int trial = 0; trial < 50; ++trial) {
    Rng rng(trial);
    const Tensor a = oracle::random_matrix(rng, 6, 5), b = oracle::random_matrix(rng, 6, 5);
    const Tensor c = oracle::random_matrix(rng, 6, 5);
    const double ref = oracle::mean_sq(a, c) + oracle::mean_sq(b, c);
    EXPECT_NEAR(loss_mse(a, b, c), ref, 1e-12 * ref);
  }
}

TEST(LossNce, UniformMatricesGiveTwoLnN) {
  for (std::size_t n : {1u, 4u, 16u}) {
    EXPECT_NEAR(loss_nce(wrap(Tensor({n, n}, 3.0)), wrap(Tensor({n, n}, -2.0))), 2.0 * std::log(double(n)), 1e-10);
  }
}

TEST(LossNce, SaturatedDiagonalIsNearZero) {
  Tensor s({5, 5}, -40.0);
  for (std::size_t i = 0; i < 5; ++i) s.at(i, i) = 40.0;
  EXPECT_LT(loss_nce(wrap(s), wrap(s)), 1e-15);
}

TEST(LossNce, MatchesNaiveOracle) {
  for (int trial = 0; trial < 50; ++trial) {
    Rng rng(trial);
    const Tensor a = oracle::random_matrix(rng, 6, 6, -25.0, 25.0);
    const Tensor b = oracle::random_matrix(rng, 6, 6, -25.0, 25.0);
    const double ref = oracle::diagonal_ce(a) + oracle::diagonal_ce(b);
    EXPECT_NEAR(loss_nce(wrap(a), wrap(b)), ref, 1e-10 * ref);
  }
  EXPECT_THROW(loss_nce(wrap(Tensor({2, 3})), wrap(Tensor({2, 2}))), DimensionError);
}

TEST(LossNce, IdentityLabelsBceDiffersFromSoftmaxCe) {
  // Same targets, different losses: only the saturated optimum is shared.
  Rng rng(30);
  const Tensor s = oracle::random_matrix(rng, 4, 4, -3.0, 3.0);
  const PseudoLabelMatrix eye = labels_from(Tensor::identity(4));
  EXPECT_GT(std::abs(loss_iv(wrap(s), eye) - 0.5 * loss_nce(wrap(s), wrap(s))), 1e-3);
}

TEST(LossVariantSoftmax, AllOnesIsZero) {
  Rng rng(8);
  const Tensor s = oracle::random_matrix(rng, 5, 5, -25.0, 25.0);
  EXPECT_NEAR(loss_variant_softmax(wrap(s), labels_from(Tensor({5, 5}, 1.0))), 0.0, 1e-15);
}

TEST(LossVariantSoftmax, IdentityOnUniformIsLnN) {
  EXPECT_NEAR(loss_variant_softmax(wrap(Tensor({7, 7}, 1.5)), labels_from(Tensor::identity(7))), std::log(7.0), 1e-14);
}

TEST(LossVariantSoftmax, MatchesNaiveOracle) {
  for (int trial = 0; trial < 50; ++trial) {
    Rng rng(trial);
    const Tensor s = oracle::random_matrix(rng, 6, 6, -25.0, 25.0);
    const PseudoLabelMatrix p = pseudo_labels(oracle::random_stochastic(rng, 6, trial % 2 == 0), 0.6);
    const double ref = oracle::softmax_mass_loss(s, p.values);
    EXPECT_NEAR(loss_variant_softmax(wrap(s), p), ref, 1e-10 * std::max(ref, 1e-3));
  }
}

TEST(Losses, NonNegativeFiniteAndDifferentiable) {
  for (int trial = 0; trial < 100; ++trial) {
    Rng rng(Rng::derive(31, trial));
    const Tensor fa = oracle::random_matrix(rng, 4, 3);
    const Tensor fb = oracle::random_matrix(rng, 4, 3);
    const Tensor ft = oracle::random_matrix(rng, 4, 3);
    const PseudoLabelMatrix p = pseudo_labels(oracle::random_stochastic(rng, 4, false), 0.6);
    const double tau = 0.25;
    auto s = [&](Tape& t, Var x) { return similarity(x, t.constant(ft), tau); };
    const std::vector<ScalarFn> fns = {
        [&](Tape& t, Var x) { return loss_iv(s(t, x), p); },
        [&](Tape& t, Var x) { return loss_variant_softmax(s(t, x), p); },
        [&](Tape& t, Var x) { return loss_nce(s(t, x), similarity(t.constant(fb), t.constant(ft), tau)); },
        [&](Tape& t, Var x) { return loss_mse(x, t.constant(fb), t.constant(ft)); },
    };
    for (const auto& f : fns) {
      Tape tape;
      const double v = f(tape, tape.constant(fa)).value().item();
      EXPECT_TRUE(std::isfinite(v));
      EXPECT_GE(v, 0.0);
      EXPECT_LT(grad_check(f, fa), 1e-5);
    }
  }
}

TEST(LossKind, RoundTripsNames) {
  for (LossKind k : {LossKind::Pccl, LossKind::PcclSoftmaxVariant, LossKind::Mse, LossKind::Nce}) {
    EXPECT_EQ(parse_loss_kind(to_string(k)), k);
  }
  EXPECT_THROW(parse_loss_kind("infonce"), ConfigError);
}

}  // namespace
}  // namespace univ::pccl
