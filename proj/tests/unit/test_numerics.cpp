#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <numbers>

#include "oracles.hpp"
#include "univ/autograd.hpp"
#include "univ/error.hpp"
#include "univ/grad_check.hpp"
#include "univ/tensor_ops.hpp"

namespace univ {
namespace {

constexpr int kTrials = 100;
constexpr double kOpTolerance = 1e-5;

// Generic scalar readout: sum of the op's output weighted by fixed random values.
Var readout(Var y, const Tensor& weights) { return ad::sum(ad::hadamard_const(y, weights)); }

Tensor weights_like(Rng& rng, const Shape& shape) {
  Tensor w(shape);
  for (auto& v : w.data()) v = rng.uniform(-1.0, 1.0);
  return w;
}

// Runs `trials` finite-difference checks of a unary op on random inputs of the given shape.
void check_unary(const char* name, Shape shape, const std::function<Var(Tape&, Var)>& op, double lo = -1.0,
                 double hi = 1.0) {
  double worst = 0.0;
  for (int trial = 0; trial < kTrials; ++trial) {
    Rng rng(Rng::derive(0xC0FFEE, trial));
    Tensor x(shape);
    for (auto& v : x.data()) v = rng.uniform(lo, hi);
    Tape probe;
    const Shape out_shape = op(probe, probe.constant(x)).value().shape();
    const Tensor w = weights_like(rng, out_shape);
    worst = std::max(worst, grad_check([&](Tape& t, Var v) { return readout(op(t, v), w); }, x));
  }
  EXPECT_LT(worst, kOpTolerance) << name;
}

TEST(Matmul, IdentityTimesIdentity) { EXPECT_EQ(matmul(Tensor::identity(2), Tensor::identity(2)), Tensor::identity(2)); }

TEST(Matmul, SmallProduct) {
  EXPECT_EQ(matmul(Tensor::matrix({{1, 2}, {3, 4}}), Tensor::matrix({{0}, {1}})), Tensor::matrix({{2}, {4}}));
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  try {
    matmul(Tensor({2, 3}), Tensor({2, 3}));
    FAIL();
  } catch (const DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("[2x3] vs [2x3]"), std::string::npos) << e.what();
  }
}

TEST(Matmul, TransposedVariantsAgree) {
  Rng rng(3);
  const Tensor a = oracle::random_matrix(rng, 3, 4);
  const Tensor b = oracle::random_matrix(rng, 5, 4);
  const Tensor c = oracle::random_matrix(rng, 3, 5);
  EXPECT_LT(max_abs_diff(matmul_nt(a, b), matmul(a, transpose(b))), 1e-15);
  EXPECT_LT(max_abs_diff(matmul_tn(a, c), matmul(transpose(a), c)), 1e-15);
}

TEST(Matmul, BackwardMatchesFiniteDifferences) {
  Rng rng(11);
  const Tensor a = oracle::random_matrix(rng, 3, 4);
  const Tensor b = oracle::random_matrix(rng, 4, 2);
  const Tensor w = oracle::random_matrix(rng, 3, 2);
  EXPECT_LT(grad_check([&](Tape& t, Var x) { return readout(ad::matmul(x, t.constant(b)), w); }, a), 1e-6);
  EXPECT_LT(grad_check([&](Tape& t, Var x) { return readout(ad::matmul(t.constant(a), x), w); }, b), 1e-6);
}

TEST(SoftmaxRows, UniformRow) {
  const Tensor s = softmax_rows(Tensor({1, 4}));
  for (std::size_t j = 0; j < 4; ++j) EXPECT_DOUBLE_EQ(s.at(0, j), 0.25);
}

TEST(SoftmaxRows, LogOneLogThree) {
  const Tensor s = softmax_rows(Tensor::matrix({{std::log(1.0), std::log(3.0)}}));
  EXPECT_NEAR(s.at(0, 0), 0.25, 1e-15);
  EXPECT_NEAR(s.at(0, 1), 0.75, 1e-15);
}

TEST(SoftmaxRows, RowsSumToOneAndStayPositive) {
  for (int trial = 0; trial < kTrials; ++trial) {
    Rng rng(trial);
    const Tensor s = softmax_rows(oracle::random_matrix(rng, 8, 8, -30.0, 30.0));
    for (std::size_t i = 0; i < 8; ++i) {
      double total = 0.0;
      for (std::size_t j = 0; j < 8; ++j) {
        EXPECT_GT(s.at(i, j), 0.0);
        total += s.at(i, j);
      }
      EXPECT_NEAR(total, 1.0, 1e-12);
    }
  }
}

TEST(SoftmaxRows, MonotoneInInput) {
  Rng rng(5);
  Tensor x = oracle::random_matrix(rng, 1, 6);
  const Tensor before = softmax_rows(x);
  x.at(0, 2) += 0.5;
  const Tensor after = softmax_rows(x);
  EXPECT_GT(after.at(0, 2), before.at(0, 2));
  for (std::size_t j = 0; j < 6; ++j) {
    if (j != 2) {
      EXPECT_LT(after.at(0, j), before.at(0, j));
    }
  }
}

TEST(SoftmaxRows, LargeLogitsDoNotOverflow) {
  const Tensor s = softmax_rows(Tensor::matrix({{1000.0, 1000.0}}));
  EXPECT_DOUBLE_EQ(s.at(0, 0), 0.5);
}

TEST(CosineRows, OrthonormalSelfSimilarityIsIdentity) {
  const Tensor e = Tensor::matrix({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  EXPECT_LT(max_abs_diff(cosine_rows(e, e), Tensor::identity(3)), 1e-15);
}

TEST(CosineRows, NegatedRowsGiveMinusOneDiagonal) {
  Rng rng(8);
  const Tensor a = oracle::random_matrix(rng, 5, 3);
  const Tensor c = cosine_rows(a, scale(a, -1.0));
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(c.at(i, i), -1.0, 1e-15);
}

TEST(CosineRows, MatchesDoubleLoop) {
  for (int trial = 0; trial < kTrials; ++trial) {
    Rng rng(trial);
    const Tensor a = oracle::random_matrix(rng, 4, 3);
    const Tensor b = oracle::random_matrix(rng, 4, 3);
    const Tensor c = cosine_rows(a, b);
    EXPECT_LT(max_abs_diff(c, oracle::cosine(a, b)), 1e-12);
    for (double v : c.data()) {
      EXPECT_GE(v, -1.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(CosineRows, ZeroRowIsNamed) {
  Tensor a = Tensor::matrix({{1, 2}, {0, 0}, {3, 1}});
  try {
    cosine_rows(Tensor::matrix({{1, 1}, {1, 2}}), a);
    FAIL();
  } catch (const DegenerateInputError& e) {
    EXPECT_NE(std::string(e.what()).find("row 1"), std::string::npos) << e.what();
  }
}

TEST(BceWithLogits, ZeroLogitIsLn2ForEitherTarget) {
  EXPECT_NEAR(bce_with_logits(Tensor({1, 1}), Tensor({1, 1}, 1.0)), std::numbers::ln2, 1e-15);
  EXPECT_NEAR(bce_with_logits(Tensor({1, 1}), Tensor({1, 1}, 0.0)), std::numbers::ln2, 1e-15);
}

TEST(BceWithLogits, SaturatesWithoutOverflow) {
  const double v = bce_with_logits(Tensor({1, 1}, 50.0), Tensor({1, 1}, 1.0));
  EXPECT_GE(v, 0.0);
  EXPECT_LT(v, 1e-20);
  EXPECT_NEAR(bce_with_logits(Tensor({1, 1}, -800.0), Tensor({1, 1}, 1.0)), 800.0, 1e-9);
}

TEST(BceWithLogits, MatchesNaiveExtendedPrecision) {
  for (int trial = 0; trial < kTrials; ++trial) {
    Rng rng(trial);
    const Tensor z = oracle::random_matrix(rng, 6, 6, -8.0, 8.0);
    const Tensor t = oracle::random_binary(rng, 6, 6);
    const double got = bce_with_logits(z, t);
    EXPECT_NEAR(got, oracle::bce(z, t), 1e-10 * std::abs(oracle::bce(z, t)));
    EXPECT_GE(got, 0.0);
  }
}

TEST(BceWithLogits, RejectsNonBinaryTargetsAndShapeMismatch) {
  EXPECT_THROW(bce_with_logits(Tensor({2, 2}), Tensor({2, 2}, 0.5)), DegenerateInputError);
  EXPECT_THROW(bce_with_logits(Tensor({2, 2}), Tensor({2, 3})), DimensionError);
}

TEST(BceWithLogits, GradientIsSigmoidMinusTargetOverCount) {
  Rng rng(2);
  const Tensor z = oracle::random_matrix(rng, 3, 3, -3.0, 3.0);
  const Tensor t = oracle::random_binary(rng, 3, 3);
  Tape tape;
  Var v = tape.leaf(z, true);
  tape.backward(ad::bce_with_logits(v, t));
  const auto g = tape.grad(v);
  for (std::size_t i = 0; i < 9; ++i) {
    EXPECT_NEAR(g[i], (1.0 / (1.0 + std::exp(-z[i])) - t[i]) / 9.0, 1e-15);
  }
}

TEST(GradCheck, QuadraticIsExact) {
  Rng rng(1);
  const Tensor x = oracle::random_matrix(rng, 3, 5, -4.0, 4.0);
  // sum(x²) = numel · mean((x - 0)²)
  auto f = [](Tape& t, Var v) { return ad::scale(ad::mse(v, t.constant(Tensor(v.shape()))), 15.0); };
  EXPECT_LT(grad_check(f, x), 1e-8);
}

TEST(GradCheck, BceOnFourByFour) {
  Rng rng(4);
  const Tensor z = oracle::random_matrix(rng, 4, 4, -3.0, 3.0);
  const Tensor t = oracle::random_binary(rng, 4, 4);
  EXPECT_LT(grad_check([&](Tape&, Var v) { return ad::bce_with_logits(v, t); }, z), 1e-5);
}

TEST(GradCheck, DetectsAWrongGradient) {
  // Forward is sum(x), backward claims 2 per entry.
  auto wrong = [](Tape& t, Var v) {
    return t.record(Tensor::scalar(sum(v.value())), {v}, [v](Tape& tape, std::span<const double> g) {
      std::vector<double> d(v.value().numel(), 2.0 * g[0]);
      tape.accumulate(v, d);
    });
  };
  EXPECT_GT(grad_check(wrong, Tensor({2, 2}, 1.0)), 0.5);
}

TEST(GradCheck, RejectsNonFiniteFunction) {
  auto inf = [](Tape& t, Var) { return t.constant(Tensor::scalar(INFINITY)); };
  EXPECT_THROW(grad_check(inf, Tensor({1, 1})), NumericError);
}

TEST(Tape, AccumulatesSharedInputs) {
  Tape tape;
  Var x = tape.leaf(Tensor::matrix({{1.0, 2.0}}), true);
  tape.backward(ad::sum(ad::add(x, ad::scale(x, 3.0))));
  EXPECT_DOUBLE_EQ(tape.grad(x)[0], 4.0);
  EXPECT_DOUBLE_EQ(tape.grad(x)[1], 4.0);
}

TEST(Tape, ConstantsReceiveNoGradient) {
  Tape tape;
  Var c = tape.constant(Tensor::matrix({{1.0}}));
  Var x = tape.leaf(Tensor::matrix({{2.0}}), true);
  tape.backward(ad::sum(ad::matmul(c, x)));
  EXPECT_TRUE(tape.grad(c).empty());
  EXPECT_DOUBLE_EQ(tape.grad(x)[0], 1.0);
}

TEST(Tape, BackwardNeedsScalarRoot) {
  Tape tape;
  Var x = tape.leaf(Tensor({2, 2}), true);
  EXPECT_THROW(tape.backward(x), DimensionError);
}

TEST(Tensor, RejectsZeroExtentsAndSizeMismatch) {
  EXPECT_THROW(Tensor({0, 3}), DimensionError);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
}

TEST(Tensor, GradientBufferMatchesShape) {
  Tensor t({2, 3});
  EXPECT_FALSE(t.has_grad());
  EXPECT_EQ(t.grad().size(), t.numel());
  EXPECT_THROW(t.accumulate_grad(std::vector<double>(5, 1.0)), DimensionError);
}

TEST(Finiteness, NanInputsAreRejected) {
  Tensor x = Tensor::matrix({{1.0, NAN}});
  EXPECT_THROW(softmax_rows(x), NumericError);
  EXPECT_THROW(cosine_rows(x, x), NumericError);
  Tape tape;
  EXPECT_THROW(ad::gelu(tape.constant(x)), NumericError);
  EXPECT_THROW(ad::sum(tape.constant(x)), NumericError);
}

// Every differentiable op, 100 seeded trials each.

TEST(OpGradients, Matmul) {
  check_unary("matmul lhs", {3, 4}, [](Tape& t, Var x) { return ad::matmul(x, t.constant(Tensor({4, 2}, 0.3))); });
  check_unary("matmul rhs", {4, 2}, [](Tape& t, Var x) {
    return ad::matmul(t.constant(Tensor::matrix({{1, -2, 3, 0.5}, {0.1, 0.2, -1, 2}})), x);
  });
}

TEST(OpGradients, MatmulNt) {
  const Tensor b = Tensor::matrix({{1, -2, 3}, {0.1, 0.2, -1}});
  check_unary("matmul_nt lhs", {4, 3}, [&](Tape& t, Var x) { return ad::matmul_nt(x, t.constant(b)); });
  check_unary("matmul_nt rhs", {5, 3}, [&](Tape& t, Var x) { return ad::matmul_nt(t.constant(b), x); });
  check_unary("matmul_nt self", {4, 3}, [](Tape&, Var x) { return ad::matmul_nt(x, x); });
}

TEST(OpGradients, AddSubScale) {
  const Tensor c = Tensor({3, 3}, 0.7);
  check_unary("add", {3, 3}, [&](Tape& t, Var x) { return ad::add(x, t.constant(c)); });
  check_unary("sub lhs", {3, 3}, [&](Tape& t, Var x) { return ad::sub(x, t.constant(c)); });
  check_unary("sub rhs", {3, 3}, [&](Tape& t, Var x) { return ad::sub(t.constant(c), x); });
  check_unary("scale", {3, 3}, [](Tape&, Var x) { return ad::scale(x, -2.5); });
}

TEST(OpGradients, HadamardConstAndAddRow) {
  const Tensor m = Tensor::matrix({{1, 0, 2}, {-1, 3, 0.5}});
  check_unary("hadamard_const", {2, 3}, [&](Tape&, Var x) { return ad::hadamard_const(x, m); });
  check_unary("add_row x", {2, 3}, [](Tape& t, Var x) { return ad::add_row(x, t.constant(Tensor({3}, 0.1))); });
  check_unary("add_row bias", {3}, [&](Tape& t, Var b) { return ad::add_row(t.constant(m), b); });
}

TEST(OpGradients, Linear) {
  const Tensor w = Tensor::matrix({{0.5, -1, 2}, {1, 1, -0.3}});
  const Tensor x = Tensor::matrix({{1, 2, 3}, {-1, 0.5, 0}, {0.2, 0.1, -2}, {1, 1, 1}});
  check_unary("linear x", {4, 3}, [&](Tape& t, Var v) { return ad::linear(v, t.constant(w), t.constant(Tensor({2}, 0.2))); });
  check_unary("linear w", {2, 3}, [&](Tape& t, Var v) { return ad::linear(t.constant(x), v, std::nullopt); });
  check_unary("linear b", {2}, [&](Tape& t, Var v) { return ad::linear(t.constant(x), t.constant(w), v); });
}

TEST(OpGradients, Gelu) {
  check_unary("gelu", {3, 4}, [](Tape&, Var x) { return ad::gelu(x); }, -4.0, 4.0);
}

TEST(OpGradients, LayerNorm) {
  const Tensor x = Tensor::matrix({{1, 2, 3, -1}, {0.5, -0.2, 0.1, 2}, {3, 3.1, -2, 0}});
  check_unary("layer_norm x", {3, 4}, [](Tape& t, Var v) {
    return ad::layer_norm(v, t.constant(Tensor({4}, 1.3)), t.constant(Tensor({4}, -0.2)), 1e-6);
  });
  check_unary("layer_norm gamma", {4}, [&](Tape& t, Var g) {
    return ad::layer_norm(t.constant(x), g, t.constant(Tensor({4}, 0.0)), 1e-6);
  });
  check_unary("layer_norm beta", {4}, [&](Tape& t, Var b) {
    return ad::layer_norm(t.constant(x), t.constant(Tensor({4}, 1.0)), b, 1e-6);
  });
}

TEST(OpGradients, SoftmaxRows) {
  check_unary("softmax_rows", {4, 4}, [](Tape&, Var x) { return ad::softmax_rows(x); }, -3.0, 3.0);
}

TEST(OpGradients, CosineRows) {
  const Tensor b = Tensor::matrix({{1, 2, 0.5}, {-1, 0.3, 2}, {0.2, -0.7, 1}});
  check_unary("cosine_rows a", {4, 3}, [&](Tape& t, Var x) { return ad::cosine_rows(x, t.constant(b)); }, 0.1, 1.0);
  check_unary("cosine_rows b", {4, 3}, [&](Tape& t, Var x) { return ad::cosine_rows(t.constant(b), x); }, 0.1, 1.0);
  check_unary("cosine_rows self", {4, 3}, [](Tape&, Var x) { return ad::cosine_rows(x, x); }, 0.1, 1.0);
}

TEST(OpGradients, SliceAndConcat) {
  check_unary("slice_cols", {3, 6}, [](Tape&, Var x) { return ad::slice_cols(x, 2, 3); });
  check_unary("concat_cols", {3, 2}, [](Tape& t, Var x) {
    return ad::concat_cols({x, t.constant(Tensor({3, 1}, 0.5)), ad::scale(x, 2.0)});
  });
}

TEST(OpGradients, BceWithLogits) {
  const Tensor targets = Tensor::matrix({{1, 0, 1}, {0, 0, 1}, {1, 1, 0}});
  check_unary("bce_with_logits", {3, 3}, [&](Tape&, Var x) { return ad::bce_with_logits(x, targets); }, -5.0, 5.0);
}

TEST(OpGradients, LogsumexpRows) {
  const Tensor mask = Tensor::matrix({{1, 0, 1, 0}, {0, 1, 0, 0}, {1, 1, 1, 1}});
  check_unary("logsumexp_rows", {3, 4}, [](Tape&, Var x) { return ad::logsumexp_rows(x); }, -5.0, 5.0);
  check_unary("logsumexp_rows masked", {3, 4}, [&](Tape&, Var x) { return ad::logsumexp_rows(x, &mask); }, -5.0,
              5.0);
}

TEST(OpGradients, Reductions) {
  check_unary("sum", {2, 5}, [](Tape&, Var x) { return ad::sum(x); });
  check_unary("mean", {2, 5}, [](Tape&, Var x) { return ad::mean(x); });
  check_unary("mse lhs", {2, 5}, [](Tape& t, Var x) { return ad::mse(x, t.constant(Tensor({2, 5}, 0.3))); });
  check_unary("mse rhs", {2, 5}, [](Tape& t, Var x) { return ad::mse(t.constant(Tensor({2, 5}, 0.3)), x); });
}

TEST(LogsumexpRows, EmptyMaskRowIsRejected) {
  Tape tape;
  const Tensor mask = Tensor::matrix({{1, 0}, {0, 0}});
  EXPECT_THROW(ad::logsumexp_rows(tape.constant(Tensor({2, 2})), &mask), DegenerateInputError);
}

}  // namespace
}  // namespace univ
