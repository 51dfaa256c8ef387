#include "univ/pccl.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "univ/error.hpp"
#include "univ/tensor_ops.hpp"

namespace univ::pccl {
namespace {

constexpr double kStochasticTolerance = 1e-6;

void require_square(const Tensor& t, std::string_view what) {
  if (t.rank() != 2 || t.rows() != t.cols()) {
    throw DimensionError(std::string(what) + ": expected a square matrix, got " + shape_str(t.shape()));
  }
}

void require_labels_match(const Tensor& s, const PseudoLabelMatrix& p, std::string_view what) {
  require_square(s, what);
  if (s.shape() != p.values.shape()) {
    throw DimensionError(std::string(what) + ": similarity " + shape_str(s.shape()) + " vs pseudo-labels " +
                         shape_str(p.values.shape()));
  }
}

void require_coefficient(double c, std::string_view name) {
  if (!(c >= 0.0)) throw ConfigError("loss coefficient " + std::string(name) + " must be non-negative");
}

template <typename F>
double on_scratch_tape(F&& f) {
  Tape tape;
  return f(tape).value().item();
}

}  // namespace

SimilarityMatrix similarity(const Tensor& features_a, const Tensor& features_b, double tau, SimilarityKind kind) {
  Tape tape;
  Var s = similarity(tape.constant(features_a), tape.constant(features_b), tau);
  return SimilarityMatrix{s.value(), tau, kind};
}

Var similarity(Var features_a, Var features_b, double tau) {
  if (!(tau > 0.0)) throw ConfigError("temperature tau must be positive");
  return ad::scale(ad::cosine_rows(features_a, features_b), 1.0 / tau);
}

PseudoLabelMatrix pseudo_labels(const Tensor& attention, double gamma) {
  require_square(attention, "pseudo_labels");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in (0, 1)");
  const std::size_t n = attention.rows();
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double a = attention.at(i, j);
      if (!(a >= 0.0) || !std::isfinite(a)) {
        throw DegenerateInputError("pseudo_labels: attention row " + std::to_string(i) + " has invalid entry");
      }
      row += a;
    }
    if (std::abs(row - 1.0) > kStochasticTolerance) {
      throw DegenerateInputError("pseudo_labels: attention row " + std::to_string(i) + " sums to " +
                                 std::to_string(row));
    }
  }

  PseudoLabelMatrix out{Tensor({n, n}), gamma, std::vector<std::size_t>(n, 0)};
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return attention.at(i, a) > attention.at(i, b); });
    double mass = 0.0;
    std::size_t m = 0;
    while (m < n) {
      mass += attention.at(i, order[m]);
      out.values.at(i, order[m]) = 1.0;
      ++m;
      if (mass > gamma) break;
    }
    out.values.at(i, i) = 1.0;
    out.selected_count[i] = m;
  }
  return out;
}

double loss_iv(const SimilarityMatrix& s, const PseudoLabelMatrix& p) {
  return on_scratch_tape([&](Tape& t) { return loss_iv(t.constant(s.values), p); });
}

double loss_vv(const SimilarityMatrix& s, const PseudoLabelMatrix& p) {
  return on_scratch_tape([&](Tape& t) { return loss_vv(t.constant(s.values), p); });
}

Var loss_iv(Var s, const PseudoLabelMatrix& p) {
  require_labels_match(s.value(), p, "loss_iv");
  return ad::bce_with_logits(s, p.values);
}

Var loss_vv(Var s, const PseudoLabelMatrix& p) {
  require_labels_match(s.value(), p, "loss_vv");
  return ad::bce_with_logits(s, p.values);
}

double loss_pccl(double l_iv, double l_vv, double alpha, double beta) {
  require_coefficient(alpha, "alpha");
  require_coefficient(beta, "beta");
  return alpha * l_iv + beta * l_vv;
}

Var loss_pccl(Var l_iv, Var l_vv, double alpha, double beta) {
  require_coefficient(alpha, "alpha");
  require_coefficient(beta, "beta");
  return ad::add(ad::scale(l_iv, alpha), ad::scale(l_vv, beta));
}

double loss_mse(const Tensor& f_i, const Tensor& f_v, const Tensor& f_vf) {
  return on_scratch_tape([&](Tape& t) { return loss_mse(t.constant(f_i), t.constant(f_v), t.constant(f_vf)); });
}

Var loss_mse(Var f_i, Var f_v, Var f_vf) {
  require_same_shape(f_i.value(), f_vf.value(), "loss_mse");
  require_same_shape(f_v.value(), f_vf.value(), "loss_mse");
  return ad::add(ad::mse(f_i, f_vf), ad::mse(f_v, f_vf));
}

double loss_nce(const SimilarityMatrix& s_iv, const SimilarityMatrix& s_vv) {
  return on_scratch_tape([&](Tape& t) { return loss_nce(t.constant(s_iv.values), t.constant(s_vv.values)); });
}

Var loss_nce(Var s_iv, Var s_vv) {
  require_square(s_iv.value(), "loss_nce");
  require_square(s_vv.value(), "loss_nce");
  return ad::add(diagonal_cross_entropy(s_iv), diagonal_cross_entropy(s_vv));
}

Var diagonal_cross_entropy(Var s) {
  require_square(s.value(), "diagonal_cross_entropy");
  // logsumexp over the diagonal alone is just s_ii.
  const Tensor diag = Tensor::identity(s.value().rows());
  return ad::mean(ad::sub(ad::logsumexp_rows(s), ad::logsumexp_rows(s, &diag)));
}

double loss_variant_softmax(const SimilarityMatrix& s, const PseudoLabelMatrix& p) {
  return on_scratch_tape([&](Tape& t) { return loss_variant_softmax(t.constant(s.values), p); });
}

Var loss_variant_softmax(Var s, const PseudoLabelMatrix& p) {
  require_labels_match(s.value(), p, "loss_variant_softmax");
  return ad::mean(ad::sub(ad::logsumexp_rows(s), ad::logsumexp_rows(s, &p.values)));
}

std::string_view to_string(LossKind kind) {
  switch (kind) {
    case LossKind::Pccl:
      return "pccl";
    case LossKind::PcclSoftmaxVariant:
      return "pccl_softmax_variant";
    case LossKind::Mse:
      return "mse";
    case LossKind::Nce:
      return "nce";
  }
  return "pccl";
}

LossKind parse_loss_kind(std::string_view name) {
  for (LossKind k : {LossKind::Pccl, LossKind::PcclSoftmaxVariant, LossKind::Mse, LossKind::Nce}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown loss kind '" + std::string(name) + "'");
}

}  // namespace univ::pccl
