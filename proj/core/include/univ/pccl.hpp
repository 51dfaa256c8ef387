#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "univ/autograd.hpp"
#include "univ/tensor.hpp"

// Patch-wise cross-modality contrastive objective: similarity maps between
// student and frozen-teacher patch features, binary pseudo-labels derived
// from the teacher's attention, and the losses that align the two.

namespace univ::pccl {

inline constexpr double kDefaultTau = 0.04;
inline constexpr double kDefaultGamma = 0.6;

enum class SimilarityKind { CrossModal, IntraVisible };

struct SimilarityMatrix {
  Tensor values;  // cosine / tau, entries in [-1/tau, 1/tau]
  double tau = kDefaultTau;
  SimilarityKind kind = SimilarityKind::CrossModal;
};

struct PseudoLabelMatrix {
  Tensor values;  // binary N×N, diagonal all ones
  double gamma = kDefaultGamma;
  /// Per row, the minimal number of top-attention entries whose sum exceeds gamma.
  std::vector<std::size_t> selected_count;
};

SimilarityMatrix similarity(const Tensor& features_a, const Tensor& features_b, double tau,
                            SimilarityKind kind = SimilarityKind::CrossModal);
Var similarity(Var features_a, Var features_b, double tau);

/// Attention rows are sorted in descending order (ties: lower index first); the
/// shortest prefix whose sum is strictly greater than gamma is selected, and
/// the diagonal is always set. Rows must sum to 1 within 1e-6.
PseudoLabelMatrix pseudo_labels(const Tensor& attention, double gamma);

double loss_iv(const SimilarityMatrix& s, const PseudoLabelMatrix& p);
double loss_vv(const SimilarityMatrix& s, const PseudoLabelMatrix& p);
Var loss_iv(Var s, const PseudoLabelMatrix& p);
Var loss_vv(Var s, const PseudoLabelMatrix& p);

/// alpha·l_iv + beta·l_vv; both coefficients non-negative.
double loss_pccl(double l_iv, double l_vv, double alpha, double beta);
Var loss_pccl(Var l_iv, Var l_vv, double alpha, double beta);

/// mean((F_i - F_vf)²) + mean((F_v - F_vf)²).
double loss_mse(const Tensor& f_i, const Tensor& f_v, const Tensor& f_vf);
Var loss_mse(Var f_i, Var f_v, Var f_vf);

/// Per-row softmax cross-entropy against the diagonal, averaged over rows, summed over both maps.
double loss_nce(const SimilarityMatrix& s_iv, const SimilarityMatrix& s_vv);
/// One map's share of loss_nce.
Var diagonal_cross_entropy(Var s);
Var loss_nce(Var s_iv, Var s_vv);

/// Mean over rows of -log(softmax mass on the positions where P = 1).
double loss_variant_softmax(const SimilarityMatrix& s, const PseudoLabelMatrix& p);
Var loss_variant_softmax(Var s, const PseudoLabelMatrix& p);

enum class LossKind { Pccl, PcclSoftmaxVariant, Mse, Nce };

std::string_view to_string(LossKind kind);
/// Accepts "pccl", "pccl_softmax_variant", "mse", "nce".
LossKind parse_loss_kind(std::string_view name);

}  // namespace univ::pccl
