#pragma once

#include <string_view>

#include "univ/tensor.hpp"

// Forward kernels on plain tensors. The differentiable wrappers in
// autograd.hpp call into these.

namespace univ {

/// Throws NumericError naming `op` if any value is NaN or Inf.
void require_finite(const Tensor& t, std::string_view op);
void require_same_shape(const Tensor& a, const Tensor& b, std::string_view op);
void require_matrix(const Tensor& t, std::string_view op);

Tensor matmul(const Tensor& a, const Tensor& b);     // a·b
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // a·bᵀ
Tensor matmul_tn(const Tensor& a, const Tensor& b);  // aᵀ·b
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor hadamard(const Tensor& a, const Tensor& b);

/// Row-wise softmax with max subtraction.
Tensor softmax_rows(const Tensor& x);

/// out[i][j] = <a_i, b_j> / (|a_i| |b_j|). Zero-norm rows are rejected.
Tensor cosine_rows(const Tensor& a, const Tensor& b);

/// Mean of max(z,0) - z·t + log(1 + exp(-|z|)) over all entries; targets must be 0 or 1.
double bce_with_logits(const Tensor& logits, const Tensor& targets);

double sum(const Tensor& t);
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace univ
