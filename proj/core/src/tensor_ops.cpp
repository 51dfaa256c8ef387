#include "univ/tensor_ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "univ/error.hpp"

namespace univ {

void require_finite(const Tensor& t, std::string_view op) {
  const auto d = t.data();
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (!std::isfinite(d[i])) {
      throw NumericError(std::string(op) + ": non-finite value at flat index " + std::to_string(i));
    }
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, std::string_view op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

void require_matrix(const Tensor& t, std::string_view op) {
  if (t.rank() != 2) throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_str(t.shape()));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dimensions differ " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  Tensor out({m, n});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = pa[i * k + p];
      const double* brow = pb + p * n;
      double* orow = po + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k) {
    throw DimensionError("matmul_nt: inner dimensions differ " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()) + "^T");
  }
  Tensor out({m, n});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = pa + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = pb + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      po[i * n + j] = acc;
    }
  }
  return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_tn");
  require_matrix(b, "matmul_tn");
  const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul_tn: inner dimensions differ " + shape_str(a.shape()) + "^T vs " +
                         shape_str(b.shape()));
  }
  Tensor out({m, n});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (std::size_t p = 0; p < k; ++p) {
    for (std::size_t i = 0; i < m; ++i) {
      const double api = pa[p * m + i];
      const double* brow = pb + p * n;
      double* orow = po + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += api * brow[j];
    }
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t r = a.rows(), c = a.cols();
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out.at(j, i) = a.at(i, j);
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = a;
  out.set_requires_grad(false);
  out.clear_grad();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += b[i];
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a[i] - b[i];
  return out;
}

Tensor scale(const Tensor& a, double s) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a[i] * s;
  return out;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "hadamard");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a[i] * b[i];
  return out;
}

Tensor softmax_rows(const Tensor& x) {
  require_matrix(x, "softmax_rows");
  require_finite(x, "softmax_rows input");
  const std::size_t r = x.rows(), c = x.cols();
  Tensor out({r, c});
  for (std::size_t i = 0; i < r; ++i) {
    double mx = x.at(i, 0);
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, x.at(i, j));
    double total = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const double e = std::exp(x.at(i, j) - mx);
      out.at(i, j) = e;
      total += e;
    }
    for (std::size_t j = 0; j < c; ++j) out.at(i, j) /= total;
  }
  return out;
}

namespace {

std::vector<double> row_norms(const Tensor& t, std::string_view which) {
  const std::size_t r = t.rows(), c = t.cols();
  std::vector<double> norms(r);
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += t.at(i, j) * t.at(i, j);
    norms[i] = std::sqrt(s);
    if (norms[i] == 0.0) {
      throw DegenerateInputError("cosine_rows: zero-norm row " + std::to_string(i) + " in " + std::string(which));
    }
  }
  return norms;
}

}  // namespace

Tensor cosine_rows(const Tensor& a, const Tensor& b) {
  require_matrix(a, "cosine_rows");
  require_matrix(b, "cosine_rows");
  if (a.cols() != b.cols() || a.cols() == 0) {
    throw DimensionError("cosine_rows: feature widths differ " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
  require_finite(a, "cosine_rows input a");
  require_finite(b, "cosine_rows input b");
  const auto na = row_norms(a, "first operand");
  const auto nb = row_norms(b, "second operand");
  Tensor out = matmul_nt(a, b);
  for (std::size_t i = 0; i < out.rows(); ++i) {
    for (std::size_t j = 0; j < out.cols(); ++j) {
      out.at(i, j) = std::clamp(out.at(i, j) / (na[i] * nb[j]), -1.0, 1.0);
    }
  }
  return out;
}

double bce_with_logits(const Tensor& logits, const Tensor& targets) {
  require_same_shape(logits, targets, "bce_with_logits");
  require_finite(logits, "bce_with_logits logits");
  double total = 0.0;
  for (std::size_t i = 0; i < logits.numel(); ++i) {
    const double t = targets[i];
    if (t != 0.0 && t != 1.0) {
      throw DegenerateInputError("bce_with_logits: non-binary target " + std::to_string(t) + " at flat index " +
                                 std::to_string(i));
    }
    const double z = logits[i];
    total += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
  }
  return total / static_cast<double>(logits.numel());
}

double sum(const Tensor& t) {
  double s = 0.0;
  for (double v : t.data()) s += v;
  return s;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace univ
