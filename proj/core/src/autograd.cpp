#include "univ/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "univ/error.hpp"
#include "univ/tensor_ops.hpp"

namespace univ {

const Tensor& Var::value() const { return tape_->value(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::leaf(Tensor value, bool requires_grad) {
  value.clear_grad();
  value.set_requires_grad(false);
  nodes_.push_back(Node{std::move(value), requires_grad, {}, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
  bool needs = false;
  for (const Var& v : inputs) needs = needs || requires_grad(v.id());
  nodes_.push_back(Node{std::move(value), needs, {}, needs ? std::move(backward) : BackwardFn{}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, const std::vector<Var>& inputs, BackwardFn backward) {
  bool needs = false;
  for (const Var& v : inputs) needs = needs || requires_grad(v.id());
  nodes_.push_back(Node{std::move(value), needs, {}, needs ? std::move(backward) : BackwardFn{}});
  return Var(this, nodes_.size() - 1);
}

std::span<const double> Tape::grad(Var v) const { return nodes_[v.id()].grad; }

void Tape::accumulate(Var v, std::span<const double> g) {
  Node& node = nodes_[v.id()];
  if (!node.requires_grad) return;
  if (node.grad.empty()) node.grad.assign(node.value.numel(), 0.0);
  if (g.size() != node.grad.size()) {
    throw DimensionError("gradient of size " + std::to_string(g.size()) + " for node of shape " +
                         shape_str(node.value.shape()));
  }
  for (std::size_t i = 0; i < g.size(); ++i) node.grad[i] += g[i];
}

void Tape::backward(Var root) {
  if (root.value().numel() != 1) {
    throw DimensionError("backward from non-scalar of shape " + shape_str(root.shape()));
  }
  if (!requires_grad(root.id())) return;
  const double seed = 1.0;
  accumulate(root, std::span<const double>(&seed, 1));
  for (std::size_t id = root.id() + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!node.backward || node.grad.empty()) continue;
    // Copy: the closure accumulates into other nodes' buffers.
    const std::vector<double> g = node.grad;
    node.backward(*this, g);
  }
}

namespace ad {
namespace {

Tensor checked(Tensor t, std::string_view op) {
  require_finite(t, op);
  return t;
}

Tensor as_matrix(std::span<const double> g, const Shape& shape) {
  return Tensor(shape, std::vector<double>(g.begin(), g.end()));
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& tape = a.tape();
  Tensor out = checked(univ::matmul(a.value(), b.value()), "matmul");
  const Shape shape = out.shape();
  return tape.record(std::move(out), {a, b}, [a, b, shape](Tape& t, std::span<const double> g) {
    const Tensor go = as_matrix(g, shape);
    if (a.requires_grad()) t.accumulate(a, univ::matmul_nt(go, b.value()).data());
    if (b.requires_grad()) t.accumulate(b, univ::matmul_tn(a.value(), go).data());
  });
}

Var matmul_nt(Var a, Var b) {
  Tape& tape = a.tape();
  Tensor out = checked(univ::matmul_nt(a.value(), b.value()), "matmul_nt");
  const Shape shape = out.shape();
  return tape.record(std::move(out), {a, b}, [a, b, shape](Tape& t, std::span<const double> g) {
    const Tensor go = as_matrix(g, shape);
    if (a.requires_grad()) t.accumulate(a, univ::matmul(go, b.value()).data());
    if (b.requires_grad()) t.accumulate(b, univ::matmul_tn(go, a.value()).data());
  });
}

Var add(Var a, Var b) {
  Tensor out = checked(univ::add(a.value(), b.value()), "add");
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, std::span<const double> g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var sub(Var a, Var b) {
  Tensor out = checked(univ::sub(a.value(), b.value()), "sub");
  return a.tape().record(std::move(out), {a, b}, [a, b](Tape& t, std::span<const double> g) {
    t.accumulate(a, g);
    if (b.requires_grad()) {
      std::vector<double> neg(g.begin(), g.end());
      for (double& v : neg) v = -v;
      t.accumulate(b, neg);
    }
  });
}

Var scale(Var a, double s) {
  Tensor out = checked(univ::scale(a.value(), s), "scale");
  return a.tape().record(std::move(out), {a}, [a, s](Tape& t, std::span<const double> g) {
    std::vector<double> d(g.begin(), g.end());
    for (double& v : d) v *= s;
    t.accumulate(a, d);
  });
}

Var hadamard_const(Var a, const Tensor& mask) {
  Tensor out = checked(univ::hadamard(a.value(), mask), "hadamard");
  return a.tape().record(std::move(out), {a}, [a, mask](Tape& t, std::span<const double> g) {
    std::vector<double> d(g.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = g[i] * mask[i];
    t.accumulate(a, d);
  });
}

Var add_row(Var x, Var b) {
  const Tensor& xv = x.value();
  require_matrix(xv, "add_row");
  const std::size_t n = xv.rows(), d = xv.cols();
  if (b.value().numel() != d) {
    throw DimensionError("add_row: bias of shape " + shape_str(b.shape()) + " for rows of width " +
                         std::to_string(d));
  }
  Tensor out = xv;
  const auto bv = b.value().data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) out.at(i, j) += bv[j];
  }
  require_finite(out, "add_row");
  return x.tape().record(std::move(out), {x, b}, [x, b, n, d](Tape& t, std::span<const double> g) {
    t.accumulate(x, g);
    if (b.requires_grad()) {
      std::vector<double> db(d, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) db[j] += g[i * d + j];
      }
      t.accumulate(b, db);
    }
  });
}

Var linear(Var x, Var weight, std::optional<Var> bias) {
  Var y = matmul_nt(x, weight);
  return bias ? add_row(y, *bias) : y;
}

Var gelu(Var x) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape());
  for (std::size_t i = 0; i < xv.numel(); ++i) {
    out[i] = 0.5 * xv[i] * (1.0 + std::erf(xv[i] * std::numbers::sqrt2 / 2.0));
  }
  require_finite(out, "gelu");
  return x.tape().record(std::move(out), {x}, [x](Tape& t, std::span<const double> g) {
    const Tensor& v = x.value();
    std::vector<double> d(g.size());
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double cdf = 0.5 * (1.0 + std::erf(v[i] * std::numbers::sqrt2 / 2.0));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v[i] * v[i]);
      d[i] = g[i] * (cdf + v[i] * pdf);
    }
    t.accumulate(x, d);
  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  const Tensor& xv = x.value();
  require_matrix(xv, "layer_norm");
  const std::size_t n = xv.rows(), d = xv.cols();
  if (gamma.value().numel() != d || beta.value().numel() != d) {
    throw DimensionError("layer_norm: affine parameters do not match width " + std::to_string(d));
  }
  Tensor normed({n, d});
  std::vector<double> rstd(n);
  for (std::size_t i = 0; i < n; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += xv.at(i, j);
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xv.at(i, j) - mu) * (xv.at(i, j) - mu);
    var /= static_cast<double>(d);
    rstd[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) normed.at(i, j) = (xv.at(i, j) - mu) * rstd[i];
  }
  Tensor out({n, d});
  const auto gv = gamma.value().data();
  const auto bv = beta.value().data();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) out.at(i, j) = normed.at(i, j) * gv[j] + bv[j];
  }
  require_finite(out, "layer_norm");
  return x.tape().record(
      std::move(out), {x, gamma, beta},
      [x, gamma, beta, normed = std::move(normed), rstd = std::move(rstd), n, d](Tape& t,
                                                                                 std::span<const double> g) {
        const auto gv = gamma.value().data();
        if (gamma.requires_grad() || beta.requires_grad()) {
          std::vector<double> dg(d, 0.0), db(d, 0.0);
          for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < d; ++j) {
              dg[j] += g[i * d + j] * normed.at(i, j);
              db[j] += g[i * d + j];
            }
          }
          t.accumulate(gamma, dg);
          t.accumulate(beta, db);
        }
        if (x.requires_grad()) {
          std::vector<double> dx(n * d);
          std::vector<double> dxhat(d);
          for (std::size_t i = 0; i < n; ++i) {
            double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              dxhat[j] = g[i * d + j] * gv[j];
              mean_dxhat += dxhat[j];
              mean_dxhat_xhat += dxhat[j] * normed.at(i, j);
            }
            mean_dxhat /= static_cast<double>(d);
            mean_dxhat_xhat /= static_cast<double>(d);
            for (std::size_t j = 0; j < d; ++j) {
              dx[i * d + j] = rstd[i] * (dxhat[j] - mean_dxhat - normed.at(i, j) * mean_dxhat_xhat);
            }
          }
          t.accumulate(x, dx);
        }
      });
}

Var softmax_rows(Var x) {
  Tensor out = checked(univ::softmax_rows(x.value()), "softmax_rows");
  const std::size_t r = out.rows(), c = out.cols();
  const std::size_t self = x.tape().size();
  return x.tape().record(std::move(out), {x}, [x, r, c, self](Tape& t, std::span<const double> g) {
    const Tensor& y = t.value(self);
    std::vector<double> d(r * c);
    for (std::size_t i = 0; i < r; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += g[i * c + j] * y.at(i, j);
      for (std::size_t j = 0; j < c; ++j) d[i * c + j] = y.at(i, j) * (g[i * c + j] - dot);
    }
    t.accumulate(x, d);
  });
}

Var cosine_rows(Var a, Var b) {
  Tensor out = checked(univ::cosine_rows(a.value(), b.value()), "cosine_rows");
  const Shape shape = out.shape();
  return a.tape().record(std::move(out), {a, b}, [a, b, shape](Tape& t, std::span<const double> g) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    const std::size_t d = av.cols();
    auto normalize = [d](const Tensor& m, std::vector<double>& norms) {
      Tensor unit = m;
      unit.clear_grad();
      norms.assign(m.rows(), 0.0);
      for (std::size_t i = 0; i < m.rows(); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += m.at(i, j) * m.at(i, j);
        norms[i] = std::sqrt(s);
        for (std::size_t j = 0; j < d; ++j) unit.at(i, j) /= norms[i];
      }
      return unit;
    };
    std::vector<double> norm_a, norm_b;
    const Tensor ua = normalize(av, norm_a);
    const Tensor ub = normalize(bv, norm_b);
    const Tensor go = as_matrix(g, shape);
    // d(unit)/d(raw) projects out the radial component and divides by the norm.
    auto project = [d](const Tensor& dunit, const Tensor& unit, const std::vector<double>& norms) {
      std::vector<double> out(dunit.numel());
      for (std::size_t i = 0; i < unit.rows(); ++i) {
        double radial = 0.0;
        for (std::size_t j = 0; j < d; ++j) radial += dunit.at(i, j) * unit.at(i, j);
        for (std::size_t j = 0; j < d; ++j) {
          out[i * d + j] = (dunit.at(i, j) - unit.at(i, j) * radial) / norms[i];
        }
      }
      return out;
    };
    if (a.requires_grad()) t.accumulate(a, project(univ::matmul(go, ub), ua, norm_a));
    if (b.requires_grad()) t.accumulate(b, project(univ::matmul_tn(go, ua), ub, norm_b));
  });
}

Var slice_cols(Var x, std::size_t begin, std::size_t count) {
  const Tensor& xv = x.value();
  require_matrix(xv, "slice_cols");
  const std::size_t n = xv.rows(), d = xv.cols();
  if (count == 0 || begin + count > d) {
    throw DimensionError("slice_cols: columns [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") out of range for " + shape_str(xv.shape()));
  }
  Tensor out({n, count});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < count; ++j) out.at(i, j) = xv.at(i, begin + j);
  }
  return x.tape().record(std::move(out), {x}, [x, begin, count, n, d](Tape& t, std::span<const double> g) {
    std::vector<double> dx(n * d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < count; ++j) dx[i * d + begin + j] = g[i * count + j];
    }
    t.accumulate(x, dx);
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t n = parts.front().value().rows();
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Var& p : parts) {
    if (p.value().rows() != n) throw DimensionError("concat_cols: row counts differ");
    widths.push_back(p.value().cols());
    total += widths.back();
  }
  Tensor out({n, total});
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& pv = parts[k].value();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < widths[k]; ++j) out.at(i, offset + j) = pv.at(i, j);
    }
    offset += widths[k];
  }
  return parts.front().tape().record(
      std::move(out), parts, [parts, widths, n, total](Tape& t, std::span<const double> g) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < parts.size(); ++k) {
          if (parts[k].requires_grad()) {
            std::vector<double> d(n * widths[k]);
            for (std::size_t i = 0; i < n; ++i) {
              for (std::size_t j = 0; j < widths[k]; ++j) d[i * widths[k] + j] = g[i * total + off + j];
            }
            t.accumulate(parts[k], d);
          }
          off += widths[k];
        }
      });
}

Var bce_with_logits(Var logits, const Tensor& targets) {
  const double loss = univ::bce_with_logits(logits.value(), targets);
  if (!std::isfinite(loss)) throw NumericError("bce_with_logits: non-finite loss");
  return logits.tape().record(Tensor::scalar(loss), {logits}, [logits, targets](Tape& t, std::span<const double> g) {
    const Tensor& z = logits.value();
    const double inv = g[0] / static_cast<double>(z.numel());
    std::vector<double> d(z.numel());
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double sig = z[i] >= 0.0 ? 1.0 / (1.0 + std::exp(-z[i])) : std::exp(z[i]) / (1.0 + std::exp(z[i]));
      d[i] = (sig - targets[i]) * inv;
    }
    t.accumulate(logits, d);
  });
}

Var logsumexp_rows(Var x, const Tensor* mask) {
  const Tensor& xv = x.value();
  require_matrix(xv, "logsumexp_rows");
  require_finite(xv, "logsumexp_rows input");
  if (mask) require_same_shape(xv, *mask, "logsumexp_rows mask");
  const std::size_t n = xv.rows(), c = xv.cols();
  // Selection weights: 1 where the entry participates.
  Tensor keep = mask ? *mask : Tensor({n, c}, 1.0);
  keep.clear_grad();
  Tensor out({n});
  Tensor probs({n, c});
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -INFINITY;
    for (std::size_t j = 0; j < c; ++j) {
      if (keep.at(i, j) != 0.0) mx = std::max(mx, xv.at(i, j));
    }
    if (mx == -INFINITY) throw DegenerateInputError("logsumexp_rows: row " + std::to_string(i) + " has empty mask");
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      if (keep.at(i, j) != 0.0) {
        probs.at(i, j) = std::exp(xv.at(i, j) - mx);
        s += probs.at(i, j);
      }
    }
    for (std::size_t j = 0; j < c; ++j) probs.at(i, j) /= s;
    out[i] = mx + std::log(s);
  }
  require_finite(out, "logsumexp_rows");
  return x.tape().record(std::move(out), {x}, [x, probs = std::move(probs), n, c](Tape& t, std::span<const double> g) {
    std::vector<double> d(n * c);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < c; ++j) d[i * c + j] = g[i] * probs.at(i, j);
    }
    t.accumulate(x, d);
  });
}

Var sum(Var x) {
  const double s = univ::sum(x.value());
  if (!std::isfinite(s)) throw NumericError("sum: non-finite result");
  const std::size_t count = x.value().numel();
  return x.tape().record(Tensor::scalar(s), {x}, [x, count](Tape& t, std::span<const double> g) {
    t.accumulate(x, std::vector<double>(count, g[0]));
  });
}

Var mean(Var x) {
  const std::size_t count = x.value().numel();
  return scale(sum(x), 1.0 / static_cast<double>(count));
}

Var mse(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "mse");
  const std::size_t count = a.value().numel();
  double s = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const double diff = a.value()[i] - b.value()[i];
    s += diff * diff;
  }
  s /= static_cast<double>(count);
  if (!std::isfinite(s)) throw NumericError("mse: non-finite result");
  return a.tape().record(Tensor::scalar(s), {a, b}, [a, b, count](Tape& t, std::span<const double> g) {
    std::vector<double> d(count);
    const double k = 2.0 * g[0] / static_cast<double>(count);
    for (std::size_t i = 0; i < count; ++i) d[i] = k * (a.value()[i] - b.value()[i]);
    t.accumulate(a, d);
    if (b.requires_grad()) {
      for (double& v : d) v = -v;
      t.accumulate(b, d);
    }
  });
}

}  // namespace ad
}  // namespace univ
