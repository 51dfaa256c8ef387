#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "univ/tensor.hpp"

namespace univ {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

using VarMap = std::map<std::string, Var>;

/// Ordered record of differentiable ops for one forward pass.
///
/// Ops are appended in execution order, so ids are already a topological
/// order; backward walks the ids in reverse and visits each node once.
/// Nodes whose inputs do not require gradients store no backward closure.
class Tape {
 public:
  /// Receives the gradient of the node's output; must accumulate into inputs.
  using BackwardFn = std::function<void(Tape&, std::span<const double>)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Tensor value, bool requires_grad);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);
  Var record(Tensor value, const std::vector<Var>& inputs, BackwardFn backward);

  /// Seeds d(root)/d(root) = 1 and propagates. Root must be a scalar.
  void backward(Var root);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Gradient accumulated at a node; empty span if none reached it.
  std::span<const double> grad(Var v) const;

  /// Adds g into the node's gradient buffer (allocated on first use). No-op for constants.
  void accumulate(Var v, std::span<const double> g);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    bool requires_grad = false;
    std::vector<double> grad;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

// Differentiable ops. Every op checks its output for NaN/Inf.
namespace ad {

Var matmul(Var a, Var b);
Var matmul_nt(Var a, Var b);  // a·bᵀ
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var scale(Var a, double s);
Var hadamard_const(Var a, const Tensor& mask);
/// x[n×d] + b broadcast over rows; b has d elements.
Var add_row(Var x, Var b);
/// x·Wᵀ (+ bias), with W stored as [out × in].
Var linear(Var x, Var weight, std::optional<Var> bias);
Var gelu(Var x);
Var layer_norm(Var x, Var gamma, Var beta, double eps);
Var softmax_rows(Var x);
Var cosine_rows(Var a, Var b);
Var slice_cols(Var x, std::size_t begin, std::size_t count);
Var concat_cols(const std::vector<Var>& parts);
/// Mean fused BCE; targets are constants in {0,1}.
Var bce_with_logits(Var logits, const Tensor& targets);
/// Per-row log Σ_j exp(x_ij), restricted to mask_ij == 1 when a mask is given. Shape [n].
Var logsumexp_rows(Var x, const Tensor* mask = nullptr);
Var sum(Var x);
Var mean(Var x);
/// mean((a - b)²) over all elements.
Var mse(Var a, Var b);

}  // namespace ad
}  // namespace univ
