// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "asmil/matrix.hpp"

namespace asmil::ad {

/// Handle to a node recorded on a Tape. Only meaningful for the tape that issued it.
struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
};

/// What a primitive's backward function sees.
struct BackwardArgs {
  const Matrix& out;                   // forward value of this node
  const Matrix& grad;                  // dL/d(out)
  std::span<const Matrix* const> in;   // forward values of the inputs
  std::span<Matrix* const> in_grad;    // accumulate into these; nullptr if the input needs no gradient
};

using BackwardFn = std::function<void(const BackwardArgs&)>;

/// Reverse-mode gradient tape.
///
/// Nodes are appended in evaluation order, so the node index is already a
/// topological order; backward() walks it once in reverse. A node requires a
/// gradient iff any of its inputs does. Constants and stop_gradient() outputs
/// never do, which is what makes the anchor branch a fixed target.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  /// Differentiable input (a parameter).
  Var leaf(Matrix value);
  /// Input that never receives a gradient.
  Var constant(Matrix value);
  /// Same value as x; the backward pass propagates nothing through it.
  Var stop_gradient(Var x);

  /// Records a primitive. `fn` may be empty for non-differentiable outputs.
  Var record(Matrix value, std::vector<Var> inputs, BackwardFn fn);

  const Matrix& value(Var v) const;
  /// Gradient accumulated by the last backward(); zeros of the right shape if
  /// the node was never reached.
  Matrix grad(Var v) const;
  bool requires_grad(Var v) const;

  /// Seeds dL/dL = 1 and propagates. Throws ContractError unless loss is 1x1.
  void backward(Var loss);

  std::size_t size() const noexcept { return nodes_.size(); }
  /// Number of nodes whose backward function ran in the last backward().
  std::size_t visited() const noexcept { return visited_; }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    bool has_grad = false;
  };

  const Node& node(Var v) const;
  Matrix& grad_slot(std::size_t id);

  std::vector<Node> nodes_;
  std::size_t visited_ = 0;
};

/// dL/dv for each of `vars` after running backward on `loss`.
std::vector<Matrix> gradients(Tape& tape, Var loss, std::span<const Var> vars);

enum class Unary { sigmoid, tanh, exp, log, relu };

// Primitives. All throw ShapeError on mismatched operands.
Var matmul(Tape& t, Var a, Var b);
/// a * b^T
Var matmul_nt(Tape& t, Var a, Var b);
Var transpose(Tape& t, Var a);
Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
/// Hadamard product.
Var mul(Tape& t, Var a, Var b);
Var scale(Tape& t, Var a, double s);
/// x (R x C) plus a 1 x C bias broadcast over rows.
Var add_row_bias(Tape& t, Var x, Var bias);
/// s (1x1) times every entry of x.
Var scalar_mul(Tape& t, Var s, Var x);
/// Throws DomainError for log of a non-positive entry.
Var unary(Tape& t, Unary op, Var x);
Var sigmoid(Tape& t, Var x);
Var tanh(Tape& t, Var x);
/// Sum of all entries (1x1).
Var sum(Tape& t, Var x);
Var mean(Tape& t, Var x);
Var select_rows(Tape& t, Var x, std::span<const std::size_t> rows);
Var concat_rows(Tape& t, Var a, Var b);

/// Scalar sigmoid shared by the value and tape paths.
double sigmoid(double x) noexcept;

}  // namespace asmil::ad
