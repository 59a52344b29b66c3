// SPDX-License-Identifier: Apache-2.0
#include "asmil/tape.hpp"

#include <algorithm>
#include <cmath>

#include "asmil/errors.hpp"

namespace asmil::ad {

double sigmoid(double x) noexcept {
  // Two branches so neither exp() can overflow.
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

const Tape::Node& Tape::node(Var v) const {
  if (v.id >= nodes_.size()) throw ContractError("tape: invalid variable handle");
  return nodes_[v.id];
}

Var Tape::leaf(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::stop_gradient(Var x) { return constant(value(x)); }

Var Tape::record(Matrix value, std::vector<Var> inputs, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  n.inputs.reserve(inputs.size());
  for (Var v : inputs) {
    const Node& in = node(v);
    n.inputs.push_back(v.id);
    n.requires_grad = n.requires_grad || in.requires_grad;
  }
  if (!fn) n.requires_grad = false;
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

const Matrix& Tape::value(Var v) const { return node(v).value; }

bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }

Matrix Tape::grad(Var v) const {
  const Node& n = node(v);
  if (!n.has_grad) return Matrix(n.value.rows(), n.value.cols());
  return n.grad;
}

Matrix& Tape::grad_slot(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.grad = Matrix(n.value.rows(), n.value.cols());
    n.has_grad = true;
  }
  return n.grad;
}

void Tape::backward(Var loss) {
  const Node& l = node(loss);
  if (l.value.rows() != 1 || l.value.cols() != 1) {
    throw ContractError("backward: loss must be 1x1, got " + l.value.shape_string());
  }
  for (Node& n : nodes_) {
    n.has_grad = false;
    n.grad = Matrix();
  }
  visited_ = 0;
  grad_slot(loss.id)(0, 0) = 1.0;

  std::vector<const Matrix*> in;
  std::vector<Matrix*> in_grad;
  for (std::size_t id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.has_grad || !n.requires_grad || !n.backward) continue;
    in.clear();
    in_grad.clear();
    for (std::size_t j : n.inputs) {
      in.push_back(&nodes_[j].value);
      in_grad.push_back(nodes_[j].requires_grad ? &grad_slot(j) : nullptr);
    }
    n.backward(BackwardArgs{n.value, n.grad, in, in_grad});
    ++visited_;
  }
}

std::vector<Matrix> gradients(Tape& tape, Var loss, std::span<const Var> vars) {
  tape.backward(loss);
  std::vector<Matrix> out;
  out.reserve(vars.size());
  for (Var v : vars) out.push_back(tape.grad(v));
  return out;
}

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

}  // namespace

Var matmul(Tape& t, Var a, Var b) {
  Matrix out = asmil::matmul(t.value(a), t.value(b));
  return t.record(std::move(out), {a, b}, [](const BackwardArgs& g) {
    if (g.in_grad[0]) accumulate(*g.in_grad[0], matmul_nt(g.grad, *g.in[1]));
    if (g.in_grad[1]) accumulate(*g.in_grad[1], matmul_tn(*g.in[0], g.grad));
  });
}

Var matmul_nt(Tape& t, Var a, Var b) {
  Matrix out = asmil::matmul_nt(t.value(a), t.value(b));
  return t.record(std::move(out), {a, b}, [](const BackwardArgs& g) {
    // out = a b^T: da = g b, db = g^T a
    if (g.in_grad[0]) accumulate(*g.in_grad[0], asmil::matmul(g.grad, *g.in[1]));
    if (g.in_grad[1]) accumulate(*g.in_grad[1], matmul_tn(g.grad, *g.in[0]));
  });
}

Var transpose(Tape& t, Var a) {
  return t.record(asmil::transpose(t.value(a)), {a}, [](const BackwardArgs& g) {
    if (g.in_grad[0]) accumulate(*g.in_grad[0], asmil::transpose(g.grad));
  });
}

Var add(Tape& t, Var a, Var b) {
  require_same_shape(t.value(a), t.value(b), "add");
  Matrix out = t.value(a);
  accumulate(out, t.value(b));
  return t.record(std::move(out), {a, b}, [](const BackwardArgs& g) {
    if (g.in_grad[0]) accumulate(*g.in_grad[0], g.grad);
    if (g.in_grad[1]) accumulate(*g.in_grad[1], g.grad);
  });
}

Var sub(Tape& t, Var a, Var b) {
  require_same_shape(t.value(a), t.value(b), "sub");
  Matrix out = t.value(a);
  axpy(out, -1.0, t.value(b));
  return t.record(std::move(out), {a, b}, [](const BackwardArgs& g) {
    if (g.in_grad[0]) accumulate(*g.in_grad[0], g.grad);
    if (g.in_grad[1]) axpy(*g.in_grad[1], -1.0, g.grad);
  });
}

Var mul(Tape& t, Var a, Var b) {
  const Matrix& av = t.value(a);
  const Matrix& bv = t.value(b);
  require_same_shape(av, bv, "mul");
  Matrix out(av.rows(), av.cols());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return t.record(std::move(out), {a, b}, [](const BackwardArgs& g) {
    const Matrix& x = *g.in[0];
    const Matrix& y = *g.in[1];
    if (g.in_grad[0])
      for (std::size_t i = 0; i < x.size(); ++i) (*g.in_grad[0])[i] += g.grad[i] * y[i];
    if (g.in_grad[1])
      for (std::size_t i = 0; i < y.size(); ++i) (*g.in_grad[1])[i] += g.grad[i] * x[i];
  });
}

Var scale(Tape& t, Var a, double s) {
  Matrix out = t.value(a);
  for (double& v : out.data()) v *= s;
  return t.record(std::move(out), {a}, [s](const BackwardArgs& g) {
    if (g.in_grad[0]) axpy(*g.in_grad[0], s, g.grad);
  });
}

Var add_row_bias(Tape& t, Var x, Var bias) {
  const Matrix& xv = t.value(x);
  const Matrix& bv = t.value(bias);
  require(bv.rows() == 1 && bv.cols() == xv.cols(),
          "add_row_bias: " + xv.shape_string() + " + " + bv.shape_string());
  Matrix out = xv;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += bv(0, c);
  return t.record(std::move(out), {x, bias}, [](const BackwardArgs& g) {
    if (g.in_grad[0]) accumulate(*g.in_grad[0], g.grad);
    if (g.in_grad[1]) {
      Matrix& db = *g.in_grad[1];
      for (std::size_t r = 0; r < g.grad.rows(); ++r)
        for (std::size_t c = 0; c < g.grad.cols(); ++c) db(0, c) += g.grad(r, c);
    }
  });
}

Var scalar_mul(Tape& t, Var s, Var x) {
  const Matrix& sv = t.value(s);
  require(sv.rows() == 1 && sv.cols() == 1, "scalar_mul: scale is " + sv.shape_string());
  Matrix out = t.value(x);
  const double k = sv(0, 0);
  for (double& v : out.data()) v *= k;
  return t.record(std::move(out), {s, x}, [](const BackwardArgs& g) {
    const double k = (*g.in[0])(0, 0);
    const Matrix& xv = *g.in[1];
    if (g.in_grad[0]) {
      double acc = 0.0;
      for (std::size_t i = 0; i < xv.size(); ++i) acc += g.grad[i] * xv[i];
      (*g.in_grad[0])(0, 0) += acc;
    }
    if (g.in_grad[1]) axpy(*g.in_grad[1], k, g.grad);
  });
}

Var unary(Tape& t, Unary op, Var x) {
  const Matrix& xv = t.value(x);
  Matrix out(xv.rows(), xv.cols());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const double v = xv[i];
    switch (op) {
      case Unary::sigmoid: out[i] = sigmoid(v); break;
      case Unary::tanh: out[i] = std::tanh(v); break;
      case Unary::exp: out[i] = std::exp(v); break;
      case Unary::log:
        if (!(v > 0.0)) throw DomainError("log of non-positive entry " + std::to_string(v));
        out[i] = std::log(v);
        break;
      case Unary::relu: out[i] = v > 0.0 ? v : 0.0; break;
    }
  }
  return t.record(std::move(out), {x}, [op](const BackwardArgs& g) {
    if (!g.in_grad[0]) return;
    Matrix& dx = *g.in_grad[0];
    const Matrix& xv = *g.in[0];
    for (std::size_t i = 0; i < xv.size(); ++i) {
      const double y = g.out[i];
      double d = 0.0;
      switch (op) {
        case Unary::sigmoid: d = y * (1.0 - y); break;
        case Unary::tanh: d = 1.0 - y * y; break;
        case Unary::exp: d = y; break;
        case Unary::log: d = 1.0 / xv[i]; break;
        case Unary::relu: d = xv[i] > 0.0 ? 1.0 : 0.0; break;
      }
      dx[i] += g.grad[i] * d;
    }
  });
}

Var sigmoid(Tape& t, Var x) { return unary(t, Unary::sigmoid, x); }
Var tanh(Tape& t, Var x) { return unary(t, Unary::tanh, x); }

Var sum(Tape& t, Var x) {
  double s = 0.0;
  for (double v : t.value(x).data()) s += v;
  return t.record(Matrix(1, 1, s), {x}, [](const BackwardArgs& g) {
    if (!g.in_grad[0]) return;
    const double d = g.grad(0, 0);
    for (double& v : g.in_grad[0]->data()) v += d;
  });
}

Var mean(Tape& t, Var x) {
  const auto n = static_cast<double>(t.value(x).size());
  if (n == 0) throw ShapeError("mean of empty matrix");
  return scale(t, sum(t, x), 1.0 / n);
}

Var select_rows(Tape& t, Var x, std::span<const std::size_t> rows) {
  const Matrix& xv = t.value(x);
  Matrix out(rows.size(), xv.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    require(rows[r] < xv.rows(), "select_rows: row index out of range");
    std::copy(xv.row(rows[r]).begin(), xv.row(rows[r]).end(), out.row(r).begin());
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return t.record(std::move(out), {x}, [idx = std::move(idx)](const BackwardArgs& g) {
    if (!g.in_grad[0]) return;
    Matrix& dx = *g.in_grad[0];
    for (std::size_t r = 0; r < idx.size(); ++r) {
      auto src = g.grad.row(r);
      auto dst = dx.row(idx[r]);
      for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
    }
  });
}

Var concat_rows(Tape& t, Var a, Var b) {
  const Matrix& av = t.value(a);
  const Matrix& bv = t.value(b);
  require(av.cols() == bv.cols(),
          "concat_rows: " + av.shape_string() + " over " + bv.shape_string());
  std::vector<double> data(av.data().begin(), av.data().end());
  data.insert(data.end(), bv.data().begin(), bv.data().end());
  const std::size_t split = av.size();
  return t.record(Matrix(av.rows() + bv.rows(), av.cols(), std::move(data)), {a, b},
                  [split](const BackwardArgs& g) {
                    auto gd = g.grad.data();
                    if (g.in_grad[0]) {
                      auto d = g.in_grad[0]->data();
                      for (std::size_t i = 0; i < split; ++i) d[i] += gd[i];
                    }
                    if (g.in_grad[1]) {
                      auto d = g.in_grad[1]->data();
                      for (std::size_t i = 0; i < d.size(); ++i) d[i] += gd[split + i];
                    }
                  });
}

}  // namespace asmil::ad
