// SPDX-License-Identifier: Apache-2.0
#include "asmil/attention.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "asmil/errors.hpp"

namespace asmil {

namespace {

void require_nonempty(std::span<const double> z, const char* op) {
  if (z.empty()) throw ShapeError(std::string(op) + ": empty score vector");
}

void require_same_length(std::span<const double> p, std::span<const double> q, const char* op) {
  if (p.size() != q.size()) {
    throw ShapeError(std::string(op) + ": length " + std::to_string(p.size()) + " vs " +
                     std::to_string(q.size()));
  }
}

template <typename RowFn>
Matrix map_rows(const Matrix& z, RowFn fn) {
  Matrix out(z.rows(), z.cols());
  for (std::size_t r = 0; r < z.rows(); ++r) {
    auto row = fn(z.row(r));
    std::copy(row.begin(), row.end(), out.row(r).begin());
  }
  return out;
}

}  // namespace

std::vector<double> softmax_t(std::span<const double> z, double temperature) {
  require_nonempty(z, "softmax_t");
  if (!(temperature > 0.0)) {
    throw DomainError("softmax_t: temperature must be > 0, got " + std::to_string(temperature));
  }
  const double zmax = *std::max_element(z.begin(), z.end());
  std::vector<double> out(z.size());
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    out[i] = std::exp((z[i] - zmax) / temperature);
    s += out[i];
  }
  for (double& v : out) v /= s;
  return out;
}

std::vector<double> nsf(std::span<const double> z) {
  require_nonempty(z, "nsf");
  std::vector<double> out(z.size());
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    out[i] = ad::sigmoid(z[i]);
    s += out[i];
  }
  for (double& v : out) v /= s;
  return out;
}

std::vector<double> entmax(std::span<const double> z, double a, EntmaxOptions opts) {
  require_nonempty(z, "entmax");
  if (!(a > 1.0)) throw DomainError("entmax: a must be > 1, got " + std::to_string(a));
  if (!(opts.tolerance > 0.0)) throw DomainError("entmax: tolerance must be > 0");

  const double scale = (a - 1.0) / a;
  const double power = 1.0 / (a - 1.0);
  auto weights = [&](double tau, std::vector<double>& out) {
    double s = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double base = scale * (z[i] - tau);
      out[i] = base > 0.0 ? std::pow(base, power) : 0.0;
      s += out[i];
    }
    return s;
  };

  // At tau = max z every weight is 0; at tau = max z - a/(a-1) the top weight
  // alone is 1. The mass is decreasing in tau, so the root lies in between.
  const double zmax = *std::max_element(z.begin(), z.end());
  double lo = zmax - 1.0 / scale;
  double hi = zmax;
  std::vector<double> out(z.size());
  if (weights(lo, out) < 1.0) throw Error("entmax: bisection failed to bracket the threshold");

  for (int it = 0; it < opts.max_iterations; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double s = weights(mid, out);
    if (std::abs(s - 1.0) <= opts.tolerance) break;
    if (s > 1.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  const double s = std::accumulate(out.begin(), out.end(), 0.0);
  for (double& v : out) v /= s;
  return out;
}

std::vector<double> mixed_attention(std::span<const double> z, double xi) {
  const double zeta = ad::sigmoid(xi);
  auto smx = softmax_t(z, 1.0);
  auto ns = nsf(z);
  for (std::size_t i = 0; i < smx.size(); ++i) smx[i] = zeta * smx[i] + (1.0 - zeta) * ns[i];
  return smx;
}

double kl(std::span<const double> p, std::span<const double> q) {
  require_same_length(p, q, "kl");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pi = std::max(p[i], kKlClamp);
    const double qi = std::max(q[i], kKlClamp);
    s += pi * std::log(pi / qi);
  }
  // Clamping can leave a tiny negative residue when p == q up to rounding.
  return std::max(s, 0.0);
}

double jsd(std::span<const double> p, std::span<const double> q) {
  require_same_length(p, q, "jsd");
  std::vector<double> m(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) m[i] = 0.5 * (p[i] + q[i]);
  const double v = 0.5 * kl(p, m) + 0.5 * kl(q, m);
  return std::min(v, std::log(2.0));
}

Matrix softmax_rows(const Matrix& z, double temperature) {
  return map_rows(z, [&](std::span<const double> r) { return softmax_t(r, temperature); });
}

Matrix nsf_rows(const Matrix& z) {
  return map_rows(z, [](std::span<const double> r) { return nsf(r); });
}

Matrix entmax_rows(const Matrix& z, double a, EntmaxOptions opts) {
  return map_rows(z, [&](std::span<const double> r) { return entmax(r, a, opts); });
}

Matrix mixed_rows(const Matrix& z, double xi) {
  return map_rows(z, [&](std::span<const double> r) { return mixed_attention(r, xi); });
}

namespace ad {

Var softmax_rows(Tape& t, Var z, double temperature) {
  Matrix out = asmil::softmax_rows(t.value(z), temperature);
  return t.record(std::move(out), {z}, [temperature](const BackwardArgs& g) {
    if (!g.in_grad[0]) return;
    Matrix& dz = *g.in_grad[0];
    for (std::size_t r = 0; r < g.out.rows(); ++r) {
      auto y = g.out.row(r);
      auto gy = g.grad.row(r);
      double dot = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) dot += gy[i] * y[i];
      auto d = dz.row(r);
      for (std::size_t i = 0; i < y.size(); ++i) d[i] += y[i] * (gy[i] - dot) / temperature;
    }
  });
}

Var nsf_rows(Tape& t, Var z) {
  Matrix out = asmil::nsf_rows(t.value(z));
  return t.record(std::move(out), {z}, [](const BackwardArgs& g) {
    if (!g.in_grad[0]) return;
    Matrix& dz = *g.in_grad[0];
    const Matrix& zv = *g.in[0];
    for (std::size_t r = 0; r < g.out.rows(); ++r) {
      auto alpha = g.out.row(r);
      auto ga = g.grad.row(r);
      auto zr = zv.row(r);
      double total = 0.0;
      for (double v : zr) total += sigmoid(v);
      double dot = 0.0;
      for (std::size_t i = 0; i < alpha.size(); ++i) dot += ga[i] * alpha[i];
      auto d = dz.row(r);
      for (std::size_t k = 0; k < alpha.size(); ++k) {
        const double s = sigmoid(zr[k]);
        d[k] += s * (1.0 - s) / total * (ga[k] - dot);
      }
    }
  });
}

Var mixed_rows(Tape& t, Var z, Var xi) {
  const Var smx = softmax_rows(t, z, 1.0);
  const Var ns = nsf_rows(t, z);
  const Var zeta = sigmoid(t, xi);
  return add(t, ns, scalar_mul(t, zeta, sub(t, smx, ns)));
}

Var kl_rows_mean(Tape& t, Var p, Var q) {
  const Matrix& pv = t.value(p);
  const Matrix& qv = t.value(q);
  require_same_shape(pv, qv, "kl_rows_mean");
  if (pv.rows() == 0) throw ShapeError("kl_rows_mean: no rows");
  double total = 0.0;
  for (std::size_t r = 0; r < pv.rows(); ++r) total += kl(pv.row(r), qv.row(r));
  const double inv_rows = 1.0 / static_cast<double>(pv.rows());
  return t.record(Matrix(1, 1, total * inv_rows), {p, q}, [inv_rows](const BackwardArgs& g) {
    const Matrix& pv = *g.in[0];
    const Matrix& qv = *g.in[1];
    const double s = g.grad(0, 0) * inv_rows;
    for (std::size_t i = 0; i < pv.size(); ++i) {
      const double pi = std::max(pv[i], kKlClamp);
      const double qi = std::max(qv[i], kKlClamp);
      if (g.in_grad[0] && pv[i] > kKlClamp) (*g.in_grad[0])[i] += s * (std::log(pi / qi) + 1.0);
      if (g.in_grad[1] && qv[i] > kKlClamp) (*g.in_grad[1])[i] -= s * pi / qi;
    }
  });
}

}  // namespace ad

}  // namespace asmil
