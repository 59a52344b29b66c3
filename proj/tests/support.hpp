// SPDX-License-Identifier: Apache-2.0
// Shared helpers for the unit and acceptance tests.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "asmil/matrix.hpp"
#include "asmil/model.hpp"
#include "asmil/params.hpp"

namespace asmil::testing {

inline Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double lo = -2.0,
                            double hi = 2.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  Matrix m(r, c);
  for (double& v : m.data()) v = d(rng);
  return m;
}

inline std::vector<double> random_vector(std::size_t n, Rng& rng, double lo = -2.0,
                                         double hi = 2.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

/// Uniform draw from the probability simplex (normalized exponentials).
inline std::vector<double> random_simplex(std::size_t n, Rng& rng) {
  std::exponential_distribution<double> e(1.0);
  std::vector<double> p(n);
  double s = 0.0;
  for (double& x : p) s += (x = e(rng));
  for (double& x : p) x /= s;
  return p;
}

inline Bag random_bag(std::size_t m, std::size_t d, int label, Rng& rng,
                      const std::string& id = "bag") {
  return Bag{id, random_matrix(m, d, rng), label, {}};
}

/// Central differences with step h.
inline std::vector<double> numeric_gradient(const std::function<double()>& f,
                                            std::span<double> x, double h = 1e-4) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f();
    x[i] = keep - h;
    const double down = f();
    x[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// |a - n| / max(|a|, |n|, floor): relative error that does not blow up for
/// entries whose true gradient is (numerically) zero.
inline double rel_err(double a, double n, double floor = 1e-4) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

inline double max_rel_err(std::span<const double> a, std::span<const double> n,
                          double floor = 1e-4) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, rel_err(a[i], n[i], floor));
  return worst;
}

inline double linf(std::span<const double> a, std::span<const double> b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

inline double sum(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

}  // namespace asmil::testing
