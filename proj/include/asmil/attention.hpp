// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "asmil/matrix.hpp"
#include "asmil/tape.hpp"

namespace asmil {

/// Entries below this are clamped before taking logs in kl()/jsd().
inline constexpr double kKlClamp = 1e-12;

// Score vector -> probability simplex maps. Inputs must be non-empty and finite.

/// exp(z_i/T) / sum_j exp(z_j/T), max-subtracted. Throws DomainError for T <= 0.
std::vector<double> softmax_t(std::span<const double> z, double temperature = 1.0);

/// Normalized sigmoid: sigma(z_i) / sum_j sigma(z_j).
std::vector<double> nsf(std::span<const double> z);

struct EntmaxOptions {
  double tolerance = 1e-10;
  int max_iterations = 200;
};

/// Closed form [((a-1)/a)(z_i - tau)]_+^(1/(a-1)) with tau found by bisection.
/// Throws DomainError for a <= 1 or tol <= 0.
std::vector<double> entmax(std::span<const double> z, double a, EntmaxOptions opts = {});

/// zeta * softmax(z) + (1 - zeta) * nsf(z) with zeta = sigma(xi).
std::vector<double> mixed_attention(std::span<const double> z, double xi);

/// sum p_i log(p_i / q_i) with both clamped at kKlClamp. ShapeError on length mismatch.
double kl(std::span<const double> p, std::span<const double> q);

/// Jensen-Shannon divergence, in [0, log 2].
double jsd(std::span<const double> p, std::span<const double> q);

/// Row-wise versions over a matrix of score rows.
Matrix softmax_rows(const Matrix& z, double temperature = 1.0);
Matrix nsf_rows(const Matrix& z);
Matrix entmax_rows(const Matrix& z, double a, EntmaxOptions opts = {});
Matrix mixed_rows(const Matrix& z, double xi);

namespace ad {

/// Row-wise temperature softmax.
Var softmax_rows(Tape& t, Var z, double temperature = 1.0);
/// Row-wise normalized sigmoid.
Var nsf_rows(Tape& t, Var z);
/// Row-wise sigma(xi)*softmax + (1-sigma(xi))*nsf; xi is a 1x1 variable.
Var mixed_rows(Tape& t, Var z, Var xi);
/// Mean over rows of KL(p_row || q_row), differentiable in both arguments.
Var kl_rows_mean(Tape& t, Var p, Var q);

}  // namespace ad

}  // namespace asmil
