// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "asmil/model.hpp"

namespace asmil {

/// Score vectors with `high` entries in [tau, tau + gamma], `low` entries
/// <= -tau and `n_mid` free entries. Layout: highs, then lows, then middles.
struct ScoreSetSpec {
  double tau = 1.0;
  double gamma = 0.0;
  std::size_t high = 1;
  std::size_t low = 1;
  std::size_t n_mid = 0;

  /// DomainError unless tau > 0, gamma >= 0, high >= 1, low >= 1.
  void validate() const;
  std::size_t size() const noexcept { return high + low + n_mid; }
  /// Whether z satisfies the high/low membership constraints.
  bool contains(std::span<const double> z) const;
};

/// Highs ~ U[tau, tau + gamma], lows ~ U[-tau - 5, -tau], middles ~ U(-tau, tau).
std::vector<double> sample_score_set(const ScoreSetSpec& spec, Rng& rng);

/// Relative slack granted to floating-point evaluation of the bounds.
inline constexpr double kBoundSlack = 1e-12;

struct NsfBoundReport {
  double max_high_ratio = 1.0;  // max over high pairs of alpha_i / alpha_h'
  double ratio_bound = 1.0;     // sigma(tau + gamma) / sigma(tau)
  double ratio_bound_loose = 1.0;  // 1 + e^-tau
  double max_low_weight = 0.0;
  double low_bound = 0.0;  // e^-tau / h
  bool ratio_ok = true;
  bool low_ok = true;

  bool ok() const noexcept { return ratio_ok && low_ok; }
};

/// Evaluates NSF on z and compares against the selective-flattening bounds.
/// DomainError when z is not in the score set.
NsfBoundReport check_nsf_bounds(std::span<const double> z, const ScoreSetSpec& spec);

struct NsfSweep {
  std::size_t samples = 0;
  std::size_t violations = 0;
  double max_high_ratio = 1.0;
  double max_low_weight = 0.0;
  /// Largest observed (value / bound) for either bound; <= 1 means no violation.
  double worst_bound_fraction = 0.0;
};

NsfSweep sweep_nsf_bounds(const ScoreSetSpec& spec, std::size_t samples, Rng& rng);

/// sup over the score set of a low entry's softmax weight: 1 / (h e^{2 tau / T} + 1).
/// DomainError unless T > 0 and h >= 1.
double softmax_low_supremum(double tau, double temperature, std::size_t h);

/// Highs at tau, one low at -tau, every other entry at `floor_score`.
std::vector<double> softmax_low_worst_case(const ScoreSetSpec& spec, double floor_score = -20.0);

/// Largest low-entry softmax weight of z at temperature T.
double softmax_low_mass(std::span<const double> z, const ScoreSetSpec& spec, double temperature);

struct FeasibilityTargets {
  double epsilon = 0.1;  // suppression
  double kappa = 2.0;    // equalization

  /// DomainError unless 0 < epsilon < 1 and kappa > 1.
  void validate() const;
  /// Targets achieved by NSF on the score set: e^-tau / h and sigma(tau+gamma)/sigma(tau).
  static FeasibilityTargets from_nsf(const ScoreSetSpec& spec);
};

struct GridPoint {
  double temperature = 0.0;
  double low_mass = 0.0;     // worst-case low weight at this T
  double high_ratio = 0.0;   // worst-case high/high ratio at this T
  bool suppression_ok = false;
  bool equalization_ok = false;
};

struct FeasibilityReport {
  /// Lower end of the interval, gamma / log(kappa); 0 when gamma = 0 or h = 1.
  double t_min = 0.0;
  /// Main-text upper end 2 tau / log(h / epsilon).
  double t_max_main = 0.0;
  /// Sharpened upper end 2 tau / (log(1/epsilon - 1) - log h); +inf when the
  /// denominator is not positive.
  double t_max_sharp = 0.0;
  bool feasible_main = false;
  /// Verdict, taken from the sharpened interval.
  bool feasible = false;

  std::vector<GridPoint> grid;
  /// Grid points meeting both targets on their worst-case vectors.
  std::size_t grid_feasible = 0;
  /// One fixed vector violating a target at every grid temperature (when infeasible).
  std::vector<double> witness;
  bool witness_holds = false;
};

/// Number of log-spaced temperatures scanned over [1e-3, 1e3].
inline constexpr std::size_t kTemperatureGrid = 64;

/// DomainError for invalid targets or when log(h / epsilon) <= 0.
FeasibilityReport temperature_feasibility(const ScoreSetSpec& spec, const FeasibilityTargets& targets);

}  // namespace asmil
