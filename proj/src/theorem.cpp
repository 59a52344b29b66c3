// SPDX-License-Identifier: Apache-2.0
#include "asmil/theorem.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "asmil/attention.hpp"
#include "asmil/errors.hpp"

namespace asmil {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// Stand-in for -infinity in worst-case constructions; exp(kFloor / T) is 0
// for every scanned temperature.
constexpr double kFloor = -1e6;

}  // namespace

void ScoreSetSpec::validate() const {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw DomainError("tau must be > 0");
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw DomainError("gamma must be >= 0");
  if (high < 1) throw DomainError("need at least one high index");
  if (low < 1) throw DomainError("need at least one low index");
}

bool ScoreSetSpec::contains(std::span<const double> z) const {
  if (z.size() != size()) return false;
  for (std::size_t i = 0; i < high; ++i) {
    if (!(z[i] >= tau && z[i] <= tau + gamma)) return false;
  }
  for (std::size_t j = high; j < high + low; ++j) {
    if (!(z[j] <= -tau)) return false;
  }
  return true;
}

std::vector<double> sample_score_set(const ScoreSetSpec& spec, Rng& rng) {
  spec.validate();
  std::vector<double> z(spec.size());
  std::uniform_real_distribution<double> hi(spec.tau, spec.tau + spec.gamma);
  std::uniform_real_distribution<double> lo(-spec.tau - 5.0, -spec.tau);
  std::uniform_real_distribution<double> mid(-spec.tau, spec.tau);
  for (std::size_t i = 0; i < spec.high; ++i) z[i] = spec.gamma == 0.0 ? spec.tau : hi(rng);
  for (std::size_t j = 0; j < spec.low; ++j) z[spec.high + j] = lo(rng);
  for (std::size_t k = 0; k < spec.n_mid; ++k) {
    double v = mid(rng);
    while (v == -spec.tau) v = mid(rng);  // open interval
    z[spec.high + spec.low + k] = v;
  }
  return z;
}

NsfBoundReport check_nsf_bounds(std::span<const double> z, const ScoreSetSpec& spec) {
  spec.validate();
  if (!spec.contains(z)) throw DomainError("check_nsf_bounds: score vector is not in the score set");
  const auto a = nsf(z);
  NsfBoundReport r;
  const double et = std::exp(-spec.tau);
  r.ratio_bound = (1.0 + et) / (1.0 + std::exp(-(spec.tau + spec.gamma)));
  r.ratio_bound_loose = 1.0 + et;
  r.low_bound = et / static_cast<double>(spec.high);
  const auto hb = a.begin();
  const auto he = a.begin() + static_cast<std::ptrdiff_t>(spec.high);
  r.max_high_ratio = *std::max_element(hb, he) / *std::min_element(hb, he);
  r.max_low_weight = *std::max_element(he, he + static_cast<std::ptrdiff_t>(spec.low));
  const double slack = 1.0 + kBoundSlack;
  r.ratio_ok = r.max_high_ratio <= r.ratio_bound * slack &&
               r.max_high_ratio <= r.ratio_bound_loose * slack;
  r.low_ok = r.max_low_weight <= r.low_bound * slack;
  return r;
}

NsfSweep sweep_nsf_bounds(const ScoreSetSpec& spec, std::size_t samples, Rng& rng) {
  NsfSweep s;
  for (std::size_t n = 0; n < samples; ++n) {
    const auto z = sample_score_set(spec, rng);
    const auto r = check_nsf_bounds(z, spec);
    ++s.samples;
    if (!r.ok()) ++s.violations;
    s.max_high_ratio = std::max(s.max_high_ratio, r.max_high_ratio);
    s.max_low_weight = std::max(s.max_low_weight, r.max_low_weight);
    s.worst_bound_fraction =
        std::max({s.worst_bound_fraction, r.max_high_ratio / r.ratio_bound,
                  r.max_low_weight / r.low_bound});
  }
  return s;
}

double softmax_low_supremum(double tau, double temperature, std::size_t h) {
  if (!(temperature > 0.0)) throw DomainError("softmax_low_supremum: T must be > 0");
  if (h < 1) throw DomainError("softmax_low_supremum: h must be >= 1");
  const double e = 2.0 * tau / temperature;
  if (e > 700.0) return std::exp(-e) / static_cast<double>(h);  // 1/(h e^x + 1) with e^x overflowing
  return 1.0 / (static_cast<double>(h) * std::exp(e) + 1.0);
}

std::vector<double> softmax_low_worst_case(const ScoreSetSpec& spec, double floor_score) {
  spec.validate();
  std::vector<double> z(spec.size(), floor_score);
  for (std::size_t i = 0; i < spec.high; ++i) z[i] = spec.tau;
  z[spec.high] = -spec.tau;
  return z;
}

double softmax_low_mass(std::span<const double> z, const ScoreSetSpec& spec, double temperature) {
  const auto a = softmax_t(z, temperature);
  const auto lb = a.begin() + static_cast<std::ptrdiff_t>(spec.high);
  return *std::max_element(lb, lb + static_cast<std::ptrdiff_t>(spec.low));
}

void FeasibilityTargets::validate() const {
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw DomainError("epsilon must be in (0, 1)");
  if (!(kappa > 1.0)) throw DomainError("kappa must be > 1");
}

FeasibilityTargets FeasibilityTargets::from_nsf(const ScoreSetSpec& spec) {
  spec.validate();
  const double et = std::exp(-spec.tau);
  return {et / static_cast<double>(spec.high),
          (1.0 + et) / (1.0 + std::exp(-(spec.tau + spec.gamma)))};
}

FeasibilityReport temperature_feasibility(const ScoreSetSpec& spec,
                                          const FeasibilityTargets& targets) {
  spec.validate();
  targets.validate();
  const double h = static_cast<double>(spec.high);
  const double log_main = std::log(h / targets.epsilon);
  if (!(log_main > 0.0)) throw DomainError("temperature_feasibility: need log(h / epsilon) > 0");

  FeasibilityReport r;
  // With a single high index the equalization ratio is identically 1.
  r.t_min = (spec.gamma == 0.0 || spec.high == 1) ? 0.0 : spec.gamma / std::log(targets.kappa);
  r.t_max_main = 2.0 * spec.tau / log_main;
  const double log_sharp = std::log(1.0 / targets.epsilon - 1.0) - std::log(h);
  r.t_max_sharp = log_sharp > 0.0 ? 2.0 * spec.tau / log_sharp : kInf;
  r.feasible_main = r.t_min <= r.t_max_main;
  r.feasible = r.t_min <= r.t_max_sharp;

  const double slack = 1.0 + kBoundSlack;
  const auto worst_low = softmax_low_worst_case(spec, kFloor);
  for (std::size_t k = 0; k < kTemperatureGrid; ++k) {
    GridPoint g;
    g.temperature = std::pow(10.0, -3.0 + 6.0 * static_cast<double>(k) /
                                              static_cast<double>(kTemperatureGrid - 1));
    g.low_mass = softmax_low_mass(worst_low, spec, g.temperature);
    g.high_ratio = spec.high >= 2 ? std::exp(spec.gamma / g.temperature) : 1.0;
    g.suppression_ok = g.low_mass <= targets.epsilon * slack;
    g.equalization_ok = g.high_ratio <= targets.kappa * slack;
    if (g.suppression_ok && g.equalization_ok) ++r.grid_feasible;
    r.grid.push_back(g);
  }

  if (!r.feasible) {
    // One high at tau + gamma, remaining highs at tau, one low at -tau, other
    // lows at the floor, middles just above -tau.
    std::vector<double> z(spec.size(), kFloor);
    for (std::size_t i = 0; i < spec.high; ++i) z[i] = spec.tau;
    z[0] = spec.tau + spec.gamma;
    z[spec.high] = -spec.tau;
    for (std::size_t k = 0; k < spec.n_mid; ++k) {
      z[spec.high + spec.low + k] = std::nextafter(-spec.tau, 0.0);
    }
    bool holds = true;
    for (const auto& g : r.grid) {
      const double low = softmax_low_mass(z, spec, g.temperature);
      double ratio = 1.0;
      if (spec.high >= 2) {
        const auto hb = z.begin();
        const auto he = z.begin() + static_cast<std::ptrdiff_t>(spec.high);
        ratio = std::exp((*std::max_element(hb, he) - *std::min_element(hb, he)) / g.temperature);
      }
      const bool meets = low <= targets.epsilon * slack && ratio <= targets.kappa * slack;
      if (meets) holds = false;
    }
    r.witness = std::move(z);
    r.witness_holds = holds;
  }
  return r;
}

}  // namespace asmil
