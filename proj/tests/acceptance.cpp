// SPDX-License-Identifier: Apache-2.0
// Acceptance report: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "asmil/anchor.hpp"
#include "asmil/attention.hpp"
#include "asmil/dataset.hpp"
#include "asmil/metrics.hpp"
#include "asmil/model.hpp"
#include "asmil/tape.hpp"
#include "asmil/theorem.hpp"
#include "asmil/trainer.hpp"
#include "support.hpp"

namespace {

using namespace asmil;
using namespace asmil::testing;

struct Outcome {
  bool ok = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---- 1: total-loss gradients against central differences -----------------

Outcome gradient_correctness() {
  Rng rng(101);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    std::uniform_int_distribution<int> coin(0, 1);
    TrainConfig cfg;
    cfg.model.flavor = Flavor::asmil;
    cfg.model.input_dim = coin(rng) ? 8 : 4;
    cfg.model.num_tokens = coin(rng) ? 4 : 2;
    cfg.model.num_classes = coin(rng) ? 3 : 2;
    cfg.beta = 1.0;
    cfg.anchor_map.kind = AnchorMap::Kind::nsf;
    const std::size_t m = coin(rng) ? 12 : 3;

    auto perturbed = [&](std::uint64_t seed) {
      ParamSet p = init_params(cfg.model, seed);
      for (auto& e : p.entries())
        for (double& v : e.value.data()) v += std::uniform_real_distribution<>(-0.5, 0.5)(rng);
      return p;
    };
    const ParamSet params = perturbed(2 * trial + 1);
    const AnchorState anchor = make_anchor(perturbed(2 * trial + 2), cfg.model, cfg.ema);
    std::uniform_int_distribution<int> label(0, int(cfg.model.num_classes) - 1);
    const Bag bag = random_bag(m, cfg.model.input_dim, label(rng), rng);
    const DropMask mask = token_drop_mask(cfg.model.num_tokens, cfg.drop_rate, rng);

    ad::Tape t;
    BoundParams p(t, params, true);
    t.backward(total_loss(t, bag, p, cfg, &anchor, nullptr, &mask).total);
    ParamSet probe = params;
    auto f = [&] {
      ad::Tape u;
      BoundParams q(u, probe, false);
      return u.value(total_loss(u, bag, q, cfg, &anchor, nullptr, &mask).total)(0, 0);
    };
    for (std::size_t i = 0; i < probe.size(); ++i) {
      const auto num = numeric_gradient(f, probe.entries()[i].value.data(), 1e-4);
      worst = std::max(worst, max_rel_err(t.grad(p.vars()[i]).data(), num));
    }
  }
  return {worst < 1e-5, fmt("20 configs, max rel err %.3g (< 1e-5)", worst)};
}

// ---- 2: stabilization gradient w.r.t. scores ------------------------------

Outcome stabilization_identity() {
  Rng rng(202);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t m = 2 + trial % 19;
    const auto z = random_vector(m, rng, -4, 4);
    const auto target = random_simplex(m, rng);
    ad::Tape t;
    const auto zv = t.leaf(Matrix::row_vector(z));
    const auto online = ad::softmax_rows(t, zv);
    t.backward(stabilization_loss(t, online, t.constant(Matrix::row_vector(target))));
    const auto alpha = softmax_t(z);
    const auto& g = t.grad(zv);
    for (std::size_t i = 0; i < m; ++i) worst = std::max(worst, std::abs(g[i] - (alpha[i] - target[i])));
  }
  return {worst < 1e-10, fmt("1000 pairs, max abs err %.3g (< 1e-10)", worst)};
}

// ---- 3: NSF bounds and the softmax low-mass supremum ----------------------

Outcome selective_flattening_bounds() {
  Rng rng(303);
  std::size_t samples = 0, violations = 0, sup_exceed = 0, sup_far = 0;
  double worst_gap = 0.0;
  for (double tau : {1.0, 2.0, 3.0, 5.0})
    for (double gamma : {0.0, 0.5, 1.0, 2.0})
      for (std::size_t h : {1, 3, 8})
        for (std::size_t low : {1, 5}) {
          const ScoreSetSpec spec{tau, gamma, h, low, 3};
          const auto sweep = sweep_nsf_bounds(spec, 1100, rng);
          samples += sweep.samples;
          violations += sweep.violations;
          for (double temp : {0.5, 1.0, 2.0}) {
            const double sup = softmax_low_supremum(tau, temp, h);
            for (int k = 0; k < 100; ++k) {
              const auto z = sample_score_set(spec, rng);
              if (softmax_low_mass(z, spec, temp) > sup * (1.0 + kBoundSlack)) ++sup_exceed;
            }
            const double worst =
                softmax_low_mass(softmax_low_worst_case(spec, -tau - 50.0 * temp), spec, temp);
            if (worst > sup * (1.0 + kBoundSlack)) ++sup_exceed;
            const double gap = 1.0 - worst / sup;
            worst_gap = std::max(worst_gap, gap);
            if (gap > 0.01) ++sup_far;
          }
        }
  const bool ok = samples >= 100000 && violations == 0 && sup_exceed == 0 && sup_far == 0;
  return {ok, fmt("%zu samples, %zu violations, %zu supremum exceedances, worst-case gap %.2e (< 1%%)",
                  samples, violations, sup_exceed, worst_gap)};
}

// ---- 4: no single softmax temperature meets the NSF targets --------------

Outcome temperature_infeasibility() {
  const ScoreSetSpec spec{1.0, 4.0, 3, 2, 0};
  const auto targets = FeasibilityTargets::from_nsf(spec);
  const auto r = temperature_feasibility(spec, targets);
  const bool ok = r.grid_feasible == 0 && !r.feasible && !r.feasible_main && r.witness_holds;
  return {ok, fmt("eps %.4f kappa %.4f: T_min %.3f > T_max %.3f/%.3f, %zu of %zu grid points feasible",
                  targets.epsilon, targets.kappa, r.t_min, r.t_max_main, r.t_max_sharp,
                  r.grid_feasible, r.grid.size())};
}

// ---- 5: MUSK1 cross-validation --------------------------------------------

Outcome musk_benchmark(const std::string& path) {
  Dataset ds;
  try {
    ds = load_dataset(path, DatasetFormat::bagcsv);
  } catch (const std::exception& e) {
    return {false, std::string("cannot load MUSK1: ") + e.what()};
  }
  TrainConfig cfg;
  cfg.model.flavor = Flavor::abmil;
  cfg.model.input_dim = ds.dim;
  cfg.model.num_classes = ds.num_classes;
  cfg.model.embed_dim = 128;
  cfg.model.hidden_dim = 64;
  cfg.anchor_map.kind = AnchorMap::Kind::nsf;
  cfg.beta = 1.0;
  cfg.lr = 5e-4;
  cfg.epochs = 40;
  cfg.standardize = true;
  cfg.probe_bags = 0;
  const auto split = cv_split(ds.bags, 10, 0);
  double mean = 0.0;
  std::vector<double> accs;
  for (std::size_t k = 0; k < 10; ++k) {
    const auto train = pick(ds.bags, split.train_indices(k));
    const auto test = pick(ds.bags, split.test_indices(k));
    const auto res = fit(train, {}, cfg);
    const auto ev = evaluate(cfg.model, res.params, res.scaler.apply(test));
    accs.push_back(ev.accuracy);
    mean += ev.accuracy / 10.0;
  }
  double var = 0.0;
  for (double a : accs) var += (a - mean) * (a - mean) / 9.0;
  return {mean >= 0.85, fmt("%zu bags, D=%zu, 10-fold accuracy %.4f +- %.4f (>= 0.85)", ds.bags.size(),
                            ds.dim, mean, std::sqrt(var))};
}

// ---- 6: anchor stabilizes attention on synthetic bags --------------------

struct StabilityRun {
  double final_jsd = 0.0;
  double test_auc = 0.0;
};

StabilityRun stability_run(const std::vector<Bag>& train, const std::vector<Bag>& test, double beta,
                           std::uint64_t seed) {
  TrainConfig cfg;
  cfg.model.flavor = Flavor::abmil;
  cfg.model.input_dim = 32;
  cfg.model.hidden_dim = 64;
  cfg.anchor_map.kind = AnchorMap::Kind::nsf;
  cfg.beta = beta;
  cfg.lr = 5e-4;
  cfg.epochs = 40;
  cfg.seed = seed;
  cfg.probe_bags = test.size();
  const auto res = fit(train, test, cfg);
  StabilityRun out;
  out.final_jsd = stability_curve(res.trace, 10).final_window_mean;
  out.test_auc = evaluate(cfg.model, res.params, test).macro_auc;
  return out;
}

Outcome stability_effect() {
  bool ok = true;
  std::string detail;
  for (std::uint64_t seed : {1, 2, 3}) {
    SyntheticBagSpec spec;
    spec.n_bags = 200;
    spec.dim = 32;
    spec.min_instances = 20;
    spec.max_instances = 60;
    spec.witness_rate = 0.1;
    spec.seed = seed;
    const auto ds = generate_synthetic(spec);
    const auto split = cv_split(ds.bags, 4, seed);
    const auto train = pick(ds.bags, split.train_indices(0));
    const auto test = pick(ds.bags, split.test_indices(0));
    const auto with = stability_run(train, test, 1.0, seed);
    const auto without = stability_run(train, test, 0.0, seed);
    const bool seed_ok = with.final_jsd < without.final_jsd && with.test_auc >= without.test_auc - 0.02;
    ok = ok && seed_ok;
    detail += fmt("%sseed %llu: jsd %.3g vs %.3g, auc %.3f vs %.3f", detail.empty() ? "" : "; ",
                  static_cast<unsigned long long>(seed), with.final_jsd, without.final_jsd, with.test_auc,
                  without.test_auc);
  }
  return {ok, detail};
}

// ---- 7: token dropping ----------------------------------------------------

Outcome dropout_statistics() {
  Rng rng(707);
  bool ok = true;
  std::string detail;
  for (auto [n, rate] : {std::pair<std::size_t, double>{8, 0.5}, {16, 0.25}}) {
    const int draws = 100000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < draws; ++i) {
      const double k = double(token_drop_mask(n, rate, rng).kept_count);
      s += k;
      s2 += k * k;
    }
    const double mean = s / draws;
    const double se = std::sqrt((s2 / draws - mean * mean) / draws);
    const double expected = (1.0 - rate) * double(n);
    const double z = std::abs(mean - expected) / se;
    ok = ok && z <= 3.0;
    detail += fmt("N=%zu B=%.2f mean %.4f vs %.2f (%.2f SE); ", n, rate, mean, expected, z);
  }
  // Inference without a mask equals an explicit keep-all mask.
  ModelConfig mc;
  mc.input_dim = 6;
  mc.num_tokens = 8;
  const ParamSet params = init_params(mc, 7);
  bool same = true;
  for (int i = 0; i < 10; ++i) {
    const Bag bag = random_bag(5 + i, 6, i % 2, rng);
    const auto all = DropMask::all(mc.num_tokens);
    const auto a = asmil_forward(bag, mc, params, nullptr);
    const auto b = asmil_forward(bag, mc, params, &all);
    same = same && a.logits == b.logits && a.attention == b.attention;
  }
  ok = ok && same;
  detail += same ? "mask-none equals keep-all" : "mask-none differs from keep-all";
  return {ok, detail};
}

// ---- 8: affinely dependent bags are not identifiable from pooled features

Outcome affine_demonstrator() {
  Rng rng(808);
  std::size_t flagged = 0;
  double worst = 0.0;
  for (int b = 0; b < 100; ++b) {
    const std::size_t d = 1 + b % 10;
    const std::size_t m = d + 2 + b % 7;
    std::normal_distribution<> normal;
    Matrix x(m, d);
    for (double& v : x.data()) v = normal(rng);
    const auto dep = affine_dependence(x, 1e-8);
    if (!dep.dependent) continue;
    ++flagged;
    const auto alpha = random_simplex(m, rng);
    double amin = 1.0, pmax = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      amin = std::min(amin, alpha[i]);
      pmax = std::max(pmax, std::abs(dep.witness[i]));
    }
    const double eps = 0.5 * amin / pmax;
    std::vector<double> shifted(m);
    for (std::size_t i = 0; i < m; ++i) shifted[i] = alpha[i] + eps * dep.witness[i];
    const Matrix e1 = matmul(Matrix::row_vector(alpha), x);
    const Matrix e2 = matmul(Matrix::row_vector(shifted), x);
    worst = std::max(worst, linf(softmax_t(e1.data()), softmax_t(e2.data())));
  }
  return {flagged == 100 && worst < 1e-9,
          fmt("%zu/100 flagged dependent, max |softmax diff| %.3g (< 1e-9)", flagged, worst)};
}

// ---- 9: metric hand examples ----------------------------------------------

Outcome metric_oracles() {
  std::vector<std::string> failed;
  auto expect = [&](const char* name, double got, double want) {
    if (!(std::abs(got - want) < 1e-12)) failed.push_back(fmt("%s=%.15g want %.15g", name, got, want));
  };
  const std::vector<int> y4{1, 0, 0, 0};
  expect("f1 perfect", macro_f1(y4, y4, 2), 1.0);
  expect("f1 mixed", macro_f1(std::vector<int>{1, 1, 0, 0}, y4, 2), (0.8 + 2.0 / 3.0) / 2.0);
  expect("f1 constant", macro_f1(std::vector<int>{0, 0, 0, 0}, std::vector<int>{1, 0, 1, 0}, 2), 1.0 / 3.0);

  const std::vector<int> yb{1, 0, 1, 0};
  Matrix ranked{{0.1, 0.9}, {0.8, 0.2}, {0.3, 0.7}, {0.6, 0.4}};
  expect("auc perfect", macro_auc(ranked, yb, 2).value, 1.0);
  expect("auc ties", macro_auc(Matrix(4, 2, 0.5), yb, 2).value, 0.5);
  expect("auc pairs", binary_auc(std::vector<double>{0.9, 0.8, 0.4, 0.3}, yb), 0.75);

  using R = SurvivalRecord;
  expect("cidx perfect", c_index(std::vector<R>{{1, 1, 3}, {2, 1, 2}, {3, 1, 1}}), 1.0);
  expect("cidx reversed", c_index(std::vector<R>{{1, 1, 1}, {2, 1, 2}, {3, 1, 3}}), 0.0);
  expect("cidx censored", c_index(std::vector<R>{{1, 1, 3}, {2, 0, 1}, {3, 1, 2}}), 1.0);

  std::string detail = "9 examples";
  for (const auto& f : failed) detail += "; " + f;
  return {failed.empty(), failed.empty() ? detail + " reproduced" : detail};
}

// ---- 10: entmax limits ----------------------------------------------------

std::vector<double> entmax2_grid_oracle(std::span<const double> z) {
  const double zmax = *std::max_element(z.begin(), z.end());
  auto mass = [&](double tau) {
    double s = 0.0;
    for (double v : z) s += std::max(0.0, 0.5 * (v - tau));
    return s;
  };
  double lo = zmax - 3.0, hi = zmax, best = lo;
  for (int round = 0; round < 12; ++round) {
    const int n = 1000;
    double best_res = INFINITY;
    for (int k = 0; k <= n; ++k) {
      const double tau = lo + (hi - lo) * k / n;
      const double r = std::abs(mass(tau) - 1.0);
      if (r < best_res) best_res = r, best = tau;
    }
    const double step = (hi - lo) / n;
    lo = best - step;
    hi = best + step;
  }
  std::vector<double> a(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) a[i] = std::max(0.0, 0.5 * (z[i] - best));
  return a;
}

Outcome entmax_limits() {
  Rng rng(1010);
  double soft = 0.0, sparse = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto z = random_vector(2 + i % 15, rng, -3, 3);
    soft = std::max(soft, linf(entmax(z, 1.0001), softmax_t(z)));
    sparse = std::max(sparse, linf(entmax(z, 2.0), entmax2_grid_oracle(z)));
  }
  return {soft < 1e-3 && sparse < 1e-6,
          fmt("a=1.0001 vs softmax %.3g (< 1e-3), a=2 vs grid oracle %.3g (< 1e-6)", soft, sparse)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance report"};
  std::string musk = "data/musk1.csv";
  std::vector<int> only;
  app.add_option("--musk1", musk, "MUSK1 bagcsv file")->capture_default_str();
  app.add_option("--only", only, "Run only these criteria");
  CLI11_PARSE(app, argc, argv);

  struct Criterion {
    int id;
    const char* name;
    double limit_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "gradient correctness", 30, gradient_correctness},
      {2, "stabilization gradient identity", 5, stabilization_identity},
      {3, "selective flattening bounds", 60, selective_flattening_bounds},
      {4, "single-temperature infeasibility", 30, temperature_infeasibility},
      {5, "MUSK1 benchmark", 600, [&] { return musk_benchmark(musk); }},
      {6, "stability effect", 900, stability_effect},
      {7, "dropout statistics", 10, dropout_statistics},
      {8, "affine-dependence demonstrator", 10, affine_demonstrator},
      {9, "metric oracles", 1, metric_oracles},
      {10, "entmax limits", 10, entmax_limits},
  };
  const std::set<int> selected(only.begin(), only.end());
  int failures = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome r;
    try {
      r = c.run();
    } catch (const std::exception& e) {
      r = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool pass = r.ok && secs < c.limit_s;
    if (!pass) ++failures;
    std::printf("%s %2d %s: %s [%.2fs / %.0fs]\n", pass ? "PASS" : "FAIL", c.id, c.name, r.detail.c_str(),
                secs, c.limit_s);
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
