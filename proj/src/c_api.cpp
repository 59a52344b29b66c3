// SPDX-License-Identifier: Apache-2.0
#include "asmil/asmil.h"

#include <cmath>
#include <cstring>
#include <random>
#include <string>

#include <nlohmann/json.hpp>

#include "asmil/attention.hpp"
#include "asmil/config.hpp"
#include "asmil/dataset.hpp"
#include "asmil/errors.hpp"
#include "asmil/metrics.hpp"
#include "asmil/theorem.hpp"
#include "asmil/trainer.hpp"

using json = nlohmann::ordered_json;

struct asmil_dataset {
  asmil::Dataset data;
};

struct asmil_config {
  asmil::TrainConfig cfg;
};

struct asmil_model {
  asmil::TrainState state;
  asmil::AttentionTrace trace;
};

namespace {

thread_local std::string g_last_error;

asmil_status fail(asmil_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

template <class F>
asmil_status guard(F&& f) {
  g_last_error.clear();
  try {
    f();
    return ASMIL_OK;
  } catch (const asmil::ShapeError& e) {
    return fail(ASMIL_ERR_SHAPE, e.what());
  } catch (const asmil::DomainError& e) {
    return fail(ASMIL_ERR_DOMAIN, e.what());
  } catch (const asmil::ContractError& e) {
    return fail(ASMIL_ERR_CONTRACT, e.what());
  } catch (const asmil::ConfigError& e) {
    return fail(ASMIL_ERR_CONFIG, e.what());
  } catch (const asmil::ParseError& e) {
    return fail(ASMIL_ERR_PARSE, e.what());
  } catch (const asmil::SchemaError& e) {
    return fail(ASMIL_ERR_SCHEMA, e.what());
  } catch (const asmil::IoError& e) {
    return fail(ASMIL_ERR_IO, e.what());
  } catch (const asmil::NumericError& e) {
    return fail(ASMIL_ERR_NUMERIC, e.what());
  } catch (const json::exception& e) {
    return fail(ASMIL_ERR_PARSE, e.what());
  } catch (const std::exception& e) {
    return fail(ASMIL_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(ASMIL_ERR_INTERNAL, "unknown exception");
  }
}

struct ArgumentError : asmil::Error {
  using asmil::Error::Error;
};

template <class T>
void require(T* p, const char* what) {
  if (!p) throw ArgumentError(std::string(what) + " must not be NULL");
}

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json matrix_json(const asmil::Matrix& m) {
  json rows = json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    rows.push_back(std::vector<double>(m.row(r).begin(), m.row(r).end()));
  }
  return rows;
}

asmil::Matrix matrix_from(const json& rows) {
  if (!rows.is_array() || rows.empty() || !rows[0].is_array()) {
    throw asmil::ParseError("trace: attention entries must be non-empty arrays of rows");
  }
  asmil::Matrix m(rows.size(), rows[0].size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != m.cols()) throw asmil::ParseError("trace: ragged attention rows");
    for (std::size_t c = 0; c < m.cols(); ++c) m(r, c) = rows[r][c].get<double>();
  }
  return m;
}

json trace_json(const asmil::AttentionTrace& trace) {
  json bags = json::object();
  for (const auto& [id, epochs] : trace.bags) {
    json list = json::array();
    for (const auto& m : epochs) list.push_back(matrix_json(m));
    bags[id] = std::move(list);
  }
  return json{{"format", "asmil-trace v1"}, {"bags", std::move(bags)}};
}

asmil::AttentionTrace trace_from(const json& j) {
  if (!j.contains("format") || j["format"] != "asmil-trace v1" || !j.contains("bags")) {
    throw asmil::ParseError("trace: expected an 'asmil-trace v1' document");
  }
  asmil::AttentionTrace t;
  for (const auto& [id, epochs] : j["bags"].items()) {
    for (const auto& m : epochs) t.record(id, matrix_from(m));
  }
  return t;
}

json evaluation_json(const asmil::Evaluation& ev, std::span<const asmil::Bag> bags) {
  json preds = json::array();
  for (std::size_t i = 0; i < bags.size(); ++i) {
    preds.push_back({{"id", bags[i].id},
                     {"label", bags[i].label},
                     {"pred", ev.preds[i]},
                     {"probs", std::vector<double>(ev.probs.row(i).begin(), ev.probs.row(i).end())}});
  }
  return json{{"bags", bags.size()},
              {"accuracy", num(ev.accuracy)},
              {"macro_f1", num(ev.macro_f1)},
              {"macro_auc", num(ev.macro_auc)},
              {"auc_skipped_classes", ev.auc_skipped},
              {"predictions", std::move(preds)}};
}

void run_epochs(asmil::Trainer& t, std::size_t max_epochs, asmil_epoch_callback cb, void* user,
                const json& extra = json::object()) {
  std::size_t n = 0;
  while (!t.done() && (max_epochs == 0 || n < max_epochs)) {
    const auto m = t.run_epoch();
    ++n;
    if (cb) {
      if (extra.empty()) {
        cb(asmil::to_json_line(m).c_str(), user);
      } else {
        json rec = extra;
        rec.update(json::parse(asmil::to_json_line(m)));
        cb(rec.dump().c_str(), user);
      }
    }
  }
}

const std::vector<asmil::Bag> kNoBags;

const std::vector<asmil::Bag>& bags_of(const asmil_dataset* ds) {
  return ds ? ds->data.bags : kNoBags;
}

}  // namespace

extern "C" {

const char* asmil_version(void) { return "1.0.0"; }

const char* asmil_last_error(void) { return g_last_error.c_str(); }

const char* asmil_status_name(asmil_status s) {
  switch (s) {
    case ASMIL_OK: return "ok";
    case ASMIL_ERR_ARGUMENT: return "argument error";
    case ASMIL_ERR_SHAPE: return "shape error";
    case ASMIL_ERR_DOMAIN: return "domain error";
    case ASMIL_ERR_CONTRACT: return "contract error";
    case ASMIL_ERR_CONFIG: return "config error";
    case ASMIL_ERR_PARSE: return "parse error";
    case ASMIL_ERR_SCHEMA: return "schema error";
    case ASMIL_ERR_IO: return "io error";
    case ASMIL_ERR_NUMERIC: return "numeric error";
    case ASMIL_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

void asmil_string_free(char* s) { std::free(s); }

void asmil_synthetic_spec_default(asmil_synthetic_spec* spec) {
  if (!spec) return;
  const asmil::SyntheticBagSpec d;
  *spec = {d.n_bags,       d.min_instances, d.max_instances, d.dim,
           d.witness_rate, d.signal_shift,  d.noise_scale,   d.seed};
}

#define ASMIL_GUARD_ARGS(...)                                        \
  do {                                                               \
    try {                                                            \
      __VA_ARGS__;                                                   \
    } catch (const ArgumentError& e) {                               \
      return fail(ASMIL_ERR_ARGUMENT, e.what());                     \
    }                                                                \
  } while (0)

asmil_status asmil_dataset_load(const char* path, const char* format, asmil_dataset** out) {
  ASMIL_GUARD_ARGS(require(path, "path"); require(format, "format"); require(out, "out"));
  return guard([&] {
    const auto fmt = asmil::parse_format(format);
    *out = new asmil_dataset{asmil::load_dataset(path, fmt)};
  });
}

asmil_status asmil_dataset_generate(const asmil_synthetic_spec* spec, asmil_dataset** out) {
  ASMIL_GUARD_ARGS(require(spec, "spec"); require(out, "out"));
  return guard([&] {
    asmil::SyntheticBagSpec s;
    s.n_bags = spec->n_bags;
    s.min_instances = spec->min_instances;
    s.max_instances = spec->max_instances;
    s.dim = spec->dim;
    s.witness_rate = spec->witness_rate;
    s.signal_shift = spec->signal_shift;
    s.noise_scale = spec->noise_scale;
    s.seed = spec->seed;
    *out = new asmil_dataset{asmil::generate_synthetic(s)};
  });
}

asmil_status asmil_dataset_save(const asmil_dataset* ds, const char* path) {
  ASMIL_GUARD_ARGS(require(ds, "dataset"); require(path, "path"));
  return guard([&] { asmil::save_dataset(path, ds->data); });
}

size_t asmil_dataset_size(const asmil_dataset* ds) { return ds ? ds->data.bags.size() : 0; }
size_t asmil_dataset_dim(const asmil_dataset* ds) { return ds ? ds->data.dim : 0; }
size_t asmil_dataset_num_classes(const asmil_dataset* ds) { return ds ? ds->data.num_classes : 0; }

asmil_status asmil_dataset_bag(const asmil_dataset* ds, size_t index, const char** id, int* label,
                               size_t* instances) {
  ASMIL_GUARD_ARGS(require(ds, "dataset"));
  if (index >= ds->data.bags.size()) {
    return fail(ASMIL_ERR_ARGUMENT, "bag index " + std::to_string(index) + " out of range");
  }
  const auto& b = ds->data.bags[index];
  if (id) *id = b.id.c_str();
  if (label) *label = b.label;
  if (instances) *instances = b.features.rows();
  return ASMIL_OK;
}

void asmil_dataset_free(asmil_dataset* ds) { delete ds; }

asmil_status asmil_config_new(asmil_config** out) {
  ASMIL_GUARD_ARGS(require(out, "out"));
  return guard([&] { *out = new asmil_config{}; });
}

asmil_status asmil_config_load(const char* path, asmil_config** out) {
  ASMIL_GUARD_ARGS(require(path, "path"); require(out, "out"));
  return guard([&] { *out = new asmil_config{asmil::load_config(path)}; });
}

asmil_status asmil_config_parse(const char* text, asmil_config** out) {
  ASMIL_GUARD_ARGS(require(text, "text"); require(out, "out"));
  return guard([&] { *out = new asmil_config{asmil::parse_config(text)}; });
}

asmil_status asmil_config_set(asmil_config* cfg, const char* key, const char* value) {
  ASMIL_GUARD_ARGS(require(cfg, "config"); require(key, "key"); require(value, "value"));
  return guard([&] { asmil::set_config_value(cfg->cfg, key, value); });
}

asmil_status asmil_config_to_string(const asmil_config* cfg, char** out) {
  ASMIL_GUARD_ARGS(require(cfg, "config"); require(out, "out"));
  return guard([&] { *out = dup(asmil::format_config(cfg->cfg)); });
}

void asmil_config_free(asmil_config* cfg) { delete cfg; }

asmil_status asmil_train_partial(const asmil_config* cfg, const asmil_dataset* train,
                                 const asmil_dataset* val, size_t max_epochs,
                                 asmil_epoch_callback on_epoch, void* user, asmil_model** out) {
  ASMIL_GUARD_ARGS(require(cfg, "config"); require(train, "train"); require(out, "out"));
  return guard([&] {
    asmil::TrainConfig c = cfg->cfg;
    if (c.model.num_classes < train->data.num_classes) c.model.num_classes = train->data.num_classes;
    asmil::Trainer t(c, train->data.bags, bags_of(val));
    run_epochs(t, max_epochs, on_epoch, user);
    *out = new asmil_model{t.state(), t.trace()};
  });
}

asmil_status asmil_train(const asmil_config* cfg, const asmil_dataset* train,
                         const asmil_dataset* val, asmil_epoch_callback on_epoch, void* user,
                         asmil_model** out) {
  return asmil_train_partial(cfg, train, val, 0, on_epoch, user, out);
}

asmil_status asmil_model_resume(asmil_model* model, const asmil_dataset* train,
                                const asmil_dataset* val, size_t max_epochs,
                                asmil_epoch_callback on_epoch, void* user) {
  ASMIL_GUARD_ARGS(require(model, "model"); require(train, "train"));
  return guard([&] {
    asmil::Trainer t(model->state, train->data.bags, bags_of(val));
    run_epochs(t, max_epochs, on_epoch, user);
    model->state = t.state();
    for (const auto& [id, epochs] : t.trace().bags) {
      auto& dst = model->trace.bags[id];
      // The resumed trace starts with the snapshot the model already holds.
      const std::size_t skip = dst.empty() ? 0 : 1;
      dst.insert(dst.end(), epochs.begin() + static_cast<std::ptrdiff_t>(skip), epochs.end());
    }
  });
}

asmil_status asmil_model_save(const asmil_model* model, const char* path) {
  ASMIL_GUARD_ARGS(require(model, "model"); require(path, "path"));
  return guard([&] { asmil::save_checkpoint(path, model->state); });
}

asmil_status asmil_model_load(const char* path, asmil_model** out) {
  ASMIL_GUARD_ARGS(require(path, "path"); require(out, "out"));
  return guard([&] { *out = new asmil_model{asmil::load_checkpoint(path), {}}; });
}

size_t asmil_model_epoch(const asmil_model* model) { return model ? model->state.epoch : 0; }

asmil_status asmil_model_evaluate(const asmil_model* model, const asmil_dataset* ds,
                                  char** report_json) {
  ASMIL_GUARD_ARGS(require(model, "model"); require(ds, "dataset"); require(report_json, "out"));
  return guard([&] {
    const auto& mc = model->state.config.model;
    if (ds->data.dim != mc.input_dim) {
      throw asmil::SchemaError("dataset D=" + std::to_string(ds->data.dim) + ", model expects " +
                               std::to_string(mc.input_dim));
    }
    const auto bags = model->state.scaler.apply(ds->data.bags);
    const auto ev = asmil::evaluate(mc, model->state.params, bags);
    *report_json = dup(evaluation_json(ev, bags).dump());
  });
}

asmil_status asmil_model_trace(const asmil_model* model, char** trace_out) {
  ASMIL_GUARD_ARGS(require(model, "model"); require(trace_out, "out"));
  return guard([&] { *trace_out = dup(trace_json(model->trace).dump()); });
}

void asmil_model_free(asmil_model* model) { delete model; }

asmil_status asmil_diagnose(const char* trace_text, size_t window, char** report_json) {
  ASMIL_GUARD_ARGS(require(trace_text, "trace"); require(report_json, "out"));
  return guard([&] {
    const auto trace = trace_from(json::parse(trace_text));
    const auto rep = asmil::stability_curve(trace, window);
    json bags = json::object();
    double ent = 0.0, mx = 0.0, eff = 0.0;
    for (const auto& [id, epochs] : trace.bags) {
      const auto& last = epochs.back();
      asmil::ConcentrationStats mean;
      for (std::size_t r = 0; r < last.rows(); ++r) {
        const auto s = asmil::concentration_stats(last.row(r));
        mean.entropy += s.entropy / double(last.rows());
        mean.max_weight += s.max_weight / double(last.rows());
        mean.effective_support += s.effective_support / double(last.rows());
      }
      ent += mean.entropy;
      mx += mean.max_weight;
      eff += mean.effective_support;
      const auto& curve = rep.curves.at(id);
      bags[id] = {{"jsd", curve},
                  {"final_entropy", mean.entropy},
                  {"final_max_weight", mean.max_weight},
                  {"final_effective_support", mean.effective_support}};
    }
    const double n = static_cast<double>(trace.bags.size());
    json out{{"window", rep.window},
             {"epochs", trace.epochs()},
             {"final_window_mean_jsd", rep.final_window_mean},
             {"mean_jsd_curve", rep.mean_curve},
             {"mean_final_entropy", num(ent / n)},
             {"mean_final_max_weight", num(mx / n)},
             {"mean_final_effective_support", num(eff / n)},
             {"bags", std::move(bags)}};
    *report_json = dup(out.dump());
  });
}

void asmil_theorem_spec_default(asmil_theorem_spec* spec) {
  if (!spec) return;
  *spec = {3.0, 1.0, 3, 5, 0, 10000, 0, 1.0, 0.0, 0.0};
}

asmil_status asmil_verify_theorem(const asmil_theorem_spec* spec, char** report_json) {
  ASMIL_GUARD_ARGS(require(spec, "spec"); require(report_json, "out"));
  return guard([&] {
    asmil::ScoreSetSpec s{spec->tau, spec->gamma, spec->high, spec->low, spec->n_mid};
    s.validate();
    asmil::Rng rng(spec->seed);
    const auto sweep = asmil::sweep_nsf_bounds(s, spec->samples, rng);

    const double sup = asmil::softmax_low_supremum(s.tau, spec->temperature, s.high);
    double observed = 0.0;
    std::size_t over = 0;
    asmil::Rng rng2(spec->seed + 1);
    for (std::size_t i = 0; i < spec->samples; ++i) {
      const double v = asmil::softmax_low_mass(asmil::sample_score_set(s, rng2), s, spec->temperature);
      observed = std::max(observed, v);
      if (v > sup * (1.0 + asmil::kBoundSlack)) ++over;
    }
    // free entries far below the low one on the scale of T
    const auto extreme = asmil::softmax_low_worst_case(s, -s.tau - 50.0 * spec->temperature);
    const double worst = asmil::softmax_low_mass(extreme, s, spec->temperature);

    auto targets = asmil::FeasibilityTargets::from_nsf(s);
    if (spec->epsilon > 0.0) targets.epsilon = spec->epsilon;
    if (spec->kappa > 0.0) targets.kappa = spec->kappa;
    const auto f = asmil::temperature_feasibility(s, targets);
    json grid = json::array();
    for (const auto& g : f.grid) {
      grid.push_back({{"T", g.temperature},
                      {"low_mass", g.low_mass},
                      {"high_ratio", num(g.high_ratio)},
                      {"suppression_ok", g.suppression_ok},
                      {"equalization_ok", g.equalization_ok}});
    }
    json out{
        {"spec", {{"tau", s.tau}, {"gamma", s.gamma}, {"high", s.high}, {"low", s.low},
                  {"n_mid", s.n_mid}, {"samples", spec->samples}, {"seed", spec->seed}}},
        {"nsf_bounds",
         {{"samples", sweep.samples},
          {"violations", sweep.violations},
          {"max_high_ratio", sweep.max_high_ratio},
          {"ratio_bound", (1.0 + std::exp(-s.tau)) / (1.0 + std::exp(-(s.tau + s.gamma)))},
          {"ratio_bound_loose", 1.0 + std::exp(-s.tau)},
          {"max_low_weight", sweep.max_low_weight},
          {"low_bound", std::exp(-s.tau) / double(s.high)}}},
        {"softmax_low",
         {{"temperature", spec->temperature},
          {"supremum", sup},
          {"max_observed", observed},
          {"exceedances", over},
          {"worst_case", worst},
          {"worst_case_gap", (sup - worst) / sup}}},
        {"feasibility",
         {{"epsilon", targets.epsilon},
          {"kappa", targets.kappa},
          {"t_min", f.t_min},
          {"t_max_main", f.t_max_main},
          {"t_max_sharp", num(f.t_max_sharp)},
          {"feasible_main", f.feasible_main},
          {"feasible", f.feasible},
          {"grid_feasible_points", f.grid_feasible},
          {"witness", f.witness},
          {"witness_holds", f.witness_holds},
          {"grid", std::move(grid)}}},
        {"violations", sweep.violations + over}};
    *report_json = dup(out.dump());
  });
}

asmil_status asmil_affine_check(const asmil_dataset* ds, double tol, char** report_json) {
  ASMIL_GUARD_ARGS(require(ds, "dataset"); require(report_json, "out"));
  return guard([&] {
    std::size_t dependent = 0;
    double worst = 0.0;
    json bags = json::array();
    for (const auto& b : ds->data.bags) {
      const auto r = asmil::affine_dependence(b.features, tol);
      double residual = 0.0;
      if (r.dependent) {
        ++dependent;
        double s = 0.0;
        for (double v : r.witness) s += v;
        residual = std::abs(s);
        for (std::size_t c = 0; c < b.features.cols(); ++c) {
          double dot = 0.0;
          for (std::size_t i = 0; i < b.features.rows(); ++i) dot += b.features(i, c) * r.witness[i];
          residual = std::max(residual, std::abs(dot));
        }
        worst = std::max(worst, residual);
      }
      bags.push_back({{"id", b.id},
                      {"instances", b.features.rows()},
                      {"rank", r.rank},
                      {"dependent", r.dependent},
                      {"witness_residual", residual}});
    }
    const double n = static_cast<double>(ds->data.bags.size());
    json out{{"bags", ds->data.bags.size()},
             {"dim", ds->data.dim},
             {"tol", tol},
             {"dependent", dependent},
             {"dependent_ratio", n > 0 ? json(double(dependent) / n) : json(nullptr)},
             {"max_witness_residual", worst},
             {"per_bag", std::move(bags)}};
    *report_json = dup(out.dump());
  });
}

asmil_status asmil_cross_validate(const asmil_config* cfg, const asmil_dataset* ds, size_t folds,
                                  uint64_t split_seed, asmil_epoch_callback on_epoch, void* user,
                                  char** report_json) {
  ASMIL_GUARD_ARGS(require(cfg, "config"); require(ds, "dataset"); require(report_json, "out"));
  return guard([&] {
    const auto split = asmil::cv_split(ds->data.bags, folds, split_seed);
    asmil::TrainConfig c = cfg->cfg;
    if (c.model.num_classes < ds->data.num_classes) c.model.num_classes = ds->data.num_classes;
    json per_fold = json::array();
    std::vector<double> accs;
    for (std::size_t k = 0; k < folds; ++k) {
      const auto tr_idx = split.train_indices(k);
      const auto te_idx = split.test_indices(k);
      const auto train = asmil::pick(ds->data.bags, tr_idx);
      const auto test = asmil::pick(ds->data.bags, te_idx);
      asmil::Trainer t(c, train, test);
      run_epochs(t, 0, on_epoch, user, json{{"fold", k}});
      const auto scaled = t.state().scaler.apply(test);
      const auto ev = asmil::evaluate(t.state().config.model, t.state().params, scaled);
      accs.push_back(ev.accuracy);
      per_fold.push_back({{"fold", k},
                          {"train_bags", train.size()},
                          {"test_bags", test.size()},
                          {"accuracy", num(ev.accuracy)},
                          {"macro_f1", num(ev.macro_f1)},
                          {"macro_auc", num(ev.macro_auc)}});
    }
    double mean = 0.0;
    for (double a : accs) mean += a / double(accs.size());
    double var = 0.0;
    for (double a : accs) var += (a - mean) * (a - mean);
    const double sd = accs.size() > 1 ? std::sqrt(var / double(accs.size() - 1)) : 0.0;
    json out{{"folds", folds},
             {"split_seed", split_seed},
             {"mean_accuracy", mean},
             {"std_accuracy", sd},
             {"warnings", split.warnings},
             {"per_fold", std::move(per_fold)}};
    *report_json = dup(out.dump());
  });
}

}  // extern "C"
