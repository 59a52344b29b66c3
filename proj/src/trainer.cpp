// SPDX-License-Identifier: Apache-2.0
#include "asmil/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include <nlohmann/json.hpp>

#include "asmil/attention.hpp"
#include "asmil/errors.hpp"

namespace asmil {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
// Decorrelates the training stream from the initialization stream.
constexpr std::uint64_t kTrainStreamOffset = 0x9E3779B97F4A7C15ULL;

}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError(field + ": " + why);
  };
  model.validate();
  if (!(beta >= 0.0) || !std::isfinite(beta)) fail("beta", "must be a finite real >= 0");
  if (!(drop_rate >= 0.0 && drop_rate < 1.0)) fail("drop_rate", "must be in [0, 1)");
  if (!(ema >= 0.0 && ema < 1.0)) fail("ema", "must be in [0, 1)");
  if (!(lr >= 0.0) || !std::isfinite(lr)) fail("lr", "must be a finite real >= 0");
  if (epochs < 1) fail("epochs", "must be >= 1");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) fail("weight_decay", "must be >= 0");
  if (!(anchor_map.temperature > 0.0)) fail("anchor_temperature", "must be > 0");
  if (!(anchor_map.entmax_alpha > 1.0)) fail("entmax_alpha", "must be > 1");
  if (!std::isfinite(anchor_map.mix_xi)) fail("anchor_mix_xi", "must be finite");
  if (!(temporal_rho > 0.0 && temporal_rho < 1.0)) fail("temporal_rho", "must be in (0, 1)");
}

LossVars total_loss(ad::Tape& t, const Bag& bag, const BoundParams& p, const TrainConfig& cfg,
                    const AnchorState* anchor, const Matrix* temporal_target,
                    const DropMask* mask, std::vector<ad::Var>* anchor_leaves) {
  LossVars out;
  out.forward = forward(t, cfg.model, p, bag, mask);
  out.ce = ad::cross_entropy(t, out.forward.logits, bag.label);
  if (cfg.beta == 0.0 || cfg.strategy == AnchorStrategy::off) {
    out.as = t.constant(Matrix(1, 1, 0.0));
    out.total = out.ce;
    return out;
  }
  if (cfg.strategy == AnchorStrategy::model) {
    if (!anchor) throw ContractError("total_loss: anchor strategy needs an anchor");
    ad::Var target = anchor_attention(t, bag, *anchor, cfg.model, cfg.anchor_map, anchor_leaves);
    out.as = stabilization_loss(t, out.forward.attention, target);
  } else {
    if (!temporal_target) throw ContractError("total_loss: temporal strategy needs a target");
    out.as = temporal_loss(t, out.forward.attention, *temporal_target);
  }
  out.total = ad::add(t, out.ce, ad::scale(t, out.as, cfg.beta));
  return out;
}

LossComponents total_loss(const Bag& bag, const ParamSet& params, const AnchorState& anchor,
                          const TrainConfig& cfg, const DropMask* mask) {
  if (cfg.strategy == AnchorStrategy::temporal) {
    throw ContractError("total_loss: value overload only supports the anchor model strategy");
  }
  ad::Tape t;
  BoundParams p(t, params, false);
  const LossVars v = total_loss(t, bag, p, cfg, &anchor, nullptr, mask);
  return {t.value(v.total)(0, 0), t.value(v.ce)(0, 0), t.value(v.as)(0, 0)};
}

AdamState AdamState::for_params(const ParamSet& params) {
  AdamState s;
  for (const auto& e : params.entries()) {
    s.m.emplace_back(e.value.rows(), e.value.cols());
    s.v.emplace_back(e.value.rows(), e.value.cols());
  }
  return s;
}

void adam_step(ParamSet& params, std::span<const Matrix> grads, AdamState& st, double lr,
               double weight_decay) {
  auto entries = params.entries();
  if (grads.size() != entries.size() || st.m.size() != entries.size() ||
      st.v.size() != entries.size()) {
    throw ContractError("adam_step: " + std::to_string(entries.size()) + " params, " +
                        std::to_string(grads.size()) + " grads, " + std::to_string(st.m.size()) +
                        " accumulators");
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (!grads[i].same_shape(entries[i].value) || !st.m[i].same_shape(entries[i].value) ||
        !st.v[i].same_shape(entries[i].value)) {
      throw ContractError("adam_step: shape mismatch for '" + entries[i].name + "'");
    }
  }
  ++st.step;
  const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto theta = entries[i].value.data();
    auto g = grads[i].data();
    auto m = st.m[i].data();
    auto v = st.v[i].data();
    for (std::size_t j = 0; j < theta.size(); ++j) {
      theta[j] -= lr * weight_decay * theta[j];
      m[j] = st.beta1 * m[j] + (1.0 - st.beta1) * g[j];
      v[j] = st.beta2 * v[j] + (1.0 - st.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      theta[j] -= lr * mhat / (std::sqrt(vhat) + st.eps);
    }
  }
}

double cosine_lr(std::size_t step, std::size_t total_steps, double lr0) {
  if (step > total_steps) {
    throw DomainError("cosine_lr: step " + std::to_string(step) + " beyond total " +
                      std::to_string(total_steps));
  }
  if (total_steps == 0) return lr0;
  if (step == total_steps) return 0.0;
  const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

Evaluation evaluate(const ModelConfig& cfg, const ParamSet& params, std::span<const Bag> bags) {
  Evaluation ev;
  ev.probs = Matrix(bags.size(), cfg.num_classes);
  std::vector<int> labels;
  for (std::size_t i = 0; i < bags.size(); ++i) {
    const auto rec = forward_values(bags[i], cfg, params, nullptr);
    const auto p = softmax_t(rec.logits.row(0), 1.0);
    std::copy(p.begin(), p.end(), ev.probs.row(i).begin());
    ev.preds.push_back(static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin()));
    labels.push_back(bags[i].label);
  }
  if (bags.empty()) {
    ev.accuracy = ev.macro_f1 = ev.macro_auc = kNaN;
    return ev;
  }
  ev.accuracy = accuracy(ev.preds, labels);
  ev.macro_f1 = macro_f1(ev.preds, labels, cfg.num_classes);
  try {
    const auto auc = macro_auc(ev.probs, labels, cfg.num_classes);
    ev.macro_auc = auc.value;
    ev.auc_skipped = auc.skipped_classes;
  } catch (const DomainError&) {
    ev.macro_auc = kNaN;
    for (std::size_t k = 0; k < cfg.num_classes; ++k) ev.auc_skipped.push_back(static_cast<int>(k));
  }
  return ev;
}

std::string to_json_line(const EpochMetrics& m) {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  nlohmann::ordered_json j;
  j["epoch"] = m.epoch;
  j["lr"] = num(m.lr);
  j["L_CE"] = num(m.ce);
  j["L_AS"] = num(m.as);
  j["train_macro_f1"] = num(m.train_f1);
  j["train_macro_auc"] = num(m.train_auc);
  j["val_macro_f1"] = num(m.val_f1);
  j["val_macro_auc"] = num(m.val_auc);
  j["val_accuracy"] = num(m.val_accuracy);
  j["probe_jsd"] = num(m.probe_jsd);
  return j.dump();
}

Trainer::Trainer(TrainConfig config, std::vector<Bag> train, std::vector<Bag> val) {
  if (train.empty()) throw ContractError("fit: empty training set");
  if (config.model.input_dim == 0) config.model.input_dim = train.front().features.cols();
  config.validate();
  state_.config = config;
  state_.params = init_params(config.model, config.seed);
  state_.anchor = make_anchor(state_.params, config.model, config.ema);
  state_.adam = AdamState::for_params(state_.params);
  if (config.strategy == AnchorStrategy::temporal) state_.temporal.emplace(config.temporal_rho);
  state_.rng.seed(config.seed + kTrainStreamOffset);
  prepare(std::move(train), std::move(val), config.standardize);
  state_.last_probe = probe_attention();
  for (const auto& [id, rows] : state_.last_probe) trace_.record(id, rows);
}

Trainer::Trainer(TrainState state, std::vector<Bag> train, std::vector<Bag> val)
    : state_(std::move(state)) {
  if (train.empty()) throw ContractError("fit: empty training set");
  state_.config.validate();
  prepare(std::move(train), std::move(val), false);
  for (const auto& [id, rows] : state_.last_probe) trace_.record(id, rows);
}

void Trainer::prepare(std::vector<Bag> train, std::vector<Bag> val, bool fit_scaler) {
  const auto& mc = state_.config.model;
  auto check = [&](const std::vector<Bag>& bags, const char* which) {
    for (const auto& b : bags) {
      if (b.features.cols() != mc.input_dim) {
        throw SchemaError(std::string(which) + " bag '" + b.id + "' has " +
                          std::to_string(b.features.cols()) + " features, expected " +
                          std::to_string(mc.input_dim));
      }
      if (b.label < 0 || static_cast<std::size_t>(b.label) >= mc.num_classes) {
        throw SchemaError(std::string(which) + " bag '" + b.id + "' has label " +
                          std::to_string(b.label) + " outside [0, " +
                          std::to_string(mc.num_classes) + ")");
      }
    }
  };
  check(train, "training");
  check(val, "validation");
  if (fit_scaler) state_.scaler = FeatureScaler::fit(train);
  train_ = state_.scaler.apply(train);
  val_ = state_.scaler.apply(val);
  const auto& pool = val_.empty() ? train_ : val_;
  const std::size_t n =
      state_.config.trace_all ? pool.size() : std::min(state_.config.probe_bags, pool.size());
  probe_.resize(n);
  std::iota(probe_.begin(), probe_.end(), 0);
}

std::map<std::string, Matrix> Trainer::probe_attention() const {
  const auto& pool = val_.empty() ? train_ : val_;
  std::map<std::string, Matrix> out;
  for (std::size_t i : probe_) {
    out[pool[i].id] = forward_values(pool[i], state_.config.model, state_.params).attention;
  }
  return out;
}

void Trainer::check_anchor_gradients(const Bag& bag) {
  const auto& cfg = state_.config;
  if (cfg.strategy != AnchorStrategy::model || cfg.beta == 0.0) return;
  ad::Tape t;
  BoundParams p(t, state_.params, true);
  std::vector<ad::Var> leaves;
  const LossVars v = total_loss(t, bag, p, cfg, &state_.anchor, nullptr, nullptr, &leaves);
  t.backward(v.total);
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    if (max_abs(t.grad(leaves[i])) != 0.0) {
      throw ContractError("anchor parameter '" + state_.anchor.params.entries()[i].name +
                          "' received a nonzero gradient at epoch " +
                          std::to_string(state_.epoch + 1));
    }
  }
}

EpochMetrics Trainer::run_epoch() {
  if (done()) throw ContractError("run_epoch: all epochs already completed");
  auto& st = state_;
  const auto& cfg = st.config;
  const std::size_t n = train_.size();
  const std::size_t total_steps = cfg.epochs * n;
  const double epoch_lr = cfg.schedule == ScheduleStep::epoch
                              ? cosine_lr(st.epoch, cfg.epochs, cfg.lr)
                              : cosine_lr(static_cast<std::size_t>(st.global_step), total_steps, cfg.lr);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), st.rng);

  if (cfg.debug_checks) check_anchor_gradients(train_[order.front()]);

  double sum_ce = 0.0, sum_as = 0.0;
  std::vector<Matrix> grads;
  for (std::size_t s = 0; s < n; ++s) {
    const Bag& bag = train_[order[s]];
    std::optional<DropMask> mask;
    if (cfg.model.flavor == Flavor::asmil) {
      mask = token_drop_mask(cfg.model.num_tokens, cfg.drop_rate, st.rng);
    }
    std::optional<Matrix> target;
    if (cfg.strategy == AnchorStrategy::temporal && cfg.beta != 0.0) {
      target = st.temporal->step(bag.id, forward_values(bag, cfg.model, st.params).attention);
    }

    ad::Tape t;
    BoundParams p(t, st.params, true);
    const LossVars v = total_loss(t, bag, p, cfg, &st.anchor, target ? &*target : nullptr,
                                  mask ? &*mask : nullptr);
    const double loss = t.value(v.total)(0, 0);
    if (!std::isfinite(loss)) {
      throw NumericError("non-finite loss " + std::to_string(loss) + " on bag '" + bag.id +
                         "' at epoch " + std::to_string(st.epoch + 1) + ", step " +
                         std::to_string(st.global_step + 1) + " (L_CE=" +
                         std::to_string(t.value(v.ce)(0, 0)) +
                         ", L_AS=" + std::to_string(t.value(v.as)(0, 0)) + ")");
    }
    sum_ce += t.value(v.ce)(0, 0);
    sum_as += t.value(v.as)(0, 0);
    t.backward(v.total);
    grads.clear();
    for (ad::Var leaf : p.vars()) grads.push_back(t.grad(leaf));

    const double lr = cfg.schedule == ScheduleStep::epoch
                          ? epoch_lr
                          : cosine_lr(static_cast<std::size_t>(st.global_step), total_steps, cfg.lr);
    adam_step(st.params, grads, st.adam, lr, cfg.weight_decay);
    if (cfg.strategy == AnchorStrategy::model) ema_update(st.anchor, st.params);
    ++st.global_step;
  }
  if (!st.params.all_finite()) {
    throw NumericError("non-finite parameters after epoch " + std::to_string(st.epoch + 1));
  }
  ++st.epoch;

  EpochMetrics m;
  m.epoch = st.epoch;
  m.lr = epoch_lr;
  m.ce = sum_ce / static_cast<double>(n);
  m.as = sum_as / static_cast<double>(n);
  const auto tr = evaluate(cfg.model, st.params, train_);
  m.train_f1 = tr.macro_f1;
  m.train_auc = tr.macro_auc;
  const auto va = evaluate(cfg.model, st.params, val_);
  m.val_f1 = va.macro_f1;
  m.val_auc = va.macro_auc;
  m.val_accuracy = va.accuracy;

  auto probe = probe_attention();
  double jsd_sum = 0.0;
  for (const auto& [id, rows] : probe) {
    jsd_sum += mean_row_jsd(st.last_probe.at(id), rows);
    trace_.record(id, rows);
  }
  m.probe_jsd = probe.empty() ? kNaN : jsd_sum / static_cast<double>(probe.size());
  st.last_probe = std::move(probe);
  return m;
}

FitResult fit(std::span<const Bag> train, std::span<const Bag> val, const TrainConfig& cfg,
              const EpochCallback& on_epoch) {
  if (cfg.epochs == 0) {
    // Nothing to train: validate the rest of the config and hand back the init.
    TrainConfig probe = cfg;
    probe.epochs = 1;
    Trainer t(probe, {train.begin(), train.end()}, {val.begin(), val.end()});
    return {t.state().params, t.state().anchor, t.state().scaler, {}, t.trace()};
  }
  Trainer t(cfg, {train.begin(), train.end()}, {val.begin(), val.end()});
  FitResult out;
  while (!t.done()) {
    out.history.push_back(t.run_epoch());
    if (on_epoch) on_epoch(out.history.back(), t);
  }
  out.params = t.state().params;
  out.anchor = t.state().anchor;
  out.scaler = t.state().scaler;
  out.trace = t.trace();
  return out;
}

}  // namespace asmil
