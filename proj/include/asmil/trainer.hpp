// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "asmil/anchor.hpp"
#include "asmil/dataset.hpp"
#include "asmil/metrics.hpp"
#include "asmil/model.hpp"

namespace asmil {

enum class AnchorStrategy { model, temporal, off };
enum class ScheduleStep { epoch, step };

struct TrainConfig {
  ModelConfig model;
  double beta = 1.0;
  double drop_rate = 0.5;
  double ema = 0.99;
  double lr = 1e-4;
  std::size_t epochs = 50;
  double weight_decay = 1e-4;
  std::uint64_t seed = 0;
  AnchorStrategy strategy = AnchorStrategy::model;
  AnchorMap anchor_map;
  double temporal_rho = 0.9;
  ScheduleStep schedule = ScheduleStep::epoch;
  /// Number of leading validation bags whose attention is traced each epoch.
  std::size_t probe_bags = 8;
  bool trace_all = false;
  /// Verify every epoch that anchor parameters receive exactly zero gradient.
  bool debug_checks = false;
  /// Standardize features with statistics of the training bags.
  bool standardize = false;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

struct LossComponents {
  double total = 0.0;
  double ce = 0.0;
  double as = 0.0;
};

struct LossVars {
  ad::Var total;
  ad::Var ce;
  ad::Var as;
  ForwardVars forward;
};

/// L = L_CE + beta * L_AS on the tape. The stabilization target comes from
/// `anchor` (strategy model) or `temporal_target` (strategy temporal); with
/// beta = 0 or strategy off, L_AS is the constant 0. `anchor_leaves`
/// receives the anchor parameters bound as leaves, for gradient audits.
LossVars total_loss(ad::Tape& t, const Bag& bag, const BoundParams& p, const TrainConfig& cfg,
                    const AnchorState* anchor, const Matrix* temporal_target,
                    const DropMask* mask, std::vector<ad::Var>* anchor_leaves = nullptr);

/// Value-only total loss using the anchor model strategy.
LossComponents total_loss(const Bag& bag, const ParamSet& params, const AnchorState& anchor,
                          const TrainConfig& cfg, const DropMask* mask);

struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState for_params(const ParamSet& params);
};

/// theta <- theta - lr*wd*theta, then the bias-corrected Adam increment.
/// ContractError when grads or accumulators do not mirror params.
void adam_step(ParamSet& params, std::span<const Matrix> grads, AdamState& state, double lr,
               double weight_decay);

/// lr0 * (1 + cos(pi * step / total)) / 2. DomainError unless 0 <= step <= total.
double cosine_lr(std::size_t step, std::size_t total_steps, double lr0);

struct Evaluation {
  std::vector<int> preds;
  Matrix probs;  // n x K class probabilities
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  /// NaN when no class has both positives and negatives.
  double macro_auc = 0.0;
  std::vector<int> auc_skipped;
};

/// Inference over bags with every token kept.
Evaluation evaluate(const ModelConfig& cfg, const ParamSet& params, std::span<const Bag> bags);

struct EpochMetrics {
  std::size_t epoch = 0;
  double lr = 0.0;
  double ce = 0.0;  // mean over training steps of the epoch
  double as = 0.0;
  double train_f1 = 0.0;
  double train_auc = 0.0;
  double val_f1 = 0.0;  // NaN without a validation set
  double val_auc = 0.0;
  double val_accuracy = 0.0;
  /// Mean JSD over probe bags between this epoch's attention and the previous one.
  double probe_jsd = 0.0;
};

/// One line of the metrics stream (compact JSON, NaN written as null).
std::string to_json_line(const EpochMetrics& m);

/// Mutable state of a training run; everything a checkpoint must carry.
struct TrainState {
  TrainConfig config;
  ParamSet params;
  AnchorState anchor;
  AdamState adam;
  std::optional<TemporalEnsembleStore> temporal;
  FeatureScaler scaler;
  Rng rng;
  std::size_t epoch = 0;         // completed epochs
  std::uint64_t global_step = 0; // completed optimizer steps
  /// Probe attention rows from the last completed epoch, keyed by bag id.
  std::map<std::string, Matrix> last_probe;
};

class Trainer {
 public:
  /// Initializes params and anchor from the config seed. The training set
  /// must be non-empty with consistent D; validation may be empty.
  Trainer(TrainConfig config, std::vector<Bag> train, std::vector<Bag> val);
  /// Resumes from a checkpointed state.
  Trainer(TrainState state, std::vector<Bag> train, std::vector<Bag> val);

  bool done() const noexcept { return state_.epoch >= state_.config.epochs; }
  /// Runs one epoch and returns its metrics. NumericError on a non-finite loss.
  EpochMetrics run_epoch();

  const TrainState& state() const noexcept { return state_; }
  const AttentionTrace& trace() const noexcept { return trace_; }
  /// Training / validation bags as the model sees them (after scaling).
  const std::vector<Bag>& train_bags() const noexcept { return train_; }
  const std::vector<Bag>& val_bags() const noexcept { return val_; }

 private:
  void prepare(std::vector<Bag> train, std::vector<Bag> val, bool fit_scaler);
  std::map<std::string, Matrix> probe_attention() const;
  void check_anchor_gradients(const Bag& bag);

  TrainState state_;
  std::vector<Bag> train_;
  std::vector<Bag> val_;
  std::vector<std::size_t> probe_;  // indices into val_ (or train_ if val_ is empty)
  AttentionTrace trace_;
};

struct FitResult {
  ParamSet params;
  AnchorState anchor;
  FeatureScaler scaler;
  std::vector<EpochMetrics> history;
  AttentionTrace trace;
};

using EpochCallback = std::function<void(const EpochMetrics&, const Trainer&)>;

FitResult fit(std::span<const Bag> train, std::span<const Bag> val, const TrainConfig& cfg,
              const EpochCallback& on_epoch = {});

/// Versioned text checkpoint; doubles are stored as hexfloats so a reload
/// restores every bit. IoError / ParseError on failure.
void save_checkpoint(const std::string& path, const TrainState& state);
TrainState load_checkpoint(const std::string& path);
std::string format_checkpoint(const TrainState& state);
TrainState parse_checkpoint(const std::string& text);

}  // namespace asmil
