// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <vector>

#include "asmil/attention.hpp"
#include "asmil/model.hpp"
#include "asmil/params.hpp"

namespace asmil {

/// How anchor scores are turned into the target distribution.
struct AnchorMap {
  enum class Kind { nsf, softmax, entmax, mixed };
  Kind kind = Kind::nsf;
  double temperature = 1.0;   // softmax
  double entmax_alpha = 1.5;  // entmax
  double mix_xi = 0.0;        // mixed: zeta = sigma(mix_xi)

  Matrix apply(const Matrix& scores) const;
};

/// EMA-tracked copy of the online model's attention submodule. It never
/// receives gradients.
struct AnchorState {
  ParamSet params;
  double momentum = 0.99;
};

/// Anchor initialized as an exact copy of the online attention parameters.
AnchorState make_anchor(const ParamSet& online, const ModelConfig& cfg, double momentum);

/// theta' <- m theta' + (1 - m) theta for every anchor parameter.
/// Throws DomainError unless 0 <= m < 1, ContractError on layout mismatch.
void ema_update(AnchorState& anchor, const ParamSet& online, double m);
inline void ema_update(AnchorState& anchor, const ParamSet& online) {
  ema_update(anchor, online, anchor.momentum);
}

/// Anchor attention rows recorded on `t` behind a stop-gradient barrier.
/// When `anchor_leaves` is given, anchor parameters are bound as leaves and
/// returned there so callers can confirm they receive exactly zero gradient.
ad::Var anchor_attention(ad::Tape& t, const Bag& bag, const AnchorState& anchor,
                         const ModelConfig& cfg, const AnchorMap& map,
                         std::vector<ad::Var>* anchor_leaves = nullptr);

/// Value-only anchor attention rows.
Matrix anchor_attention(const Bag& bag, const AnchorState& anchor, const ModelConfig& cfg,
                        const AnchorMap& map);

/// Mean over rows of KL(anchor_row || online_row); anchor rows are constants.
ad::Var stabilization_loss(ad::Tape& t, ad::Var online_attention, ad::Var anchor_attention);
double stabilization_loss(const Matrix& online_attention, const Matrix& anchor_attention);

/// Per-bag exponential moving average of past attention rows, the
/// memory-hungry alternative to the anchor model.
class TemporalEnsembleStore {
 public:
  explicit TemporalEnsembleStore(double rho = 0.9);

  /// target = rho * stored + (1 - rho) * current (current on first visit).
  /// Stores and returns the target. ContractError if a known id changes shape.
  Matrix step(const std::string& bag_id, const Matrix& current);

  double rho() const noexcept { return rho_; }
  std::size_t bag_count() const noexcept { return store_.size(); }
  /// Number of doubles held across all bags.
  std::size_t stored_values() const noexcept;
  const std::map<std::string, Matrix>& entries() const noexcept { return store_; }
  void restore(std::map<std::string, Matrix> entries) { store_ = std::move(entries); }

 private:
  double rho_;
  std::map<std::string, Matrix> store_;
};

/// Temporal-ensembling loss KL(current || sg(target)), mean over rows.
ad::Var temporal_loss(ad::Tape& t, ad::Var online_attention, const Matrix& target);

}  // namespace asmil
