// SPDX-License-Identifier: Apache-2.0
#include "asmil/anchor.hpp"

#include "asmil/errors.hpp"

namespace asmil {

Matrix AnchorMap::apply(const Matrix& scores) const {
  switch (kind) {
    case Kind::nsf: return nsf_rows(scores);
    case Kind::softmax: return softmax_rows(scores, temperature);
    case Kind::entmax: return entmax_rows(scores, entmax_alpha);
    case Kind::mixed: return mixed_rows(scores, mix_xi);
  }
  throw ContractError("unknown anchor map");
}

AnchorState make_anchor(const ParamSet& online, const ModelConfig& cfg, double momentum) {
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw DomainError("EMA factor must be in [0, 1), got " + std::to_string(momentum));
  }
  const auto names = attention_param_names(cfg);
  return AnchorState{online.subset(names), momentum};
}

void ema_update(AnchorState& anchor, const ParamSet& online, double m) {
  if (!(m >= 0.0 && m < 1.0)) {
    throw DomainError("EMA factor must be in [0, 1), got " + std::to_string(m));
  }
  for (auto& e : anchor.params.entries()) {
    const Matrix& src = online.at(e.name);
    if (!src.same_shape(e.value)) {
      throw ContractError("ema_update: shape mismatch for '" + e.name + "'");
    }
    auto dst = e.value.data();
    auto s = src.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = m * dst[i] + (1.0 - m) * s[i];
  }
}

ad::Var anchor_attention(ad::Tape& t, const Bag& bag, const AnchorState& anchor,
                         const ModelConfig& cfg, const AnchorMap& map,
                         std::vector<ad::Var>* anchor_leaves) {
  BoundParams p(t, anchor.params, anchor_leaves != nullptr);
  if (anchor_leaves) anchor_leaves->assign(p.vars().begin(), p.vars().end());
  ad::Var tokens = instance_tokens(t, cfg, p, bag.features);
  ad::Var scores = t.stop_gradient(attention_scores(t, cfg, p, tokens));
  return t.constant(map.apply(t.value(scores)));
}

Matrix anchor_attention(const Bag& bag, const AnchorState& anchor, const ModelConfig& cfg,
                        const AnchorMap& map) {
  ad::Tape t;
  return t.value(anchor_attention(t, bag, anchor, cfg, map));
}

ad::Var stabilization_loss(ad::Tape& t, ad::Var online_attention, ad::Var anchor_attention) {
  const Matrix& a = t.value(anchor_attention);
  const Matrix& o = t.value(online_attention);
  if (!a.same_shape(o)) {
    throw ContractError("stabilization_loss: online " + o.shape_string() + " vs anchor " +
                        a.shape_string());
  }
  return ad::kl_rows_mean(t, t.stop_gradient(anchor_attention), online_attention);
}

double stabilization_loss(const Matrix& online_attention, const Matrix& anchor_attention) {
  if (!online_attention.same_shape(anchor_attention)) {
    throw ContractError("stabilization_loss: online " + online_attention.shape_string() +
                        " vs anchor " + anchor_attention.shape_string());
  }
  double s = 0.0;
  for (std::size_t r = 0; r < online_attention.rows(); ++r) {
    s += kl(anchor_attention.row(r), online_attention.row(r));
  }
  return s / static_cast<double>(online_attention.rows());
}

TemporalEnsembleStore::TemporalEnsembleStore(double rho) : rho_(rho) {
  if (!(rho > 0.0 && rho < 1.0)) {
    throw DomainError("temporal ensemble rho must be in (0, 1), got " + std::to_string(rho));
  }
}

Matrix TemporalEnsembleStore::step(const std::string& bag_id, const Matrix& current) {
  auto it = store_.find(bag_id);
  if (it == store_.end()) {
    store_.emplace(bag_id, current);
    return current;
  }
  Matrix& stored = it->second;
  if (!stored.same_shape(current)) {
    throw ContractError("temporal ensemble: bag '" + bag_id + "' changed shape from " +
                        stored.shape_string() + " to " + current.shape_string());
  }
  for (std::size_t i = 0; i < stored.size(); ++i) {
    stored[i] = rho_ * stored[i] + (1.0 - rho_) * current[i];
  }
  return stored;
}

std::size_t TemporalEnsembleStore::stored_values() const noexcept {
  std::size_t n = 0;
  for (const auto& [id, m] : store_) n += m.size();
  return n;
}

ad::Var temporal_loss(ad::Tape& t, ad::Var online_attention, const Matrix& target) {
  return ad::kl_rows_mean(t, online_attention, t.constant(target));
}

}  // namespace asmil
