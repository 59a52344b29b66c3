// SPDX-License-Identifier: Apache-2.0
#include "asmil/model.hpp"

#include <algorithm>
#include <cmath>

#include "asmil/attention.hpp"
#include "asmil/errors.hpp"

namespace asmil {

namespace {

constexpr double kFeatTokenScale = 0.02;

Matrix uniform_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Matrix m(rows, cols);
  for (double& v : m.data()) v = dist(rng);
  return m;
}

}  // namespace

void ModelConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError(field + ": " + why);
  };
  if (input_dim == 0) fail("input_dim", "must be >= 1");
  if (hidden_dim == 0) fail("hidden_dim", "must be >= 1");
  if (num_tokens == 0) fail("num_tokens", "must be >= 1");
  if (num_classes < 2) fail("num_classes", "must be >= 2");
}

ParamSet init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  const std::size_t dh = cfg.token_dim();
  ParamSet p;
  if (cfg.embed_dim) {
    p.add("embed.weight", uniform_matrix(cfg.input_dim, cfg.embed_dim, rng));
    p.add("embed.bias", Matrix(1, cfg.embed_dim));
  }
  if (cfg.flavor == Flavor::abmil) {
    p.add("attn.V", uniform_matrix(dh, cfg.hidden_dim, rng));
    p.add("attn.U", uniform_matrix(dh, cfg.hidden_dim, rng));
    p.add("attn.w", uniform_matrix(cfg.hidden_dim, 1, rng));
  } else {
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix tokens(cfg.num_tokens, dh);
    for (double& v : tokens.data()) v = kFeatTokenScale * normal(rng);
    p.add("feat.tokens", std::move(tokens));
    p.add("stage1.query", uniform_matrix(dh, dh, rng));
    p.add("stage1.key", uniform_matrix(dh, dh, rng));
    p.add("stage2.query", uniform_matrix(dh, dh, rng));
    p.add("stage2.key", uniform_matrix(dh, dh, rng));
    p.add("cls.token", Matrix(1, dh));
  }
  p.add("classifier.weight", uniform_matrix(dh, cfg.num_classes, rng));
  p.add("classifier.bias", Matrix(1, cfg.num_classes));
  if (cfg.online_map == OnlineMap::mixed) p.add("online.mix_xi", Matrix(1, 1, 0.0));
  return p;
}

std::vector<std::string> attention_param_names(const ModelConfig& cfg) {
  std::vector<std::string> names;
  if (cfg.embed_dim) names = {"embed.weight", "embed.bias"};
  if (cfg.flavor == Flavor::abmil) {
    names.insert(names.end(), {"attn.V", "attn.U", "attn.w"});
  } else {
    names.insert(names.end(), {"feat.tokens", "stage1.query", "stage1.key"});
  }
  return names;
}

DropMask DropMask::all(std::size_t n) { return DropMask{std::vector<bool>(n, true), n}; }

std::vector<std::size_t> DropMask::kept_indices() const {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < keep.size(); ++i)
    if (keep[i]) idx.push_back(i);
  return idx;
}

DropMask token_drop_mask(std::size_t n, double rate, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw DomainError("token_drop_mask: drop rate must be in [0, 1), got " + std::to_string(rate));
  }
  if (n == 0) throw DomainError("token_drop_mask: no tokens");
  DropMask m;
  m.keep.assign(n, false);
  std::bernoulli_distribution keep(1.0 - rate);
  for (std::size_t i = 0; i < n; ++i) {
    m.keep[i] = keep(rng);
    m.kept_count += m.keep[i] ? 1 : 0;
  }
  if (m.kept_count == 0) {
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    m.keep[pick(rng)] = true;
    m.kept_count = 1;
  }
  return m;
}

ad::Var instance_tokens(ad::Tape& t, const ModelConfig& cfg, const BoundParams& p,
                        const Matrix& features) {
  if (features.cols() != cfg.input_dim) {
    throw ShapeError("bag has " + std::to_string(features.cols()) + " features, model expects " +
                     std::to_string(cfg.input_dim));
  }
  if (features.rows() == 0) throw ShapeError("bag has no instances");
  ad::Var x = t.constant(features);
  if (!cfg.embed_dim) return x;
  ad::Var pre = ad::add_row_bias(t, ad::matmul(t, x, p["embed.weight"]), p["embed.bias"]);
  return ad::unary(t, ad::Unary::relu, pre);
}

ad::Var attention_scores(ad::Tape& t, const ModelConfig& cfg, const BoundParams& p,
                         ad::Var tokens) {
  if (cfg.flavor == Flavor::abmil) {
    // z_i = w^T (tanh(V h_i) * sigmoid(U h_i))
    ad::Var a = ad::tanh(t, ad::matmul(t, tokens, p["attn.V"]));
    ad::Var g = ad::sigmoid(t, ad::matmul(t, tokens, p["attn.U"]));
    ad::Var z = ad::matmul(t, ad::mul(t, a, g), p["attn.w"]);  // M x 1
    return ad::transpose(t, z);
  }
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(cfg.token_dim()));
  ad::Var q = ad::matmul(t, p["feat.tokens"], p["stage1.query"]);  // N x D
  ad::Var k = ad::matmul(t, tokens, p["stage1.key"]);              // M x D
  return ad::scale(t, ad::matmul_nt(t, q, k), inv_sqrt_d);        // N x M
}

namespace {

ad::Var online_map(ad::Tape& t, const ModelConfig& cfg, const BoundParams& p, ad::Var scores) {
  switch (cfg.online_map) {
    case OnlineMap::softmax: return ad::softmax_rows(t, scores, 1.0);
    case OnlineMap::nsf: return ad::nsf_rows(t, scores);
    case OnlineMap::mixed: return ad::mixed_rows(t, scores, p["online.mix_xi"]);
  }
  throw ContractError("unknown online map");
}

ad::Var classify(ad::Tape& t, const BoundParams& p, ad::Var embedding) {
  return ad::add_row_bias(t, ad::matmul(t, embedding, p["classifier.weight"]),
                          p["classifier.bias"]);
}

}  // namespace

ForwardVars forward(ad::Tape& t, const ModelConfig& cfg, const BoundParams& p, const Bag& bag,
                    const DropMask* mask) {
  ad::Var tokens = instance_tokens(t, cfg, p, bag.features);
  ad::Var scores = attention_scores(t, cfg, p, tokens);
  ad::Var attention = online_map(t, cfg, p, scores);

  if (cfg.flavor == Flavor::abmil) {
    ad::Var pooled = ad::matmul(t, attention, tokens);  // 1 x D
    return {scores, attention, pooled, classify(t, p, pooled)};
  }

  // Stage 1: each FEAT token becomes the attention-weighted sum of instance tokens.
  ad::Var feats = ad::matmul(t, attention, tokens);  // N x D
  if (mask) {
    if (mask->keep.size() != cfg.num_tokens) {
      throw ShapeError("drop mask has " + std::to_string(mask->keep.size()) + " entries, model has " +
                       std::to_string(cfg.num_tokens) + " FEAT tokens");
    }
    if (mask->kept_count == 0) throw ContractError("drop mask keeps no FEAT token");
    if (mask->kept_count < cfg.num_tokens) {
      const auto kept = mask->kept_indices();
      feats = ad::select_rows(t, feats, kept);
    }
  }
  // Stage 2: CLS attends over [CLS; kept FEAT tokens].
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(cfg.token_dim()));
  ad::Var seq = ad::concat_rows(t, p["cls.token"], feats);
  ad::Var q = ad::matmul(t, p["cls.token"], p["stage2.query"]);
  ad::Var k = ad::matmul(t, seq, p["stage2.key"]);
  ad::Var s2 = ad::scale(t, ad::matmul_nt(t, q, k), inv_sqrt_d);
  ad::Var pooled = ad::matmul(t, ad::softmax_rows(t, s2, 1.0), seq);  // 1 x D
  return {scores, attention, pooled, classify(t, p, pooled)};
}

ForwardRecord forward_values(const Bag& bag, const ModelConfig& cfg, const ParamSet& params,
                             const DropMask* mask) {
  ad::Tape t;
  BoundParams p(t, params, false);
  const ForwardVars v = forward(t, cfg, p, bag, mask);
  return {t.value(v.scores), t.value(v.attention), t.value(v.bag_embedding), t.value(v.logits)};
}

ForwardRecord abmil_forward(const Bag& bag, const ModelConfig& cfg, const ParamSet& params) {
  if (cfg.flavor != Flavor::abmil) throw ContractError("abmil_forward: config flavor is not abmil");
  return forward_values(bag, cfg, params, nullptr);
}

ForwardRecord asmil_forward(const Bag& bag, const ModelConfig& cfg, const ParamSet& params,
                            const DropMask* mask) {
  if (cfg.flavor != Flavor::asmil) throw ContractError("asmil_forward: config flavor is not asmil");
  return forward_values(bag, cfg, params, mask);
}

double cross_entropy(std::span<const double> logits, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= logits.size()) {
    throw DomainError("cross_entropy: label " + std::to_string(label) + " outside [0, " +
                      std::to_string(logits.size()) + ")");
  }
  // log-sum-exp as m + log1p(rest) so a confident correct class keeps full precision
  const auto top = std::max_element(logits.begin(), logits.end());
  const double m = *top;
  double rest = 0.0;
  for (auto it = logits.begin(); it != logits.end(); ++it) {
    if (it != top) rest += std::exp(*it - m);
  }
  return (m - logits[static_cast<std::size_t>(label)]) + std::log1p(rest);
}

namespace ad {

Var cross_entropy(Tape& t, Var logits, int label) {
  const Matrix& lv = t.value(logits);
  if (lv.rows() != 1) throw ShapeError("cross_entropy: logits must be 1xK, got " + lv.shape_string());
  const double loss = asmil::cross_entropy(lv.row(0), label);
  return t.record(Matrix(1, 1, loss), {logits}, [label](const BackwardArgs& g) {
    if (!g.in_grad[0]) return;
    const auto p = softmax_t(g.in[0]->row(0), 1.0);
    auto d = g.in_grad[0]->row(0);
    const double s = g.grad(0, 0);
    for (std::size_t k = 0; k < p.size(); ++k) {
      d[k] += s * (p[k] - (static_cast<int>(k) == label ? 1.0 : 0.0));
    }
  });
}

}  // namespace ad

}  // namespace asmil
