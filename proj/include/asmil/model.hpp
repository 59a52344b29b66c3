// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "asmil/matrix.hpp"
#include "asmil/params.hpp"
#include "asmil/tape.hpp"

namespace asmil {

using Rng = std::mt19937_64;

/// One labeled bag: M instances x D features.
struct Bag {
  std::string id;
  Matrix features;
  int label = 0;
  /// Per-instance ground truth when known (synthetic data); empty otherwise.
  std::vector<int> instance_labels;
};

enum class Flavor {
  abmil,  // gated-attention pooling over instances
  asmil,  // FEAT-token cross-attention, token dropping, CLS aggregation
};

/// Map from online scores to the online attention distribution.
enum class OnlineMap { softmax, nsf, mixed };

struct ModelConfig {
  Flavor flavor = Flavor::asmil;
  std::size_t input_dim = 0;
  /// Width of an optional Linear+ReLU instance encoder; 0 feeds raw features.
  std::size_t embed_dim = 0;
  /// Hidden width d of the gated scorer (abmil).
  std::size_t hidden_dim = 128;
  /// Number of FEAT tokens N (asmil).
  std::size_t num_tokens = 8;
  std::size_t num_classes = 2;
  OnlineMap online_map = OnlineMap::softmax;

  /// Throws ConfigError naming the offending field.
  void validate() const;
  /// Dimension of the instance tokens h_i.
  std::size_t token_dim() const noexcept { return embed_dim ? embed_dim : input_dim; }
};

/// Deterministic given the seed. Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)),
/// FEAT tokens ~ 0.02 * N(0, 1), CLS token and biases zero.
ParamSet init_params(const ModelConfig& cfg, std::uint64_t seed);

/// Parameters that produce attention scores; the anchor mirrors exactly these.
std::vector<std::string> attention_param_names(const ModelConfig& cfg);

struct DropMask {
  std::vector<bool> keep;
  std::size_t kept_count = 0;

  static DropMask all(std::size_t n);
  std::vector<std::size_t> kept_indices() const;
};

/// Keeps each of n tokens with probability 1 - rate; if none survive, one
/// uniformly chosen token is kept. Throws DomainError unless 0 <= rate < 1.
DropMask token_drop_mask(std::size_t n, double rate, Rng& rng);

/// Tape handles produced by one forward pass.
struct ForwardVars {
  ad::Var scores;     // rows of attention scores (1 x M, or N x M)
  ad::Var attention;  // same shape, each row on the simplex
  ad::Var bag_embedding;
  ad::Var logits;     // 1 x K
};

/// Values of one forward pass.
struct ForwardRecord {
  Matrix scores;
  Matrix attention;
  Matrix bag_embedding;
  Matrix logits;
};

/// Instance tokens h_i for a bag (raw features or the encoder output).
ad::Var instance_tokens(ad::Tape& t, const ModelConfig& cfg, const BoundParams& p,
                        const Matrix& features);

/// Attention scores from instance tokens: gated scorer (abmil) or stage-1
/// scaled dot product FEAT-token queries over instance keys (asmil).
ad::Var attention_scores(ad::Tape& t, const ModelConfig& cfg, const BoundParams& p,
                         ad::Var tokens);

/// Full forward pass. `mask` only affects the asmil stage-2 path; nullptr
/// keeps every token (inference). Attention rows are always pre-drop.
ForwardVars forward(ad::Tape& t, const ModelConfig& cfg, const BoundParams& p, const Bag& bag,
                    const DropMask* mask = nullptr);

/// Value-only forward passes.
ForwardRecord abmil_forward(const Bag& bag, const ModelConfig& cfg, const ParamSet& params);
ForwardRecord asmil_forward(const Bag& bag, const ModelConfig& cfg, const ParamSet& params,
                            const DropMask* mask = nullptr);
ForwardRecord forward_values(const Bag& bag, const ModelConfig& cfg, const ParamSet& params,
                             const DropMask* mask = nullptr);

/// -log softmax(logits)[label]. DomainError if label is out of range.
double cross_entropy(std::span<const double> logits, int label);

namespace ad {
Var cross_entropy(Tape& t, Var logits, int label);
}

}  // namespace asmil
