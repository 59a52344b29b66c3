// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "asmil/matrix.hpp"

namespace asmil {

struct ClassCounts {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

/// One-vs-rest confusion counts for each class.
struct ConfusionCounts {
  std::vector<ClassCounts> per_class;
};

ConfusionCounts confusion_counts(std::span<const int> preds, std::span<const int> labels,
                                 std::size_t num_classes);

/// Uniform mean of per-class F1. Zero-division resolves to 0. DomainError on
/// empty input, ShapeError on length mismatch.
double macro_f1(std::span<const int> preds, std::span<const int> labels, std::size_t num_classes);

double accuracy(std::span<const int> preds, std::span<const int> labels);

struct AucResult {
  double value = 0.0;
  /// Classes without both a positive and a negative sample; excluded from the mean.
  std::vector<int> skipped_classes;
};

/// Per-class one-vs-rest AUC (pairwise ranking probability, ties count 1/2),
/// averaged over classes that have both positives and negatives.
/// `scores` is n x K. DomainError if every class is skipped.
AucResult macro_auc(const Matrix& scores, std::span<const int> labels, std::size_t num_classes);

/// AUC of a single binary problem. DomainError without both classes present.
double binary_auc(std::span<const double> scores, std::span<const int> positive);

struct SurvivalRecord {
  double time = 0.0;
  int event = 0;
  double risk = 0.0;
};

enum class RiskTies { strict, half };

/// Concordance index over ordered pairs with t_i < t_j and event_i = 1.
/// DomainError if there is no comparable pair or a time is not positive.
double c_index(std::span<const SurvivalRecord> records, RiskTies ties = RiskTies::strict);

/// Attention rows per bag, one Matrix per recorded epoch.
struct AttentionTrace {
  std::map<std::string, std::vector<Matrix>> bags;

  void record(const std::string& bag_id, Matrix rows);
  std::size_t epochs() const noexcept;
};

struct StabilityReport {
  /// Per bag, JSD between epoch t and t+1 (mean over attention rows).
  std::map<std::string, std::vector<double>> curves;
  /// Mean over bags of each consecutive-epoch JSD.
  std::vector<double> mean_curve;
  /// Mean of mean_curve over the final `window` entries.
  double final_window_mean = 0.0;
  std::size_t window = 0;
};

/// ContractError if a bag has fewer than 2 epochs or its row shape changes.
StabilityReport stability_curve(const AttentionTrace& trace, std::size_t window = 10);

/// Mean JSD over rows of two same-shape attention matrices.
double mean_row_jsd(const Matrix& a, const Matrix& b);

struct ConcentrationStats {
  double entropy = 0.0;
  double max_weight = 0.0;
  double effective_support = 0.0;  // exp(entropy)
};

ConcentrationStats concentration_stats(std::span<const double> alpha);

struct AffineDependence {
  bool dependent = false;
  /// Unit-norm psi with sum(psi) = 0 and X^T psi = 0; empty when independent.
  std::vector<double> witness;
  std::size_t rank = 0;
};

/// Tests whether the M rows of `features` are affinely dependent by Gaussian
/// elimination on [X^T; 1^T]. Pivots below tol * max(1, max|entry|) count as zero.
AffineDependence affine_dependence(const Matrix& features, double tol = 1e-8);

}  // namespace asmil
