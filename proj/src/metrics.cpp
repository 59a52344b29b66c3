// SPDX-License-Identifier: Apache-2.0
#include "asmil/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "asmil/attention.hpp"
#include "asmil/errors.hpp"

namespace asmil {

namespace {

void check_labels(std::span<const int> labels, std::size_t num_classes, const char* op) {
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw DomainError(std::string(op) + ": label " + std::to_string(y) + " outside [0, " +
                        std::to_string(num_classes) + ")");
    }
  }
}

}  // namespace

ConfusionCounts confusion_counts(std::span<const int> preds, std::span<const int> labels,
                                 std::size_t num_classes) {
  if (preds.size() != labels.size()) throw ShapeError("confusion_counts: length mismatch");
  check_labels(preds, num_classes, "confusion_counts");
  check_labels(labels, num_classes, "confusion_counts");
  ConfusionCounts c;
  c.per_class.resize(num_classes);
  for (std::size_t k = 0; k < num_classes; ++k) {
    auto& cc = c.per_class[k];
    const int kk = static_cast<int>(k);
    for (std::size_t i = 0; i < preds.size(); ++i) {
      const bool p = preds[i] == kk;
      const bool y = labels[i] == kk;
      if (p && y) ++cc.tp;
      else if (p) ++cc.fp;
      else if (y) ++cc.fn;
      else ++cc.tn;
    }
  }
  return c;
}

double macro_f1(std::span<const int> preds, std::span<const int> labels, std::size_t num_classes) {
  if (preds.empty()) throw DomainError("macro_f1: empty input");
  const auto c = confusion_counts(preds, labels, num_classes);
  double total = 0.0;
  for (const auto& k : c.per_class) {
    const double precision = k.tp + k.fp ? double(k.tp) / double(k.tp + k.fp) : 0.0;
    const double recall = k.tp + k.fn ? double(k.tp) / double(k.tp + k.fn) : 0.0;
    total += precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
  }
  return total / static_cast<double>(num_classes);
}

double accuracy(std::span<const int> preds, std::span<const int> labels) {
  if (preds.size() != labels.size()) throw ShapeError("accuracy: length mismatch");
  if (preds.empty()) throw DomainError("accuracy: empty input");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) hit += preds[i] == labels[i] ? 1 : 0;
  return double(hit) / double(preds.size());
}

double binary_auc(std::span<const double> scores, std::span<const int> positive) {
  if (scores.size() != positive.size()) throw ShapeError("binary_auc: length mismatch");
  // Mann-Whitney U with average ranks; equal scores contribute 1/2 per pair.
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::vector<double> rank(scores.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg = 0.5 * double(i + j + 1);  // ranks are 1-based
    for (std::size_t k = i; k < j; ++k) rank[order[k]] = avg;
    i = j;
  }
  double n_pos = 0.0, rank_sum = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (positive[i]) {
      n_pos += 1.0;
      rank_sum += rank[i];
    }
  }
  const double n_neg = double(scores.size()) - n_pos;
  if (n_pos == 0.0 || n_neg == 0.0) throw DomainError("binary_auc: need both classes");
  return (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

AucResult macro_auc(const Matrix& scores, std::span<const int> labels, std::size_t num_classes) {
  if (scores.rows() != labels.size() || scores.cols() != num_classes) {
    throw ShapeError("macro_auc: scores " + scores.shape_string() + " for " +
                     std::to_string(labels.size()) + " labels and " +
                     std::to_string(num_classes) + " classes");
  }
  check_labels(labels, num_classes, "macro_auc");
  AucResult out;
  double total = 0.0;
  std::size_t used = 0;
  std::vector<double> col(labels.size());
  std::vector<int> pos(labels.size());
  for (std::size_t k = 0; k < num_classes; ++k) {
    std::size_t n_pos = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      col[i] = scores(i, k);
      pos[i] = labels[i] == static_cast<int>(k);
      n_pos += pos[i];
    }
    if (n_pos == 0 || n_pos == labels.size()) {
      out.skipped_classes.push_back(static_cast<int>(k));
      continue;
    }
    total += binary_auc(col, pos);
    ++used;
  }
  if (used == 0) throw DomainError("macro_auc: no class has both positives and negatives");
  out.value = total / double(used);
  return out;
}

double c_index(std::span<const SurvivalRecord> records, RiskTies ties) {
  double num = 0.0, den = 0.0;
  for (const auto& r : records) {
    if (!(r.time > 0.0)) throw DomainError("c_index: survival times must be positive");
  }
  for (const auto& a : records) {
    if (!a.event) continue;
    for (const auto& b : records) {
      if (!(a.time < b.time)) continue;
      den += 1.0;
      if (a.risk > b.risk) num += 1.0;
      else if (ties == RiskTies::half && a.risk == b.risk) num += 0.5;
    }
  }
  if (den == 0.0) throw DomainError("c_index: no comparable pairs");
  return num / den;
}

void AttentionTrace::record(const std::string& bag_id, Matrix rows) {
  bags[bag_id].push_back(std::move(rows));
}

std::size_t AttentionTrace::epochs() const noexcept {
  std::size_t n = 0;
  for (const auto& [id, rows] : bags) n = std::max(n, rows.size());
  return n;
}

double mean_row_jsd(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) {
    throw ContractError("attention shape changed: " + a.shape_string() + " vs " + b.shape_string());
  }
  double s = 0.0;
  for (std::size_t r = 0; r < a.rows(); ++r) s += jsd(a.row(r), b.row(r));
  return s / static_cast<double>(a.rows());
}

StabilityReport stability_curve(const AttentionTrace& trace, std::size_t window) {
  StabilityReport rep;
  rep.window = window;
  std::size_t longest = 0;
  for (const auto& [id, snaps] : trace.bags) {
    if (snaps.size() < 2) {
      throw ContractError("stability_curve: bag '" + id + "' has fewer than 2 epochs");
    }
    auto& curve = rep.curves[id];
    for (std::size_t e = 0; e + 1 < snaps.size(); ++e) {
      curve.push_back(mean_row_jsd(snaps[e], snaps[e + 1]));
    }
    longest = std::max(longest, curve.size());
  }
  rep.mean_curve.assign(longest, 0.0);
  std::vector<std::size_t> counts(longest, 0);
  for (const auto& [id, curve] : rep.curves) {
    for (std::size_t e = 0; e < curve.size(); ++e) {
      rep.mean_curve[e] += curve[e];
      ++counts[e];
    }
  }
  for (std::size_t e = 0; e < longest; ++e) rep.mean_curve[e] /= double(counts[e]);
  const std::size_t w = std::min(window, longest);
  if (w > 0) {
    rep.final_window_mean =
        std::accumulate(rep.mean_curve.end() - static_cast<std::ptrdiff_t>(w), rep.mean_curve.end(),
                        0.0) /
        double(w);
  }
  return rep;
}

ConcentrationStats concentration_stats(std::span<const double> alpha) {
  ConcentrationStats s;
  for (double a : alpha) {
    if (a > 0.0) s.entropy -= a * std::log(a);
    s.max_weight = std::max(s.max_weight, a);
  }
  s.effective_support = std::exp(s.entropy);
  return s;
}

AffineDependence affine_dependence(const Matrix& features, double tol) {
  const std::size_t m = features.rows();
  const std::size_t d = features.cols();
  // A = [X^T; 1^T], (d + 1) x m. Affine dependence <=> A has a nontrivial null space.
  Matrix a(d + 1, m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < d; ++j) a(j, i) = features(i, j);
    a(d, i) = 1.0;
  }
  const double threshold = tol * std::max(1.0, max_abs(a));

  std::vector<std::size_t> pivot_cols;
  std::size_t row = 0;
  for (std::size_t col = 0; col < m && row < a.rows(); ++col) {
    std::size_t best = row;
    for (std::size_t r = row + 1; r < a.rows(); ++r) {
      if (std::abs(a(r, col)) > std::abs(a(best, col))) best = r;
    }
    if (std::abs(a(best, col)) <= threshold) continue;
    if (best != row) {
      for (std::size_t c = 0; c < m; ++c) std::swap(a(best, c), a(row, c));
    }
    const double piv = a(row, col);
    for (std::size_t c = col; c < m; ++c) a(row, c) /= piv;
    for (std::size_t r = 0; r < a.rows(); ++r) {
      if (r == row) continue;
      const double f = a(r, col);
      if (f == 0.0) continue;
      for (std::size_t c = col; c < m; ++c) a(r, c) -= f * a(row, c);
    }
    pivot_cols.push_back(col);
    ++row;
  }

  AffineDependence out;
  out.rank = pivot_cols.size();
  if (out.rank == m) return out;

  std::size_t free_col = 0;
  for (std::size_t c = 0, p = 0; c < m; ++c) {
    if (p < pivot_cols.size() && pivot_cols[p] == c) {
      ++p;
      continue;
    }
    free_col = c;
    break;
  }
  std::vector<double> psi(m, 0.0);
  psi[free_col] = 1.0;
  for (std::size_t r = 0; r < pivot_cols.size(); ++r) psi[pivot_cols[r]] = -a(r, free_col);
  double norm = 0.0;
  for (double v : psi) norm += v * v;
  norm = std::sqrt(norm);
  for (double& v : psi) v /= norm;
  out.dependent = true;
  out.witness = std::move(psi);
  return out;
}

}  // namespace asmil
