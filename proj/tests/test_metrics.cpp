// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "asmil/attention.hpp"
#include "asmil/errors.hpp"
#include "asmil/metrics.hpp"
#include "support.hpp"

namespace asmil {
namespace {

using testing::random_matrix;
using testing::random_simplex;

TEST(MacroF1, HandExamples) {
  const std::vector<int> labels{0, 1, 2, 1, 0};
  EXPECT_EQ(macro_f1(labels, labels, 3), 1.0);
  EXPECT_NEAR(macro_f1(std::vector<int>{1, 1, 0, 0}, std::vector<int>{1, 0, 0, 0}, 2),
              (0.8 + 2.0 / 3.0) / 2.0, 1e-15);
  EXPECT_NEAR(macro_f1(std::vector<int>{0, 0, 0, 0}, std::vector<int>{0, 1, 0, 1}, 2), 1.0 / 3.0,
              1e-15);
}

TEST(MacroF1, ConfusionCounts) {
  const auto c = confusion_counts(std::vector<int>{1, 1, 0, 0}, std::vector<int>{1, 0, 0, 0}, 2);
  EXPECT_EQ(c.per_class[1].tp, 1u);
  EXPECT_EQ(c.per_class[1].fp, 1u);
  EXPECT_EQ(c.per_class[1].fn, 0u);
  EXPECT_EQ(c.per_class[1].tn, 2u);
  for (const auto& k : c.per_class) EXPECT_EQ(k.tp + k.fp + k.fn + k.tn, 4u);
}

TEST(MacroF1, Errors) {
  EXPECT_THROW(macro_f1(std::vector<int>{}, std::vector<int>{}, 2), DomainError);
  EXPECT_THROW(macro_f1(std::vector<int>{0}, std::vector<int>{0, 1}, 2), ShapeError);
}

TEST(Accuracy, Simple) {
  EXPECT_EQ(accuracy(std::vector<int>{0, 1, 1, 0}, std::vector<int>{0, 1, 0, 0}), 0.75);
}

TEST(MacroAuc, HandExamples) {
  EXPECT_EQ(binary_auc(std::vector<double>{0.9, 0.8, 0.2, 0.1}, std::vector<int>{1, 1, 0, 0}), 1.0);
  EXPECT_EQ(binary_auc(std::vector<double>{0.5, 0.5, 0.5, 0.5}, std::vector<int>{1, 0, 1, 0}), 0.5);
  EXPECT_EQ(binary_auc(std::vector<double>{0.9, 0.8, 0.4, 0.3}, std::vector<int>{1, 0, 1, 0}), 0.75);
  const Matrix scores{{0.1, 0.9}, {0.2, 0.8}, {0.6, 0.4}, {0.7, 0.3}};
  const auto r = macro_auc(scores, std::vector<int>{1, 0, 1, 0}, 2);
  EXPECT_EQ(r.value, 0.75);
  EXPECT_TRUE(r.skipped_classes.empty());
  EXPECT_EQ(macro_auc(Matrix(4, 3, 0.2), std::vector<int>{0, 1, 2, 0}, 3).value, 0.5);
}

// Direct pair enumeration, ties worth one half.
double pairwise_auc(std::span<const double> s, std::span<const int> pos) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (!pos[i] || pos[j]) continue;
      den += 1;
      num += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return num / den;
}

TEST(MacroAuc, RankFormulaMatchesPairEnumeration) {
  Rng rng(1);
  std::uniform_int_distribution<int> coarse(0, 5);  // plenty of ties
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> s(30);
    std::vector<int> pos(30);
    for (std::size_t i = 0; i < 30; ++i) {
      s[i] = coarse(rng);
      pos[i] = coarse(rng) % 2;
    }
    pos[0] = 1;
    pos[1] = 0;
    EXPECT_NEAR(binary_auc(s, pos), pairwise_auc(s, pos), 1e-14);
  }
}

TEST(MacroAuc, SkipsAbsentClass) {
  const Matrix scores = Matrix{{0.7, 0.2, 0.1}, {0.1, 0.8, 0.1}, {0.6, 0.3, 0.1}};
  const auto r = macro_auc(scores, std::vector<int>{0, 1, 0}, 3);
  ASSERT_EQ(r.skipped_classes, std::vector<int>{2});
  EXPECT_EQ(r.value, 1.0);
  EXPECT_THROW(macro_auc(Matrix(2, 2, 0.5), std::vector<int>{0, 0}, 2), DomainError);
}

TEST(MacroAuc, InvariantUnderMonotoneTransform) {
  Rng rng(2);
  const Matrix s = random_matrix(40, 3, rng);
  std::vector<int> labels(40);
  for (std::size_t i = 0; i < 40; ++i) labels[i] = static_cast<int>(i % 3);
  Matrix t = s;
  for (double& v : t.data()) v = std::exp(3.0 * v) - 7.0;
  EXPECT_EQ(macro_auc(s, labels, 3).value, macro_auc(t, labels, 3).value);
}

TEST(Metrics, InvariantUnderClassPermutation) {
  Rng rng(3);
  const Matrix s = random_matrix(50, 3, rng);
  std::vector<int> labels(50), preds(50);
  std::uniform_int_distribution<int> k(0, 2);
  for (std::size_t i = 0; i < 50; ++i) labels[i] = k(rng), preds[i] = k(rng);
  const std::vector<int> perm{2, 0, 1};
  Matrix ps(50, 3);
  std::vector<int> pl(50), pp(50);
  for (std::size_t i = 0; i < 50; ++i) {
    for (std::size_t c = 0; c < 3; ++c) ps(i, static_cast<std::size_t>(perm[c])) = s(i, c);
    pl[i] = perm[static_cast<std::size_t>(labels[i])];
    pp[i] = perm[static_cast<std::size_t>(preds[i])];
  }
  EXPECT_NEAR(macro_auc(s, labels, 3).value, macro_auc(ps, pl, 3).value, 1e-15);
  EXPECT_NEAR(macro_f1(preds, labels, 3), macro_f1(pp, pl, 3), 1e-15);
}

std::vector<SurvivalRecord> records(std::vector<double> t, std::vector<int> e, std::vector<double> r) {
  std::vector<SurvivalRecord> out;
  for (std::size_t i = 0; i < t.size(); ++i) out.push_back({t[i], e[i], r[i]});
  return out;
}

TEST(CIndex, HandExamples) {
  EXPECT_EQ(c_index(records({1, 2, 3}, {1, 1, 1}, {3, 2, 1})), 1.0);
  EXPECT_EQ(c_index(records({1, 2, 3}, {1, 1, 1}, {1, 2, 3})), 0.0);
  EXPECT_EQ(c_index(records({1, 2, 3}, {1, 0, 1}, {3, 1, 2})), 1.0);
}

TEST(CIndex, TieHandling) {
  const auto r = records({1, 2, 3}, {1, 1, 1}, {2, 2, 1});
  // pairs (1,2) tie, (1,3) and (2,3) concordant
  EXPECT_NEAR(c_index(r, RiskTies::strict), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(c_index(r, RiskTies::half), 2.5 / 3.0, 1e-15);
}

TEST(CIndex, Errors) {
  EXPECT_THROW(c_index(records({1, 2}, {0, 0}, {1, 2})), DomainError);
  EXPECT_THROW(c_index(records({0, 2}, {1, 1}, {1, 2})), DomainError);
}

TEST(CIndex, RandomRisksNearHalf) {
  Rng rng(4);
  std::exponential_distribution<double> time(1.0);
  std::normal_distribution<double> risk(0.0, 1.0);
  std::bernoulli_distribution event(0.7);
  std::vector<SurvivalRecord> r(2000);
  for (auto& x : r) x = {time(rng) + 1e-9, event(rng) ? 1 : 0, risk(rng)};
  EXPECT_NEAR(c_index(r), 0.5, 0.02);
}

TEST(Stability, OscillationGivesLog2) {
  AttentionTrace trace;
  for (int e = 0; e < 6; ++e) trace.record("b", e % 2 ? Matrix{{0.0, 1.0}} : Matrix{{1.0, 0.0}});
  const auto rep = stability_curve(trace, 3);
  ASSERT_EQ(rep.curves.at("b").size(), 5u);
  for (double v : rep.curves.at("b")) EXPECT_NEAR(v, std::numbers::ln2, 1e-10);
  EXPECT_NEAR(rep.final_window_mean, std::numbers::ln2, 1e-10);
  EXPECT_EQ(rep.window, 3u);
}

TEST(Stability, FrozenGivesZero) {
  AttentionTrace trace;
  for (int e = 0; e < 4; ++e) trace.record("b", Matrix{{0.2, 0.3, 0.5}, {0.6, 0.2, 0.2}});
  const auto rep = stability_curve(trace);
  for (double v : rep.curves.at("b")) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(rep.final_window_mean, 0.0);
}

TEST(Stability, WindowAveragesTheTail) {
  AttentionTrace trace;
  Rng rng(5);
  for (int e = 0; e < 8; ++e) {
    trace.record("a", Matrix::row_vector(random_simplex(4, rng)));
    trace.record("b", Matrix::row_vector(random_simplex(3, rng)));
  }
  const auto rep = stability_curve(trace, 4);
  ASSERT_EQ(rep.mean_curve.size(), 7u);
  double tail = 0.0;
  for (std::size_t e = 3; e < 7; ++e) {
    const double m = 0.5 * (rep.curves.at("a")[e] + rep.curves.at("b")[e]);
    EXPECT_NEAR(rep.mean_curve[e], m, 1e-15);
    tail += m / 4;
  }
  EXPECT_NEAR(rep.final_window_mean, tail, 1e-15);
  const auto& rows = trace.bags.at("a");
  EXPECT_NEAR(rep.curves.at("a")[2], jsd(rows[2].row(0), rows[3].row(0)), 1e-15);
}

TEST(Stability, Errors) {
  AttentionTrace one;
  one.record("b", Matrix{{1.0}});
  EXPECT_THROW(stability_curve(one), ContractError);
  AttentionTrace changed;
  changed.record("b", Matrix{{0.5, 0.5}});
  changed.record("b", Matrix{{0.2, 0.3, 0.5}});
  EXPECT_THROW(stability_curve(changed), ContractError);
}

TEST(Concentration, UniformAndOneHot) {
  const auto u = concentration_stats(std::vector<double>(5, 0.2));
  EXPECT_NEAR(u.entropy, std::log(5.0), 1e-15);
  EXPECT_NEAR(u.max_weight, 0.2, 1e-15);
  EXPECT_NEAR(u.effective_support, 5.0, 1e-12);
  const auto h = concentration_stats(std::vector<double>{0, 1, 0});
  EXPECT_EQ(h.entropy, 0.0);
  EXPECT_EQ(h.max_weight, 1.0);
  EXPECT_EQ(h.effective_support, 1.0);
}

TEST(Concentration, NsfSpreadsMassMoreThanSoftmax) {
  Rng rng(6);
  std::extreme_value_distribution<double> gumbel(0.0, 3.0);
  int wins = 0, draws = 0;
  while (draws < 1000) {
    std::vector<double> z(16);
    for (double& v : z) v = gumbel(rng);
    if (*std::max_element(z.begin(), z.end()) <= 2.0) continue;
    ++draws;
    if (concentration_stats(nsf(z)).effective_support >=
        concentration_stats(softmax_t(z, 1.0)).effective_support) {
      ++wins;
    }
  }
  EXPECT_GE(wins, 950);
}

void expect_witness(const Matrix& x, const AffineDependence& a) {
  ASSERT_TRUE(a.dependent);
  ASSERT_EQ(a.witness.size(), x.rows());
  double norm = 0.0;
  for (double v : a.witness) norm += v * v;
  EXPECT_NEAR(norm, 1.0, 1e-12);
  EXPECT_LT(std::abs(testing::sum(a.witness)), 1e-9);
  for (std::size_t d = 0; d < x.cols(); ++d) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) s += a.witness[i] * x(i, d);
    EXPECT_LT(std::abs(s), 1e-9);
  }
}

TEST(Affine, SecondDifferenceWitness) {
  const Matrix x{{0}, {1}, {2}};
  const auto a = affine_dependence(x);
  expect_witness(x, a);
  const double s = a.witness[0];
  EXPECT_NEAR(a.witness[1] / s, -2.0, 1e-12);
  EXPECT_NEAR(a.witness[2] / s, 1.0, 1e-12);
}

TEST(Affine, TallBagsAreDependent) {
  Rng rng(7);
  for (std::size_t d : {1u, 3u, 8u}) {
    for (int i = 0; i < 10; ++i) {
      const Matrix x = random_matrix(d + 2 + static_cast<std::size_t>(i), d, rng);
      expect_witness(x, affine_dependence(x));
    }
  }
}

TEST(Affine, GeneralPositionIsIndependent) {
  Rng rng(8);
  for (std::size_t m = 1; m <= 5; ++m) {
    const auto a = affine_dependence(random_matrix(m, 4, rng));
    EXPECT_FALSE(a.dependent) << m;
    EXPECT_TRUE(a.witness.empty());
    EXPECT_EQ(a.rank, m);
  }
  EXPECT_TRUE(affine_dependence(Matrix{{1, 2}, {1, 2}}).dependent);  // repeated row
}

TEST(Affine, WitnessBreaksInjectivityOfSoftmaxMatching) {
  Rng rng(9);
  const Matrix x = random_matrix(9, 5, rng);
  const auto a = affine_dependence(x);
  ASSERT_TRUE(a.dependent);
  const auto alpha = random_simplex(9, rng);
  const double eps = 0.5 * *std::min_element(alpha.begin(), alpha.end()) /
                     std::abs(*std::max_element(a.witness.begin(), a.witness.end(),
                                                [](double p, double q) { return std::abs(p) < std::abs(q); }));
  std::vector<double> moved(9);
  for (std::size_t i = 0; i < 9; ++i) moved[i] = alpha[i] + eps * a.witness[i];
  EXPECT_NEAR(testing::sum(moved), 1.0, 1e-12);
  for (double v : moved) EXPECT_GT(v, 0.0);
  const Matrix f0 = matmul(Matrix::row_vector(alpha), x);
  const Matrix f1 = matmul(Matrix::row_vector(moved), x);
  EXPECT_LT(testing::linf(softmax_t(f0.row(0), 1.0), softmax_t(f1.row(0), 1.0)), 1e-9);
  EXPECT_GT(testing::linf(alpha, moved), 1e-3);
}

}  // namespace
}  // namespace asmil
