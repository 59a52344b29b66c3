// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "asmil/attention.hpp"
#include "asmil/errors.hpp"
#include "support.hpp"

namespace asmil {
namespace {

using testing::linf;
using testing::max_rel_err;
using testing::numeric_gradient;
using testing::random_matrix;
using testing::random_simplex;
using testing::random_vector;

void expect_simplex(std::span<const double> a) {
  double s = 0.0;
  for (double v : a) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
    s += v;
  }
  EXPECT_NEAR(s, 1.0, 1e-9);
}

// Brute-force oracle for the a = 2 closed form: zoom a 1-D grid over the
// threshold until the normalization residual is below 1e-13.
std::vector<double> entmax2_grid_oracle(std::span<const double> z) {
  const double zmax = *std::max_element(z.begin(), z.end());
  auto mass = [&](double tau) {
    double s = 0.0;
    for (double v : z) s += std::max(0.0, 0.5 * (v - tau));
    return s;
  };
  double lo = zmax - 2.0 - 1.0, hi = zmax;
  double best = lo;
  for (int round = 0; round < 12; ++round) {
    const int n = 1000;
    double best_res = INFINITY;
    for (int k = 0; k <= n; ++k) {
      const double tau = lo + (hi - lo) * k / n;
      const double r = std::abs(mass(tau) - 1.0);
      if (r < best_res) best_res = r, best = tau;
    }
    const double step = (hi - lo) / n;
    lo = best - step;
    hi = best + step;
  }
  std::vector<double> a(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) a[i] = std::max(0.0, 0.5 * (z[i] - best));
  return a;
}

TEST(Softmax, Examples) {
  for (double v : softmax_t(std::vector<double>{0, 0, 0}, 1.0)) EXPECT_NEAR(v, 1.0 / 3, 1e-15);
  const auto a = softmax_t(std::vector<double>{std::log(2.0), 0.0}, 1.0);
  EXPECT_NEAR(a[0], 2.0 / 3, 1e-15);
  EXPECT_NEAR(a[1], 1.0 / 3, 1e-15);
  for (double v : softmax_t(std::vector<double>{3, 1, -2}, 1e6)) EXPECT_NEAR(v, 1.0 / 3, 1e-6);
}

TEST(Softmax, NonPositiveTemperatureThrows) {
  EXPECT_THROW(softmax_t(std::vector<double>{1, 2}, 0.0), DomainError);
  EXPECT_THROW(softmax_t(std::vector<double>{1, 2}, -1.0), DomainError);
}

TEST(Softmax, ShiftInvariant) {
  Rng rng(10);
  for (int i = 0; i < 200; ++i) {
    auto z = random_vector(7, rng, -10, 10);
    auto shifted = z;
    const double c = std::uniform_real_distribution<double>(-50, 50)(rng);
    for (double& v : shifted) v += c;
    EXPECT_LT(linf(softmax_t(z, 1.0), softmax_t(shifted, 1.0)), 1e-12);
  }
}

TEST(Nsf, Examples) {
  for (double v : nsf(std::vector<double>{0, 0, 0})) EXPECT_NEAR(v, 1.0 / 3, 1e-15);
  const auto a = nsf(std::vector<double>{2, -2});
  EXPECT_NEAR(a[0], 0.88079707797788, 1e-12);
  EXPECT_NEAR(a[1], 0.11920292202212, 1e-12);
}

TEST(Nsf, SelectiveFlatteningExample) {
  const auto a = nsf(std::vector<double>{5, 4.5, -5, -5, -5});
  const double tau = 4.5, gamma = 0.5;
  // the two highs sit at both ends of the band, so the ratio bound is tight
  EXPECT_LE(a[0] / a[1], (1 + std::exp(-tau)) / (1 + std::exp(-(tau + gamma))) * (1 + 1e-12));
  for (std::size_t j = 2; j < 5; ++j) EXPECT_LE(a[j], std::exp(-tau) / 2);
}

TEST(Nsf, NotShiftInvariant) {
  EXPECT_EQ(nsf(std::vector<double>{0, 0}), nsf(std::vector<double>{5, 5}));
  const auto a = nsf(std::vector<double>{1, 0});
  const auto b = nsf(std::vector<double>{2, 1});
  EXPECT_GT(std::abs(a[0] - b[0]), 1e-3);
}

TEST(Entmax, TwoPointClosedForm) {
  const auto a = entmax(std::vector<double>{1, 0}, 2.0);
  EXPECT_NEAR(a[0], 0.75, 1e-9);
  EXPECT_NEAR(a[1], 0.25, 1e-9);
}

TEST(Entmax, SparseSupportMatchesGridOracle) {
  const std::vector<double> z{10, 0};
  const auto a = entmax(z, 2.0);
  EXPECT_EQ(a[1], 0.0);
  EXPECT_LT(linf(a, entmax2_grid_oracle(z)), 1e-6);
  EXPECT_NEAR(a[0], 1.0, 1e-12);
}

TEST(Entmax, SoftmaxLimit) {
  const std::vector<double> z{1, 0, -1};
  EXPECT_LT(linf(entmax(z, 1.0001), softmax_t(z, 1.0)), 1e-3);
}

TEST(Entmax, RandomVectorsAgainstGridOracle) {
  Rng rng(11);
  for (int i = 0; i < 50; ++i) {
    const auto z = random_vector(6, rng, -3, 3);
    const auto a = entmax(z, 2.0);
    expect_simplex(a);
    EXPECT_LT(linf(a, entmax2_grid_oracle(z)), 1e-6);
  }
}

TEST(Entmax, BadArgumentsThrow) {
  EXPECT_THROW(entmax(std::vector<double>{1, 0}, 1.0), DomainError);
  EXPECT_THROW(entmax(std::vector<double>{1, 0}, 2.0, {0.0, 200}), DomainError);
}

TEST(Mixed, Boundaries) {
  Rng rng(12);
  const auto z = random_vector(5, rng);
  EXPECT_LT(linf(mixed_attention(z, 38.0), softmax_t(z, 1.0)), 1e-9);
  EXPECT_LT(linf(mixed_attention(z, -38.0), nsf(z)), 1e-9);
}

TEST(Mixed, HalfIsElementwiseMean) {
  const std::vector<double> z{1, -1};
  const auto s = softmax_t(z, 1.0);
  const auto n = nsf(z);
  const auto m = mixed_attention(z, 0.0);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(m[i], 0.5 * (s[i] + n[i]), 1e-15);
}

TEST(Kl, Examples) {
  Rng rng(13);
  const auto p = random_simplex(6, rng);
  EXPECT_EQ(kl(p, p), 0.0);
  // the zero entry is clamped, contributing 1e-12 * log(1e-12 / 0.5)
  EXPECT_NEAR(kl(std::vector<double>{1, 0}, std::vector<double>{0.5, 0.5}),
              std::log(2.0) + 1e-12 * std::log(2e-12), 1e-15);
  EXPECT_THROW(kl(std::vector<double>{1, 0}, std::vector<double>{1, 0, 0}), ShapeError);
}

TEST(Kl, MatchesScalarLoop) {
  Rng rng(14);
  const auto p = random_simplex(5, rng), q = random_simplex(5, rng);
  double ref = 0.0;
  for (std::size_t i = 0; i < 5; ++i) ref += p[i] * std::log(p[i] / q[i]);
  EXPECT_NEAR(kl(p, q), ref, 1e-12);
  EXPECT_GE(kl(p, q), 0.0);
}

TEST(Jsd, Examples) {
  Rng rng(15);
  const auto p = random_simplex(4, rng);
  EXPECT_NEAR(jsd(p, p), 0.0, 1e-15);
  EXPECT_NEAR(jsd(std::vector<double>{1, 0}, std::vector<double>{0, 1}), std::numbers::ln2, 1e-10);
  EXPECT_THROW(jsd(std::vector<double>{1, 0}, std::vector<double>{1}), ShapeError);
}

TEST(Jsd, SymmetricAndBounded) {
  Rng rng(16);
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = 2 + static_cast<std::size_t>(i % 7);
    const auto p = random_simplex(n, rng), q = random_simplex(n, rng);
    EXPECT_NEAR(jsd(p, q), jsd(q, p), 1e-12);
    EXPECT_GE(jsd(p, q), 0.0);
    EXPECT_LE(jsd(p, q), std::numbers::ln2);
  }
}

TEST(Transforms, OutputsAreSimplexValidAndMonotone) {
  Rng rng(17);
  for (int i = 0; i < 300; ++i) {
    const auto z = random_vector(8, rng, -15, 15);
    const std::vector<std::vector<double>> outs{softmax_t(z, 0.7), nsf(z), entmax(z, 1.5),
                                                entmax(z, 2.0), mixed_attention(z, 0.3)};
    for (std::size_t o = 0; o < outs.size(); ++o) {
      expect_simplex(outs[o]);
      for (std::size_t a = 0; a < z.size(); ++a) {
        for (std::size_t b = 0; b < z.size(); ++b) {
          if (z[a] <= z[b]) continue;
          EXPECT_GE(outs[o][a], outs[o][b]);
          // strict for the two smooth maps; extreme scores can saturate doubles
          if (o < 2 && std::abs(z[a] - z[b]) > 1e-3 && std::max(z[a], z[b]) < 10 &&
              std::min(z[a], z[b]) > -10) {
            EXPECT_GT(outs[o][a], outs[o][b]);
          }
        }
      }
    }
  }
}

TEST(Transforms, RowGradientsMatchFiniteDifferences) {
  Rng rng(18);
  for (int trial = 0; trial < 5; ++trial) {
    Matrix z = random_matrix(3, 5, rng);
    const Matrix w = random_matrix(3, 5, rng);
    Matrix xi{{0.4}};
    const Matrix target = softmax_rows(random_matrix(3, 5, rng));
    using Build = std::function<ad::Var(ad::Tape&, ad::Var, ad::Var)>;
    const std::vector<Build> builds{
        [](ad::Tape& t, ad::Var v, ad::Var) { return ad::softmax_rows(t, v, 1.0); },
        [](ad::Tape& t, ad::Var v, ad::Var) { return ad::softmax_rows(t, v, 0.6); },
        [](ad::Tape& t, ad::Var v, ad::Var) { return ad::nsf_rows(t, v); },
        [](ad::Tape& t, ad::Var v, ad::Var x) { return ad::mixed_rows(t, v, x); },
    };
    for (const auto& build : builds) {
      auto loss = [&](ad::Tape& t, ad::Var zv, ad::Var xv) {
        return ad::sum(t, ad::mul(t, build(t, zv, xv), t.constant(w)));
      };
      ad::Tape t;
      ad::Var zv = t.leaf(z), xv = t.leaf(xi);
      t.backward(loss(t, zv, xv));
      auto f = [&] {
        ad::Tape u;
        return u.value(loss(u, u.leaf(z), u.leaf(xi)))(0, 0);
      };
      EXPECT_LT(max_rel_err(t.grad(zv).data(), numeric_gradient(f, z.data())), 1e-5);
      EXPECT_LT(max_rel_err(t.grad(xv).data(), numeric_gradient(f, xi.data())), 1e-5);
    }
    // KL in both arguments
    Matrix p = softmax_rows(random_matrix(3, 5, rng));
    Matrix q = softmax_rows(random_matrix(3, 5, rng));
    ad::Tape t;
    ad::Var pv = t.leaf(p), qv = t.leaf(q);
    t.backward(ad::kl_rows_mean(t, pv, qv));
    auto f = [&] {
      ad::Tape u;
      return u.value(ad::kl_rows_mean(u, u.leaf(p), u.leaf(q)))(0, 0);
    };
    // log terms have large third derivatives near small entries: use a finer step
    EXPECT_LT(max_rel_err(t.grad(pv).data(), numeric_gradient(f, p.data(), 1e-6)), 1e-5);
    EXPECT_LT(max_rel_err(t.grad(qv).data(), numeric_gradient(f, q.data(), 1e-6)), 1e-5);
  }
}

TEST(Transforms, RowVersionsMatchVectorVersions) {
  Rng rng(19);
  const Matrix z = random_matrix(4, 6, rng);
  const Matrix s = softmax_rows(z, 2.0), n = nsf_rows(z), e = entmax_rows(z, 1.5),
               m = mixed_rows(z, -0.3);
  for (std::size_t r = 0; r < 4; ++r) {
    EXPECT_EQ(s.row_copy(r), softmax_t(z.row(r), 2.0));
    EXPECT_EQ(n.row_copy(r), nsf(z.row(r)));
    EXPECT_EQ(e.row_copy(r), entmax(z.row(r), 1.5));
    EXPECT_EQ(m.row_copy(r), mixed_attention(z.row(r), -0.3));
  }
}

}  // namespace
}  // namespace asmil
