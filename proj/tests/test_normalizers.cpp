#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "sgst/errors.hpp"
#include "sgst/normalizers.hpp"

using namespace sgst;

namespace {

std::vector<double> normal_vector(std::mt19937_64& rng, std::size_t n, double stddev) {
  std::normal_distribution<double> d(0.0, stddev);
  std::vector<double> v(n);
  for (double& x : v) x = d(rng);
  return v;
}

double total(const std::vector<double>& p) { return std::accumulate(p.begin(), p.end(), 0.0); }

// Independent oracle: Eq. residual sum_i max(0, (a-1) z_i - tau)^(1/(a-1)).
double mass(const std::vector<double>& z, double alpha, double tau) {
  double s = 0.0;
  for (double x : z) s += std::pow(std::max(0.0, (alpha - 1.0) * x - tau), 1.0 / (alpha - 1.0));
  return s;
}

}  // namespace

TEST(SoftmaxTest, ConstantVectorIsUniform) {
  for (double c : {-7.0, 0.0, 3.25}) {
    const auto out = softmax(std::vector<double>{c, c, c});
    for (double p : out.probs) EXPECT_NEAR(p, 1.0 / 3.0, 1e-15);
  }
}

TEST(SoftmaxTest, LargeScoresDoNotOverflow) {
  const auto out = softmax(std::vector<double>{1000.0, 0.0});
  EXPECT_EQ(out.probs[0], 1.0);
  EXPECT_GE(out.probs[1], 0.0);
  EXPECT_LT(out.probs[1], 1e-300);
}

TEST(SoftmaxTest, AnalyticPair) {
  const auto out = softmax(std::vector<double>{0.0, std::log(3.0)});
  EXPECT_NEAR(out.probs[0], 0.25, 1e-15);
  EXPECT_NEAR(out.probs[1], 0.75, 1e-15);
  EXPECT_EQ(out.tau, 0.0);
  EXPECT_TRUE(std::all_of(out.support.begin(), out.support.end(), [](bool b) { return b; }));
}

TEST(SoftmaxTest, EmptyRejected) { EXPECT_THROW(softmax(std::vector<double>{}), ContractError); }

TEST(FindTauTest, SymmetricPairUnderSparsemax) {
  EXPECT_NEAR(find_tau(std::vector<double>{0.0, 0.0}, 2.0), -0.5, 1e-10);
}

TEST(FindTauTest, UniformFourUnderEntmax15) {
  EXPECT_NEAR(find_tau(std::vector<double>{0, 0, 0, 0}, 1.5), -0.5, 1e-10);
}

TEST(FindTauTest, ResidualWithinTolerance) {
  const std::vector<double> z{1.0, 0.0};
  const double tau = find_tau(z, 1.5);
  EXPECT_NEAR(mass(z, 1.5, tau), 1.0, 1e-10);
}

TEST(FindTauTest, AlphaAtMostOneRejected) {
  EXPECT_THROW(find_tau(std::vector<double>{1.0, 2.0}, 1.0), DomainError);
  EXPECT_THROW(entmax(std::vector<double>{1.0, 2.0}, 0.5), DomainError);
}

TEST(FindTauTest, ResidualOnRandomInputs) {
  std::mt19937_64 rng(12);
  for (int i = 0; i < 200; ++i) {
    const auto z = normal_vector(rng, 1 + rng() % 10, 2.0);
    const double alpha = 1.05 + 0.95 * static_cast<double>(rng() % 1000) / 1000.0;
    EXPECT_NEAR(mass(z, alpha, find_tau(z, alpha)), 1.0, 1e-9) << "alpha=" << alpha;
  }
}

TEST(EntmaxTest, ConstantInputUniformForAnyAlpha) {
  for (double alpha : {1.1, 1.5, 1.7, 2.0}) {
    const auto out = entmax(std::vector<double>{0.4, 0.4, 0.4, 0.4, 0.4}, alpha);
    for (double p : out.probs) EXPECT_NEAR(p, 0.2, 1e-10) << alpha;
  }
}

TEST(EntmaxTest, SparsemaxSaturates) {
  const auto out = entmax(std::vector<double>{10.0, 0.0}, 2.0);
  EXPECT_EQ(out.probs[0], 1.0);
  EXPECT_EQ(out.probs[1], 0.0);
  EXPECT_FALSE(out.support[1]);
}

TEST(EntmaxTest, BisectionMatchesExact15OnPair) {
  const std::vector<double> z{1.0, 0.0};
  const auto a = entmax_bisect(z, 1.5), b = entmax15_exact(z);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(a.probs[i], b.probs[i], 1e-8);
  // Closed form: p = ((z - tau)/2)^2 with tau solving (1 - tau)^2 + tau^2 = 4 -> tau = (1 - sqrt 7)/2.
  const double tau = (1.0 - std::sqrt(7.0)) / 2.0;
  EXPECT_NEAR(b.probs[0], std::pow((1.0 - tau) / 2.0, 2.0), 1e-12);
}

TEST(EntmaxTest, NearOneApproachesSoftmax) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    const auto z = normal_vector(rng, 8, 1.0);
    const auto e = entmax(z, 1.0 + 1e-4), s = softmax(z);
    for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(e.probs[i], s.probs[i], 1e-3);
  }
}

TEST(EntmaxTest, SingleEntryIsOne) {
  for (double alpha : {1.2, 1.5, 2.0}) {
    const auto out = entmax(std::vector<double>{-4.0}, alpha);
    ASSERT_EQ(out.probs.size(), 1u);
    EXPECT_EQ(out.probs[0], 1.0);
  }
}

TEST(EntmaxTest, BoundaryTieExcludedFromSupport) {
  // Sparsemax of [1, 0] has tau = 0 exactly, so the second entry sits on the boundary.
  const auto out = sparsemax_exact(std::vector<double>{1.0, 0.0});
  EXPECT_EQ(out.tau, 0.0);
  EXPECT_EQ(out.probs[1], 0.0);
  EXPECT_FALSE(out.support[1]);
}

TEST(EntmaxTest, SimplexShiftAndPermutationProperties) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + rng() % 12;
    const auto z = normal_vector(rng, n, 3.0);
    const double alpha = std::array<double, 4>{1.2, 1.5, 1.8, 2.0}[rng() % 4];
    const auto out = entmax(z, alpha);
    EXPECT_NEAR(total(out.probs), 1.0, 1e-9);
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_GE(out.probs[i], 0.0);
      EXPECT_EQ(out.support[i], out.probs[i] > 0.0);
    }
    std::vector<double> shifted = z;
    for (double& x : shifted) x += 2.75;
    const auto sh = entmax(shifted, alpha);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(sh.probs[i], out.probs[i], 1e-9);

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<double> pz(n);
    for (std::size_t i = 0; i < n; ++i) pz[i] = z[perm[i]];
    const auto pout = entmax(pz, alpha);
    for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(pout.probs[i], out.probs[perm[i]]);
  }
}

TEST(EntmaxTest, SparsemaxBisectionAgreesWithExactUpTo32) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto z = normal_vector(rng, 1 + rng() % 32, 3.0);
    const auto a = entmax_bisect(z, 2.0), b = sparsemax_exact(z);
    for (std::size_t i = 0; i < z.size(); ++i) ASSERT_NEAR(a.probs[i], b.probs[i], 1e-9);
  }
}

TEST(EntmaxTest, SupportShrinksAsAlphaGrows) {
  std::mt19937_64 rng(31);
  double s15 = 0.0, s2 = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto z = normal_vector(rng, 10, 2.0);
    const auto a = entmax(z, 1.5), b = entmax(z, 2.0), c = softmax(z);
    s15 += static_cast<double>(std::count(a.support.begin(), a.support.end(), true));
    s2 += static_cast<double>(std::count(b.support.begin(), b.support.end(), true));
    EXPECT_EQ(std::count(c.support.begin(), c.support.end(), true), 10);
  }
  EXPECT_LE(s2, s15);
}

TEST(EntmaxBackwardTest, ConstantUpstreamGivesZero) {
  std::mt19937_64 rng(2);
  const auto z = normal_vector(rng, 6, 1.0);
  for (double alpha : {1.3, 1.5, 2.0}) {
    const auto g = entmax_backward(entmax(z, alpha), alpha, std::vector<double>(6, 2.5));
    for (double x : g) EXPECT_NEAR(x, 0.0, 1e-14);
  }
}

TEST(EntmaxBackwardTest, OneHotSparsemaxHasNoOffSupportGradient) {
  const auto out = entmax(std::vector<double>{5.0, 0.0, -1.0}, 2.0);
  const auto g = entmax_backward(out, 2.0, std::vector<double>{0.3, -2.0, 4.0});
  EXPECT_EQ(g[1], 0.0);
  EXPECT_EQ(g[2], 0.0);
}

TEST(EntmaxBackwardTest, MatchesFiniteDifferences) {
  std::mt19937_64 rng(40);
  const double h = 1e-5;
  int checked = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto z = normal_vector(rng, 5, 1.0);
    const auto up = normal_vector(rng, 5, 1.0);
    const double alpha = std::array<double, 3>{1.3, 1.5, 2.0}[trial % 3];
    const auto out = entmax(z, alpha);
    const auto g = entmax_backward(out, alpha, up);
    bool stable = true;
    std::vector<double> numeric(5);
    for (std::size_t i = 0; i < 5; ++i) {
      auto zp = z, zm = z;
      zp[i] += h;
      zm[i] -= h;
      const auto op = entmax(zp, alpha), om = entmax(zm, alpha);
      if (op.support != out.support || om.support != out.support) stable = false;
      double fp = 0.0, fm = 0.0;
      for (std::size_t k = 0; k < 5; ++k) {
        fp += op.probs[k] * up[k];
        fm += om.probs[k] * up[k];
      }
      numeric[i] = (fp - fm) / (2 * h);
    }
    if (!stable) continue;
    ++checked;
    double diff = 0.0, scale = 1e-8;
    for (std::size_t i = 0; i < 5; ++i) {
      diff = std::max(diff, std::abs(g[i] - numeric[i]));
      scale = std::max({scale, std::abs(g[i]), std::abs(numeric[i])});
    }
    EXPECT_LE(diff / scale, 1e-4);
  }
  EXPECT_GT(checked, 150);
}

TEST(AlphaTest, AlphaOfExamples) {
  EXPECT_EQ(alpha_of(AlphaSpec::learned(0.0)), 1.5);
  EXPECT_NEAR(alpha_of(AlphaSpec::learned(50.0)), 2.0, 1e-3 + 1e-12);
  EXPECT_LT(alpha_of(AlphaSpec::learned(50.0)), 2.0);
  EXPECT_EQ(alpha_of(AlphaSpec::fixed(1.5)), 1.5);
  EXPECT_THROW(AlphaSpec::fixed(1.0), DomainError);
  EXPECT_THROW(AlphaSpec::fixed(2.5), DomainError);
}

TEST(AlphaTest, LearnedAlphaStaysStrictlyInsideInterval) {
  for (double s : {-1e6, -30.0, -1.0, 0.0, 1.0, 30.0, 1e6}) {
    const double a = alpha_of(AlphaSpec::learned(s));
    EXPECT_GT(a, 1.0);
    EXPECT_LT(a, 2.0);
  }
}

TEST(AlphaGradientTest, ConstantScoresGiveZero) {
  const std::vector<double> z(4, 0.7), up{1.0, -2.0, 0.5, 3.0};
  EXPECT_NEAR(alpha_gradient(z, AlphaSpec::learned(0.3), up), 0.0, 1e-9);
}

TEST(AlphaGradientTest, SaturatedSigmoidGivesNearZero) {
  const std::vector<double> z{1.0, -0.5, 0.2, 2.0}, up{1.0, -2.0, 0.5, 3.0};
  EXPECT_NEAR(alpha_gradient(z, AlphaSpec::learned(20.0), up), 0.0, 1e-7);
  EXPECT_NEAR(alpha_gradient(z, AlphaSpec::learned(-20.0), up), 0.0, 1e-7);
}

TEST(AlphaGradientTest, FixedModeRejected) {
  const std::vector<double> z{1.0, 0.0};
  EXPECT_THROW(alpha_gradient(z, AlphaSpec::fixed(1.5), z), ContractError);
}

TEST(AlphaGradientTest, MatchesDifferenceInAttScalar) {
  std::mt19937_64 rng(17);
  int checked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto z = normal_vector(rng, 4, 1.0);
    const auto up = normal_vector(rng, 4, 1.0);
    const double s = normal_vector(rng, 1, 1.0)[0];
    const double h = 1e-4;
    const auto loss = [&](double scalar) {
      const auto out = entmax(z, alpha_of(AlphaSpec::learned(scalar)));
      double f = 0.0;
      for (std::size_t i = 0; i < 4; ++i) f += out.probs[i] * up[i];
      return f;
    };
    const auto base = entmax(z, alpha_of(AlphaSpec::learned(s)));
    if (entmax(z, alpha_of(AlphaSpec::learned(s + h))).support != base.support ||
        entmax(z, alpha_of(AlphaSpec::learned(s - h))).support != base.support) {
      continue;
    }
    ++checked;
    const double numeric = (loss(s + h) - loss(s - h)) / (2 * h);
    const double analytic = alpha_gradient(z, AlphaSpec::learned(s), up);
    EXPECT_NEAR(analytic, numeric, 1e-3 * std::max(1.0, std::abs(numeric)));
  }
  EXPECT_GT(checked, 80);
}

TEST(AlphaGradientTest, AnalyticMatchesFiniteDifferenceAwayFromKinks) {
  std::mt19937_64 rng(29);
  int checked = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto z = normal_vector(rng, 5, 1.5);
    const auto up = normal_vector(rng, 5, 1.0);
    const double alpha = 1.1 + 0.8 * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    const auto base = entmax(z, alpha);
    const double h = 1e-3;
    if (entmax(z, alpha + h).support != base.support || entmax(z, alpha - h).support != base.support) continue;
    ++checked;
    const double analytic = entmax_alpha_derivative(z, base, alpha, up);
    const double fd = entmax_alpha_derivative_fd(z, alpha, up);
    EXPECT_NEAR(analytic, fd, 1e-5 * std::max(1.0, std::abs(fd)));
  }
  EXPECT_GT(checked, 100);
}

TEST(AlphaGradientTest, AnalyticIsContinuousAcrossSupportChange) {
  const std::vector<double> up{0.3, -1.0, 2.0};
  std::vector<double> z{1.0, 0.0, 0.0};
  // third entry sits exactly on the threshold at alpha = 1.5
  const double alpha = 1.5;
  const auto two = entmax(std::vector<double>{1.0, 0.0}, alpha);
  z[2] = two.tau / (alpha - 1.0);
  const double eps = 1e-6;
  const double left = entmax_alpha_derivative(z, entmax(z, alpha - eps), alpha - eps, up);
  const double right = entmax_alpha_derivative(z, entmax(z, alpha + eps), alpha + eps, up);
  EXPECT_NEAR(left, right, 1e-3);
}

TEST(AlphaGradientTest, AnalyticRejectsMismatchedSizes) {
  const std::vector<double> z{1.0, 0.0, -1.0}, up{1.0, 1.0};
  EXPECT_THROW(entmax_alpha_derivative(z, entmax(z, 1.5), 1.5, up), DimensionError);
}
