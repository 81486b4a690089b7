#include <cmath>
#include <random>

#include <boost/math/special_functions/beta.hpp>
#include <gtest/gtest.h>

#include "aps/beta.hpp"

using namespace aps;

namespace {

// Bisection on the Boost cdf, used as an independent inverse.
double bisect_quantile(double q, double a, double b) {
  double lo = 0.0, hi = 1.0;
  for (int i = 0; i < 2000 && hi - lo > 1e-300; ++i) {
    const double mid = (lo > 0.0 && hi / lo > 4.0) ? std::sqrt(lo * hi) : 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (boost::math::ibeta(a, b, mid) < q) lo = mid;
    else hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST(BetaCdf, ClosedForms) {
  EXPECT_NEAR(beta_cdf(0.3, 1, 1), 0.3, 1e-15);
  EXPECT_NEAR(beta_cdf(0.5, 2, 1), 0.25, 1e-15);
  EXPECT_NEAR(beta_cdf(0.5, 3, 3), 0.5, 1e-15);
  EXPECT_EQ(beta_cdf(0.0, 2, 3), 0.0);
  EXPECT_EQ(beta_cdf(1.0, 2, 3), 1.0);
}

TEST(BetaCdf, MatchesBoostOnRandomShapes) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> logshape(std::log(0.5), std::log(5000.0));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < 20000; ++i) {
    const double a = std::exp(logshape(rng));
    const double b = std::exp(logshape(rng));
    const double x = unit(rng);
    const double ref = boost::math::ibeta(a, b, x);
    ASSERT_NEAR(beta_cdf(x, a, b), ref, 1e-12) << "a=" << a << " b=" << b << " x=" << x;
    if (ref > 1e-250 && ref < 1e-3) ASSERT_NEAR(beta_cdf(x, a, b) / ref, 1.0, 1e-9);
    const double cref = boost::math::ibetac(a, b, x);
    if (cref > 1e-250 && cref < 1e-3) ASSERT_NEAR(beta_ccdf(x, a, b) / cref, 1.0, 1e-9);
  }
}

TEST(BetaCdf, RejectsDomainViolations) {
  EXPECT_THROW(beta_cdf(-0.1, 1, 1), InvalidInput);
  EXPECT_THROW(beta_cdf(1.1, 1, 1), InvalidInput);
  EXPECT_THROW(beta_cdf(0.5, 0, 1), InvalidInput);
  EXPECT_THROW(beta_cdf(0.5, 1, -2), InvalidInput);
  EXPECT_THROW(beta_cdf(std::nan(""), 1, 1), InvalidInput);
}

TEST(BetaPdf, MatchesBoostDerivative) {
  for (double a : {0.7, 1.0, 3.5, 120.0}) {
    for (double b : {0.6, 2.0, 40.0}) {
      for (double x : {0.01, 0.3, 0.5, 0.97}) {
        const double ref = boost::math::ibeta_derivative(a, b, x);
        EXPECT_NEAR(beta_pdf(x, a, b), ref, 1e-10 * std::max(1.0, ref));
      }
    }
  }
}

TEST(BetaQuantile, ClosedForms) {
  EXPECT_NEAR(beta_quantile(0.25, 2, 1), 0.5, 1e-14);
  for (double q : {1e-12, 0.1, 0.5, 0.9, 1 - 1e-12}) EXPECT_NEAR(beta_quantile(q, 1, 1), q, 1e-14);
}

TEST(BetaQuantile, DeepTailAgainstBisection) {
  const double x = beta_quantile(1e-10, 5, 5);
  const double ref = bisect_quantile(1e-10, 5, 5);
  EXPECT_NEAR(x, ref, 1e-14);
  EXPECT_NEAR(boost::math::ibeta(5.0, 5.0, x) / 1e-10, 1.0, 1e-10);
}

TEST(BetaQuantile, RejectsEndpoints) {
  EXPECT_THROW(beta_quantile(0.0, 2, 2), InvalidInput);
  EXPECT_THROW(beta_quantile(1.0, 2, 2), InvalidInput);
  EXPECT_THROW(beta_upper_quantile(0.0, 2, 2), InvalidInput);
}

TEST(BetaQuantile, MonotoneInLevel) {
  double prev = 0.0;
  for (double q = 1e-16; q < 1.0; q *= 3.0) {
    const double x = beta_quantile(q, 3.2, 17.0);
    EXPECT_GT(x, prev);
    prev = x;
  }
}

TEST(BetaUpperQuantile, ResolvesLevelsBelowEpsilon) {
  // 1 - p rounds to 1 for these levels; the upper tail must still be exact,
  // up to the spacing of doubles when x lies next to 1.
  for (double p : {1e-13, 1e-17, 1e-19, 1e-25}) {
    for (auto [a, b] : {std::pair{1.0, 1.0}, {2.0, 30.0}, {51.0, 1.0}, {300.0, 2200.0}}) {
      const double x = beta_upper_quantile(p, a, b);
      ASSERT_GT(x, 0.0);
      ASSERT_LE(x, 1.0);
      const double ratio = boost::math::ibetac(a, b, x) / p;
      if (std::fabs(ratio - 1.0) <= 1e-9) continue;
      const double below = boost::math::ibetac(a, b, std::nextafter(x, 0.0));
      const double above = x < 1.0 ? boost::math::ibetac(a, b, std::nextafter(x, 1.0)) : 0.0;
      EXPECT_GE(below, p * (1 - 1e-9)) << "a=" << a << " b=" << b << " p=" << p;
      EXPECT_LE(above, p * (1 + 1e-9)) << "a=" << a << " b=" << b << " p=" << p;
      EXPECT_GT(x, 1.0 - 1e-6) << "only the spacing of doubles near 1 may limit accuracy";
    }
  }
}

TEST(TruncatedBeta, NoTruncationEqualsCdf) {
  for (double x : {0.05, 0.4, 0.77}) EXPECT_NEAR(truncated_cdf(x, 3, 4, 0, 1), beta_cdf(x, 3, 4), 1e-15);
}

TEST(TruncatedBeta, ClosedForms) {
  EXPECT_NEAR(truncated_cdf(0.4, 1, 1, 0.2, 0.6), 0.5, 1e-14);
  EXPECT_NEAR(truncated_cdf(0.75, 2, 1, 0.5, 1.0), (0.5625 - 0.25) / (1 - 0.25), 1e-14);
  EXPECT_EQ(truncated_cdf(0.1, 2, 2, 0.2, 0.6), 0.0);
  EXPECT_EQ(truncated_cdf(0.7, 2, 2, 0.2, 0.6), 1.0);
}

TEST(TruncatedBeta, QuantileRoundTrip) {
  for (auto [a, b] : {std::pair{1.0, 1.0}, {3.0, 90.0}, {40.0, 2.0}}) {
    for (double q : {1e-9, 0.01, 0.5, 0.99}) {
      const double x = truncated_quantile(q, a, b, 0.01, 0.2);
      EXPECT_GE(x, 0.01);
      EXPECT_LE(x, 0.2);
      EXPECT_NEAR(truncated_cdf(x, a, b, 0.01, 0.2), q, 1e-9 * q + 1e-13);
    }
  }
}

TEST(TruncatedBeta, MeanMatchesQuadrature) {
  const double a = 5, b = 60, lo = 0.01, hi = 0.2;
  const int n = 20000;
  double num = 0, den = 0;
  for (int i = 0; i <= n; ++i) {
    const double x = lo + (hi - lo) * i / n;
    const double w = (i == 0 || i == n) ? 1 : (i % 2 ? 4 : 2);
    const double f = boost::math::ibeta_derivative(a, b, x);
    num += w * x * f;
    den += w * f;
  }
  EXPECT_NEAR(truncated_mean(a, b, lo, hi), num / den, 1e-10);
}

TEST(TruncatedBeta, DegenerateMassIsReported) {
  EXPECT_THROW(truncated_cdf(0.5, 5000, 1, 0.0, 0.01), NumericalDegeneracy);
  EXPECT_THROW(truncated_cdf(0.5, 1, 1, 0.6, 0.2), InvalidInput);
}
