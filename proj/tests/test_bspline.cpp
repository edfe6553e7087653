#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hsrkan/bspline.hpp"

using namespace hsrkan::bspline;

namespace {

SplineConfig cfg(int G, int k, double lo = -1.0, double hi = 1.0) {
  SplineConfig c;
  c.grid = G;
  c.order = k;
  c.lo = lo;
  c.hi = hi;
  return c;
}

// Uniform B-spline of degree k <= 3 in closed form, u = (x - t_i) / h.
double closed_form(int k, double u) {
  if (u < 0.0 || u >= k + 1.0) return 0.0;
  switch (k) {
    case 0:
      return 1.0;
    case 1:
      return u < 1.0 ? u : 2.0 - u;
    case 2:
      if (u < 1.0) return u * u / 2.0;
      if (u < 2.0) return (-2.0 * u * u + 6.0 * u - 3.0) / 2.0;
      return (3.0 - u) * (3.0 - u) / 2.0;
    default:
      if (u < 1.0) return u * u * u / 6.0;
      if (u < 2.0) return (-3.0 * u * u * u + 12.0 * u * u - 12.0 * u + 4.0) / 6.0;
      if (u < 3.0) return (3.0 * u * u * u - 24.0 * u * u + 60.0 * u - 44.0) / 6.0;
      return (4.0 - u) * (4.0 - u) * (4.0 - u) / 6.0;
  }
}

}  // namespace

TEST(Knots, SmallestCase) {
  const KnotVector kv(cfg(1, 0, 0.0, 1.0));
  ASSERT_EQ(kv.size(), 2u);
  EXPECT_DOUBLE_EQ(kv.at(0), 0.0);
  EXPECT_DOUBLE_EQ(kv.at(1), 1.0);
}

TEST(Knots, DefaultGrid) {
  const KnotVector kv(cfg(5, 3));
  ASSERT_EQ(kv.size(), 12u);
  EXPECT_NEAR(kv.spacing(), 0.4, 1e-15);
  EXPECT_NEAR(kv.at(-3), -2.2, 1e-12);
  EXPECT_NEAR(kv.at(8), 2.2, 1e-12);
  EXPECT_DOUBLE_EQ(kv.at(0), -1.0);
  EXPECT_DOUBLE_EQ(kv.at(5), 1.0);
  for (std::size_t p = 1; p < kv.size(); ++p)
    EXPECT_NEAR(kv.values()[p] - kv.values()[p - 1], kv.spacing(), 1e-12 * kv.spacing());
  EXPECT_THROW(kv.at(9), std::out_of_range);
}

TEST(Knots, LinearExample) {
  const KnotVector kv(cfg(2, 1, 0.0, 2.0));
  const std::vector<double> expect{-1, 0, 1, 2, 3};
  ASSERT_EQ(kv.values().size(), expect.size());
  for (std::size_t i = 0; i < expect.size(); ++i) EXPECT_NEAR(kv.values()[i], expect[i], 1e-15);
}

TEST(Knots, InvalidConfigs) {
  EXPECT_THROW(KnotVector(cfg(5, 3, 1.0, 1.0)), hsrkan::ConfigError);
  EXPECT_THROW(KnotVector(cfg(0, 3)), hsrkan::ConfigError);
  EXPECT_THROW(KnotVector(cfg(5, -1)), hsrkan::ConfigError);
}

TEST(Basis, IndicatorAndSupport) {
  const KnotVector kv(cfg(1, 0, 0.0, 1.0));
  EXPECT_EQ(basis(0, 0, 0.5, kv), 1.0);
  EXPECT_EQ(basis(0, 0, 0.0, kv), 1.0);
  EXPECT_EQ(basis(0, 0, 1.0, kv), 0.0);  // half-open

  const KnotVector k3(cfg(5, 3));
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-2.2, 2.2);
  for (int n = 0; n < 500; ++n) {
    const double x = u(rng);
    for (int i = -3; i <= 1; ++i) {
      const bool inside = k3.at(i) <= x && x < k3.at(i + 4);
      const double b = basis(i, 3, x, k3);
      if (!inside) {
        EXPECT_EQ(b, 0.0);
      }
      EXPECT_GE(b, 0.0);
    }
  }
  EXPECT_THROW(basis(5, 3, 0.0, k3), std::out_of_range);
  EXPECT_THROW(basis(-4, 3, 0.0, k3), std::out_of_range);
}

TEST(Basis, MatchesClosedFormUpToCubic) {
  std::mt19937_64 rng(2);
  for (int k = 0; k <= 3; ++k) {
    const KnotVector kv(cfg(4, k, -1.0, 1.0));
    std::uniform_real_distribution<double> u(kv.at(-k), kv.at(4 + k));
    for (int n = 0; n < 300; ++n) {
      const double x = u(rng);
      for (int i = -k; i + k + 1 <= 4 + k; ++i) {
        const double expect = closed_form(k, (x - kv.at(i)) / kv.spacing());
        EXPECT_NEAR(basis(i, k, x, kv), expect, 1e-12) << "k=" << k << " i=" << i << " x=" << x;
      }
    }
  }
}

TEST(BasisRow, Examples) {
  const auto row = basis_row(0.3, KnotVector(cfg(1, 0, 0.0, 1.0)));
  ASSERT_EQ(row.size(), 1u);
  EXPECT_EQ(row[0], 1.0);

  // Hat functions on knots -1,0,1,2,3: at x=0.5 the hats peaking at 0 and 1 are 0.5 each.
  const auto hat = basis_row(0.5, KnotVector(cfg(2, 1, 0.0, 2.0)));
  ASSERT_EQ(hat.size(), 3u);
  EXPECT_NEAR(hat[0], 0.5, 1e-15);
  EXPECT_NEAR(hat[1], 0.5, 1e-15);
  EXPECT_EQ(hat[2], 0.0);
}

TEST(BasisRow, AgreesWithRecursionAndSumsToOne) {
  std::mt19937_64 rng(3);
  for (int G = 1; G <= 9; ++G)
    for (int k = 0; k <= 5; ++k) {
      const KnotVector kv(cfg(G, k));
      std::uniform_real_distribution<double> u(-1.0, 1.0);
      for (int n = 0; n < 50; ++n) {
        const double x = u(rng);
        const auto row = basis_row(x, kv);
        ASSERT_EQ(row.size(), static_cast<std::size_t>(G + k));
        double s = 0.0;
        for (int m = 0; m < G + k; ++m) {
          EXPECT_NEAR(row[static_cast<std::size_t>(m)], basis(m - k, k, x, kv), 1e-12);
          EXPECT_GE(row[static_cast<std::size_t>(m)], 0.0);
          s += row[static_cast<std::size_t>(m)];
        }
        EXPECT_NEAR(s, 1.0, 1e-9);
      }
    }
}

TEST(BasisRow, ClampsOutsideDomain) {
  const KnotVector kv(cfg(5, 3));
  const auto lo = basis_row(-7.0, kv), at_lo = basis_row(-1.0, kv);
  const auto hi = basis_row(3.0, kv), at_hi = basis_row(kv.clamp_hi(), kv);
  for (std::size_t m = 0; m < lo.size(); ++m) {
    EXPECT_EQ(lo[m], at_lo[m]);
    EXPECT_EQ(hi[m], at_hi[m]);
  }
  double s = 0.0;
  for (double v : hi) s += v;
  EXPECT_NEAR(s, 1.0, 1e-12);
  for (double d : basis_row_derivative(3.0, kv)) EXPECT_EQ(d, 0.0);
}

TEST(BasisRow, ContinuousAtInteriorKnots) {
  for (int k = 1; k <= 5; ++k) {
    const KnotVector kv(cfg(5, k));
    for (int i = 1; i < 5; ++i) {
      const double t = kv.at(i);
      const auto a = basis_row(t - 1e-8, kv), b = basis_row(t + 1e-8, kv);
      for (std::size_t m = 0; m < a.size(); ++m) EXPECT_NEAR(a[m], b[m], 1e-6) << "k=" << k << " knot " << i;
    }
  }
}

TEST(BasisRow, DerivativeMatchesFiniteDifference) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-0.99, 0.99);
  for (int k = 1; k <= 5; ++k) {
    const KnotVector kv(cfg(5, k));
    for (int n = 0; n < 40; ++n) {
      const double x = u(rng), h = 1e-6;
      const auto d = basis_row_derivative(x, kv);
      const auto p = basis_row(x + h, kv), q = basis_row(x - h, kv);
      for (std::size_t m = 0; m < d.size(); ++m) EXPECT_NEAR(d[m], (p[m] - q[m]) / (2 * h), 1e-5);
    }
  }
}
