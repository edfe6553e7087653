#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hsrkan/ops.hpp"

using namespace hsrkan;

namespace {
Tensor random(Shape s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor t(std::move(s));
  for (double& v : t.mutable_values()) v = u(rng);
  return t;
}
}  // namespace

TEST(Matmul, HandExample) {
  const Tensor a({2, 2}, std::vector<double>{1, 2, 3, 4});
  const Tensor b({2, 1}, std::vector<double>{1, 1});
  const Tensor c = ops::matmul(a, b);
  ASSERT_EQ(c.shape(), (Shape{2, 1}));
  EXPECT_DOUBLE_EQ(c[0], 3.0);
  EXPECT_DOUBLE_EQ(c[1], 7.0);
}

TEST(Matmul, IdentityAndShapeErrors) {
  const Tensor eye({3, 3}, std::vector<double>{1, 0, 0, 0, 1, 0, 0, 0, 1});
  const Tensor b = random({3, 4}, 1);
  const Tensor c = ops::matmul(eye, b);
  for (std::size_t i = 0; i < b.size(); ++i) EXPECT_DOUBLE_EQ(c[i], b[i]);
  EXPECT_THROW(ops::matmul(b, b), ShapeError);
}

TEST(Conv2d, DeltaKernelIsIdentity) {
  const std::size_t C = 3;
  Tensor k({C, C, 3, 3}, 0.0);
  for (std::size_t c = 0; c < C; ++c) k.data()[((c * C + c) * 3 + 1) * 3 + 1] = 1.0;
  const Tensor x = random({2, C, 5, 6}, 2);
  const Tensor y = ops::conv2d(x, k);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_DOUBLE_EQ(y[i], x[i]);
}

TEST(Conv2d, OnesKernelCountsPaddedSupport) {
  const double v = 0.7;
  const Tensor x({1, 1, 4, 5}, v);
  const Tensor k({1, 1, 3, 3}, 1.0);
  const Tensor y = ops::conv2d(x, k);
  EXPECT_NEAR(y[0], 4 * v, 1e-15);             // corner
  EXPECT_NEAR(y[2], 6 * v, 1e-15);             // top edge
  EXPECT_NEAR(y[1 * 5 + 2], 9 * v, 1e-15);     // interior
  EXPECT_NEAR(y[3 * 5 + 4], 4 * v, 1e-15);     // opposite corner
}

TEST(Conv2d, MatchesDirectLoop) {
  const Tensor x = random({2, 3, 4, 5}, 3);
  const Tensor k = random({2, 3, 3, 3}, 4);
  const Tensor b = random({2}, 5);
  const Tensor y = ops::conv2d(x, k, b);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t o = 0; o < 2; ++o)
      for (std::size_t r = 0; r < 4; ++r)
        for (std::size_t c = 0; c < 5; ++c) {
          double acc = b[o];
          for (std::size_t i = 0; i < 3; ++i)
            for (int dr = -1; dr <= 1; ++dr)
              for (int dc = -1; dc <= 1; ++dc) {
                const int rr = static_cast<int>(r) + dr, cc = static_cast<int>(c) + dc;
                if (rr < 0 || rr >= 4 || cc < 0 || cc >= 5) continue;
                acc += k[((o * 3 + i) * 3 + static_cast<std::size_t>(dr + 1)) * 3 + static_cast<std::size_t>(dc + 1)] *
                       x[((n * 3 + i) * 4 + static_cast<std::size_t>(rr)) * 5 + static_cast<std::size_t>(cc)];
              }
          EXPECT_NEAR(y[((n * 2 + o) * 4 + r) * 5 + c], acc, 1e-13);
        }
}

TEST(Activations, Values) {
  EXPECT_DOUBLE_EQ(ops::silu_value(0.0), 0.0);
  EXPECT_NEAR(ops::silu_value(1.0), 1.0 / (1.0 + std::exp(-1.0)), 1e-15);
  EXPECT_NEAR(ops::silu_value(1.0), 0.7310585786300049, 1e-15);
  const Tensor x({2}, std::vector<double>{-2.5, 3.0});
  const Tensor r = ops::relu(x);
  EXPECT_DOUBLE_EQ(r[0], 0.0);
  EXPECT_DOUBLE_EQ(r[1], 3.0);
  // very negative input must not overflow
  EXPECT_TRUE(std::isfinite(ops::silu_value(-800.0)));
  EXPECT_TRUE(std::isfinite(ops::silu_derivative(-800.0)));
}

TEST(GlobalAvgPool, Examples) {
  const Tensor x({1, 2, 2, 2}, std::vector<double>{1, 2, 3, 4, 5, 5, 5, 5});
  const Tensor g = ops::global_avg_pool(x);
  ASSERT_EQ(g.shape(), (Shape{1, 2}));
  EXPECT_DOUBLE_EQ(g[0], 2.5);
  EXPECT_DOUBLE_EQ(g[1], 5.0);
}

TEST(Upsample, ConstantStaysConstant) {
  for (auto mode : {ops::Interpolation::bicubic, ops::Interpolation::bilinear})
    for (std::size_t s : {1u, 2u, 3u, 4u}) {
      const Tensor x({1, 2, 3, 5}, 0.37);
      const Tensor y = ops::upsample(x, s, mode);
      ASSERT_EQ(y.shape(), (Shape{1, 2, 3 * s, 5 * s}));
      for (double v : y.values()) EXPECT_NEAR(v, 0.37, 1e-15);
    }
}

TEST(Upsample, ScaleOneIsIdentityAndZeroIsError) {
  const Tensor x = random({2, 3, 4, 4}, 6);
  const Tensor y = ops::upsample(x, 1);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(y[i], x[i]);
  EXPECT_THROW(ops::upsample(x, 0), ConfigError);
}

TEST(Upsample, BicubicReproducesRampAwayFromBorders) {
  // Keys cubic convolution reproduces linear functions wherever no edge
  // replication is involved.
  const std::size_t w = 8, s = 4;
  Tensor x({1, 1, 1, w});
  for (std::size_t i = 0; i < w; ++i) x.data()[i] = 0.25 * static_cast<double>(i);
  const Tensor y = ops::upsample(x, s);
  for (std::size_t o = 2 * s; o < (w - 2) * s; ++o) {
    const double src = (static_cast<double>(o) + 0.5) / s - 0.5;
    EXPECT_NEAR(y[o], 0.25 * src, 1e-13) << o;
  }
}

TEST(ShapeOps, FoldUnfoldRoundTripAndConcat) {
  const Tensor x = random({2, 3, 4, 5}, 7);
  const Tensor rows = ops::fold_pixels(x);
  ASSERT_EQ(rows.shape(), (Shape{40, 3}));
  EXPECT_DOUBLE_EQ(rows[1 * 3 + 2], x[(0 * 3 + 2) * 20 + 1]);
  const Tensor back = ops::unfold_pixels(rows, 2, 4, 5);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(back[i], x[i]);

  const Tensor a = random({6, 4}, 8), b = random({6, 4}, 9);
  const Tensor c = ops::concat_features(a, b);
  ASSERT_EQ(c.shape(), (Shape{6, 8}));
  EXPECT_EQ(c[2 * 8 + 1], a[2 * 4 + 1]);
  EXPECT_EQ(c[2 * 8 + 5], b[2 * 4 + 1]);

  EXPECT_THROW(ops::reshape(a, {5, 5}), ShapeError);
  const Tensor r = ops::reshape(a, {24});
  EXPECT_EQ(r[17], a[17]);
}

TEST(Elementwise, ZeroScoreResidual) {
  const Tensor x = random({1, 3, 2, 2}, 10);
  const Tensor zero({1, 3}, 0.0);
  const Tensor y = ops::add(ops::channel_mul(x, zero), x);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(y[i], x[i]);
  EXPECT_THROW(ops::add(x, zero), ShapeError);
}

TEST(Reductions, L1Mean) {
  const Tensor a({4}, std::vector<double>{0, 1, 2, 3});
  const Tensor b = ops::add_scalar(a, 0.1);
  EXPECT_NEAR(ops::l1_mean(b, a).item(), 0.1, 1e-15);
  EXPECT_DOUBLE_EQ(ops::mean(a).item(), 1.5);
}

TEST(Upsample, BilinearAndBicubicAgreeOnRamp) {
  const std::size_t h = 6, w = 7, s = 2;
  Tensor x({1, 1, h, w});
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) x.data()[r * w + c] = 0.1 * static_cast<double>(r) - 0.05 * static_cast<double>(c);
  const Tensor a = ops::upsample(x, s, ops::Interpolation::bicubic);
  const Tensor b = ops::upsample(x, s, ops::Interpolation::bilinear);
  const std::size_t W = w * s;
  for (std::size_t r = 2 * s; r < (h - 2) * s; ++r)
    for (std::size_t c = 2 * s; c < (w - 2) * s; ++c) {
      EXPECT_NEAR(a[r * W + c], b[r * W + c], 1e-6);
      const double sr = (static_cast<double>(r) + 0.5) / s - 0.5, sc = (static_cast<double>(c) + 0.5) / s - 0.5;
      EXPECT_NEAR(a[r * W + c], 0.1 * sr - 0.05 * sc, 1e-6);
    }
}
