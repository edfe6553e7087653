#include <gtest/gtest.h>

#include <random>

#include "hsrkan/model.hpp"

using namespace hsrkan;
using model::HsrKanModel;
using model::ModelConfig;

namespace {

ModelConfig toy() {
  ModelConfig c;
  c.hsi_bands = 7;
  c.msi_bands = 3;
  c.hidden = 8;
  c.blocks = 2;
  c.scale = 2;
  c.seed = 3;
  return c;
}

Tensor random(Shape s, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(s));
  for (double& v : t.mutable_values()) v = u(rng);
  return t;
}

void zero(Tensor t) {
  for (double& v : t.mutable_values()) v = 0.0;
}

}  // namespace

TEST(Model, FusionShapeContract) {
  ModelConfig c = toy();
  c.hsi_bands = 31;
  c.scale = 4;
  HsrKanModel net(c);
  const Tensor X = random({1, 3, 8, 8}, 1), Y = random({1, 31, 2, 2}, 2);
  EXPECT_EQ(net.kan_fusion(X, Y).shape(), (Shape{1, 8, 8, 8}));
  EXPECT_EQ(net.forward(X, Y).shape(), (Shape{1, 31, 8, 8}));
  EXPECT_THROW(net.forward(random({1, 3, 8, 8}, 1), random({1, 31, 3, 3}, 2)), ShapeError);
  EXPECT_THROW(net.forward(random({1, 4, 8, 8}, 1), Y), ShapeError);
}

TEST(Model, ZeroFusionGivesZeroFeatures) {
  HsrKanModel net(toy());
  for (auto* l : {&net.fusion_msi(), &net.fusion_hsi(), &net.fusion_align()}) {
    zero(l->base_weight());
    zero(l->spline_weight());
  }
  const Tensor o = net.kan_fusion(random({2, 3, 6, 6}, 3), random({2, 7, 3, 3}, 4));
  for (double v : o.values()) EXPECT_EQ(v, 0.0);
}

TEST(Model, ZeroScoreCabIsIdentity) {
  HsrKanModel net(toy());
  auto& b = net.block(0);
  for (auto* l : {&b.kan1, &b.kan2}) {
    zero(l->base_weight());
    zero(l->spline_weight());
  }
  const Tensor x = random({2, 8, 4, 5}, 5, -2.0, 2.0);
  const Tensor y = net.kan_cab(0, x);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(y[i], x[i]);
}

TEST(Model, UnitScoreCabDoubles) {
  HsrKanModel net(toy());
  auto& kan2 = net.block(1).kan2;
  zero(kan2.base_weight());
  zero(kan2.spline_weight());
  // Every output j gets a constant-one activation from input 0: by partition
  // of unity (inputs are clamped into the spline domain) the score is 1.
  for (std::size_t j = 0; j < 8; ++j)
    for (int m = 0; m < kan2.spline_config().basis_count(); ++m) kan2.spline_at(j, 0, static_cast<std::size_t>(m)) = 1.0;
  const Tensor x = random({1, 8, 3, 3}, 6, -1.0, 1.0);
  const Tensor y = net.kan_cab(1, x);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(y[i], 2.0 * x[i], 1e-12);
}

TEST(Model, ZeroHeadGivesUpsampledInput) {
  HsrKanModel net(toy());
  for (const auto& p : net.parameters())
    if (p.name.rfind("restructure.", 0) == 0) zero(p.tensor);
  const Tensor X = random({1, 3, 8, 8}, 7), Y = random({1, 7, 4, 4}, 8);
  const Tensor z = net.forward(X, Y);
  const Tensor up = ops::upsample(Y, 2);
  for (std::size_t i = 0; i < z.size(); ++i) EXPECT_EQ(z[i], up[i]);
}

TEST(Model, AllZeroModelGivesUpsampledInput) {
  for (bool cab : {true, false}) {
    ModelConfig c = toy();
    c.use_cab = cab;
    HsrKanModel net(c);
    net.zero_weights();
    const Tensor X = random({2, 3, 8, 8}, 9), Y = random({2, 7, 4, 4}, 10);
    const Tensor z = net.forward(X, Y, true);
    const Tensor up = ops::upsample(Y, 2);
    for (std::size_t i = 0; i < z.size(); ++i) EXPECT_EQ(z[i], up[i]);
  }
}

TEST(Model, BatchEntriesAreIndependent) {
  HsrKanModel net(toy());
  const Tensor X = random({2, 3, 6, 6}, 11), Y = random({2, 7, 3, 3}, 12);
  const Tensor both = net.forward(X, Y);
  const std::size_t xs = 3 * 36, ys = 7 * 9, zs = 7 * 36;
  for (std::size_t b = 0; b < 2; ++b) {
    Tensor Xb({1, 3, 6, 6}, std::vector<double>(X.values().begin() + b * xs, X.values().begin() + (b + 1) * xs));
    Tensor Yb({1, 7, 3, 3}, std::vector<double>(Y.values().begin() + b * ys, Y.values().begin() + (b + 1) * ys));
    const Tensor one = net.forward(Xb, Yb);
    for (std::size_t i = 0; i < zs; ++i) EXPECT_NEAR(one[i], both[b * zs + i], 1e-12);
  }
}

TEST(Model, SeedDeterminesInitialization) {
  HsrKanModel a(toy()), b(toy());
  ModelConfig other = toy();
  other.seed = 4;
  HsrKanModel c(other);
  const auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
  bool differs = false;
  for (std::size_t k = 0; k < pa.size(); ++k) {
    for (std::size_t i = 0; i < pa[k].tensor.size(); ++i) {
      EXPECT_EQ(pa[k].tensor[i], pb[k].tensor[i]);
      differs = differs || pa[k].tensor[i] != pc[k].tensor[i];
    }
  }
  EXPECT_TRUE(differs);
}

TEST(ParamCount, ToyHandSum) {
  // edges: 3*8 + 7*8 + 16*8 + 2*2*8*8 = 464, each 1 + 5 + 3 values
  // conv1 8*8*9 + 8, conv2 7*8*9 + 7
  const std::size_t expect = 464 * 9 + (576 + 8) + (504 + 7);
  const auto pc = model::param_count(toy());
  EXPECT_EQ(pc.kan_edges, 464u);
  EXPECT_EQ(pc.total, expect);
  EXPECT_EQ(HsrKanModel(toy()).parameter_count(), expect);
  ModelConfig plain = toy();
  plain.use_cab = false;
  EXPECT_EQ(HsrKanModel(plain).parameter_count(), expect);
}

TEST(ParamCount, FullConfiguration) {
  const auto pc = model::param_count(ModelConfig::full());
  EXPECT_EQ(pc.kan_edges, 664064u);
  EXPECT_EQ(pc.total, 664064u * 9 + 590080u + 71455u);
  EXPECT_EQ(pc.with_spline_scale, 7302175u);
}

TEST(ParamCount, AffineInGridAndOrder) {
  ModelConfig c = toy();
  const auto base = model::param_count(c);
  for (int G = 1; G <= 9; ++G) {
    c.spline.grid = G;
    const auto a = model::param_count(c);
    c.spline.grid = G + 2;
    EXPECT_EQ(model::param_count(c).total - a.total, 2 * base.kan_edges);
  }
  c = toy();
  for (int k = 0; k <= 7; ++k) {
    c.spline.order = k;
    const auto a = model::param_count(c);
    c.spline.order = k + 2;
    EXPECT_EQ(model::param_count(c).total - a.total, 2 * base.kan_edges);
  }
  EXPECT_EQ(base.per_unit_grid, base.per_unit_order);
}

TEST(ModelConfig, JsonRoundTripAndValidation) {
  ModelConfig c = toy();
  c.use_cab = false;
  c.upsample = ops::Interpolation::bilinear;
  c.spline.lo = -2.0;
  const nlohmann::json j = c;
  const ModelConfig back = j.get<ModelConfig>();
  EXPECT_EQ(back.hidden, c.hidden);
  EXPECT_EQ(back.use_cab, false);
  EXPECT_EQ(back.upsample, ops::Interpolation::bilinear);
  EXPECT_EQ(back.spline, c.spline);

  ModelConfig bad = toy();
  bad.scale = 3;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = toy();
  bad.hsi_bands = 3;
  EXPECT_THROW(HsrKanModel{bad}, ConfigError);
  EXPECT_THROW((nlohmann::json{{"upsample", "nearest"}}.get<ModelConfig>()), ConfigError);
}
