#include <gtest/gtest.h>

#include "hsrkan/gradcheck.hpp"

using namespace hsrkan;

namespace {
void expect_all_pass(const std::vector<gradcheck::Result>& rs) {
  ASSERT_FALSE(rs.empty());
  for (const auto& r : rs) {
    EXPECT_TRUE(r.pass) << r.name << " worst index " << r.worst_index << " analytic " << r.analytic << " numeric "
                        << r.numeric << " rel " << r.max_rel_error;
    EXPECT_GT(r.checked, 0u) << r.name;
  }
}
}  // namespace

TEST(Gradcheck, EveryPrimitive) {
  for (std::uint64_t seed : {0u, 1u, 2u}) expect_all_pass(gradcheck::op_suite(seed));
}

TEST(Gradcheck, KanLayer) {
  for (std::uint64_t seed : {0u, 1u, 2u}) expect_all_pass(gradcheck::layer_suite(seed));
}

TEST(Gradcheck, ToyModel) {
  for (std::uint64_t seed : {0u, 1u}) expect_all_pass(gradcheck::model_suite(seed));
}

TEST(Gradcheck, NoCabModel) {
  auto cfg = gradcheck::toy_config();
  cfg.use_cab = false;
  expect_all_pass(gradcheck::model_suite(3, {}, cfg));
}

TEST(Gradcheck, DetectsWrongGradient) {
  // A loss whose graph ignores part of its value: the analytic gradient of
  // the detached term is zero, the numeric one is not.
  Tensor x({3}, std::vector<double>{0.3, -0.2, 0.9});
  x.set_requires_grad(true);
  auto fn = [=] { return ops::add(ops::sum(ops::mul(x, x)), ops::sum(x.detached())); };
  const auto rs = gradcheck::check(fn, {{"x", x}});
  ASSERT_EQ(rs.size(), 1u);
  EXPECT_FALSE(rs[0].pass);
  EXPECT_NEAR(rs[0].numeric - rs[0].analytic, 1.0, 1e-6);
}
