#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "hsrkan/ops.hpp"
#include "hsrkan/tensor.hpp"

using namespace hsrkan;

TEST(Tensor, ConstructionAndShape) {
  Tensor t({2, 3}, 1.5);
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.rank(), 2u);
  EXPECT_EQ(t.dim(1), 3u);
  EXPECT_DOUBLE_EQ(t[4], 1.5);
  EXPECT_THROW(Tensor({2, 0}), ShapeError);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  EXPECT_THROW(t.item(), ShapeError);
  EXPECT_EQ(to_string(t.shape()), "[2x3]");
}

TEST(Tensor, CloneIsDeepDetachedSharesNothing) {
  Tensor a({3}, std::vector<double>{1, 2, 3});
  a.set_requires_grad(true);
  Tensor b = a;
  EXPECT_TRUE(b.same_storage(a));
  Tensor c = a.clone();
  EXPECT_FALSE(c.same_storage(a));
  c.data()[0] = 9.0;
  EXPECT_DOUBLE_EQ(a[0], 1.0);
  EXPECT_FALSE(a.detached().requires_grad());
}

TEST(Autograd, SumGivesOnes) {
  Tensor x({4}, std::vector<double>{0.5, -1, 2, 7});
  x.set_requires_grad(true);
  Tape tape;
  TapeGuard guard(tape);
  tape.backward(ops::sum(x));
  for (double g : x.grad()) EXPECT_DOUBLE_EQ(g, 1.0);
}

TEST(Autograd, SumOfSquares) {
  Tensor x({3}, std::vector<double>{1, 2, 3});
  x.set_requires_grad(true);
  Tape tape;
  TapeGuard guard(tape);
  tape.backward(ops::sum(ops::mul(x, x)));
  EXPECT_DOUBLE_EQ(x.grad()[0], 2.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], 4.0);
  EXPECT_DOUBLE_EQ(x.grad()[2], 6.0);
}

TEST(Autograd, SharedSubexpressionAccumulates) {
  // y = x + x, used twice: d/dx sum(y * y) = 8x
  Tensor x({2}, std::vector<double>{1.0, -0.5});
  x.set_requires_grad(true);
  Tape tape;
  TapeGuard guard(tape);
  const Tensor y = ops::add(x, x);
  tape.backward(ops::sum(ops::mul(y, y)));
  EXPECT_DOUBLE_EQ(x.grad()[0], 8.0);
  EXPECT_DOUBLE_EQ(x.grad()[1], -4.0);
}

TEST(Autograd, ErrorsAreReported) {
  Tensor x({2}, 1.0);
  x.set_requires_grad(true);
  {
    Tape tape;
    TapeGuard guard(tape);
    EXPECT_THROW(tape.backward(ops::mul(x, x)), AutogradError);  // not scalar
  }
  {
    Tape tape;
    TapeGuard guard(tape);
    const Tensor loss = ops::sum(x);
    tape.backward(loss);
    EXPECT_TRUE(tape.consumed());
    EXPECT_THROW(tape.backward(loss), AutogradError);
    tape.reset();
    EXPECT_EQ(tape.size(), 0u);
  }
  {
    Tape tape;
    TapeGuard guard(tape);
    Tensor c({2}, 1.0);  // no requires_grad anywhere
    EXPECT_THROW(tape.backward(ops::sum(c)), AutogradError);
  }
}

TEST(Autograd, NoTapeNoRecording) {
  Tensor x({2}, 1.0);
  x.set_requires_grad(true);
  const Tensor y = ops::sum(x);
  EXPECT_FALSE(y.requires_grad());
  Tape tape;
  TapeGuard guard(tape);
  {
    NoGradGuard off;
    (void)ops::sum(x);
  }
  EXPECT_EQ(tape.size(), 0u);
  (void)ops::sum(x);
  EXPECT_EQ(tape.size(), 1u);
}

TEST(Autograd, FirstNonFiniteNamesTheOp) {
  Tensor x({2}, std::vector<double>{1.0, std::numeric_limits<double>::infinity()});
  x.set_requires_grad(true);
  Tape tape;
  TapeGuard guard(tape);
  const Tensor y = ops::scale(x, 0.0);  // inf * 0 = nan
  (void)ops::sum(y);
  const auto where = tape.first_non_finite();
  ASSERT_TRUE(where.has_value());
  EXPECT_NE(where->find("scale"), std::string::npos);
}
