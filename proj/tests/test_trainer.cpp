#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "hsrkan/trainer.hpp"

using namespace hsrkan;
using namespace hsrkan::train;

namespace {

model::ModelConfig tiny_model() {
  model::ModelConfig c;
  c.hsi_bands = 6;
  c.hidden = 4;
  c.blocks = 1;
  c.scale = 2;
  c.seed = 21;
  return c;
}

data::Split tiny_data(std::size_t n = 5) {
  data::DatasetConfig dc;
  dc.bands = 6;
  dc.size = 8;
  dc.scale = 2;
  return data::split_dataset(data::make_dataset(3, n, dc), 1);
}

TrainConfig tiny_train() {
  TrainConfig t;
  t.batch_size = 2;
  t.epochs = 3;
  t.eval_every = 1;
  t.seed = 9;
  t.loss.lambda = 1e-3;
  return t;
}

std::string run_log(Trainer& t) {
  std::ostringstream os;
  os << csv_header() << '\n';
  t.run([&](const StepRecord& r) { os << csv_row(r) << '\n'; });
  return os.str();
}

std::string bytes(const Checkpoint& ck) {
  std::ostringstream os;
  write_checkpoint(os, ck);
  return os.str();
}

}  // namespace

TEST(LearningRate, StepSchedule) {
  const TrainConfig t;
  EXPECT_DOUBLE_EQ(lr_at(0, t), 4e-4);
  EXPECT_DOUBLE_EQ(lr_at(99, t), 4e-4);
  EXPECT_NEAR(lr_at(100, t), 4e-5, 1e-18);
  EXPECT_NEAR(lr_at(250, t), 4e-6, 1e-18);
}

TEST(Adam, FirstStepIsSignedLearningRate) {
  Tensor w({3}, std::vector<double>{1.0, 2.0, 3.0});
  w.set_requires_grad(true);
  auto g = w.grad_buffer();
  g[0] = 0.5;
  g[1] = -2.0;
  g[2] = 0.0;
  AdamState st;
  adam_step({{"w", w}}, st, 0.01);
  EXPECT_NEAR(w[0], 1.0 - 0.01, 1e-9);
  EXPECT_NEAR(w[1], 2.0 + 0.01, 1e-9);
  EXPECT_EQ(w[2], 3.0);
  EXPECT_EQ(st.t, 1u);
}

TEST(Adam, ZeroGradientsDecayMoments) {
  Tensor w({2}, std::vector<double>{1.0, -1.0});
  w.set_requires_grad(true);
  AdamState st;
  w.grad_buffer()[0] = 1.0;
  adam_step({{"w", w}}, st, 0.1);
  const double m0 = st.m[0][0], v0 = st.v[0][0];
  const double after_first = w[0];
  w.zero_grad();
  adam_step({{"w", w}}, st, 0.0);
  EXPECT_EQ(w[0], after_first);
  EXPECT_NEAR(st.m[0][0], 0.9 * m0, 1e-15);
  EXPECT_NEAR(st.v[0][0], 0.999 * v0, 1e-15);
}

TEST(TrainConfig, JsonRoundTrip) {
  TrainConfig t = tiny_train();
  t.sparse_loss_enabled = false;
  t.loss.mu2 = 0.25;
  const nlohmann::json j = t;
  const TrainConfig back = j.get<TrainConfig>();
  EXPECT_EQ(back.batch_size, 2u);
  EXPECT_FALSE(back.sparse_loss_enabled);
  EXPECT_EQ(back.loss.mu2, 0.25);
  EXPECT_EQ(nlohmann::json(back), j);
  TrainConfig bad;
  bad.batch_size = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Trainer, LogIsDeterministicAndFinite) {
  const auto split = tiny_data();
  Trainer a(tiny_model(), tiny_train(), split), b(tiny_model(), tiny_train(), split);
  const std::string la = run_log(a), lb = run_log(b);
  EXPECT_EQ(la, lb);
  EXPECT_EQ(bytes(a.checkpoint()), bytes(b.checkpoint()));
  EXPECT_EQ(a.counters().step, 6u);  // 4 training patches, batch 2, 3 epochs
  std::istringstream is(la);
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "step,epoch,lr,l1,sparse_l1,sparse_entropy,total,val_psnr");
  std::size_t rows = 0;
  while (std::getline(is, line)) {
    ++rows;
    EXPECT_EQ(line.find("nan"), std::string::npos);
  }
  EXPECT_EQ(rows, 6u);
}

TEST(Trainer, DisabledSparseLossLogsZeros) {
  const auto split = tiny_data();
  TrainConfig t = tiny_train();
  t.sparse_loss_enabled = false;
  Trainer tr(tiny_model(), t, split);
  tr.run([](const StepRecord& r) {
    EXPECT_EQ(r.sparse_l1, 0.0);
    EXPECT_EQ(r.sparse_entropy, 0.0);
    EXPECT_EQ(r.total, r.l1);
  });
}

TEST(Trainer, ResumeContinuesBitwise) {
  const auto split = tiny_data();
  TrainConfig full = tiny_train();
  Trainer reference(tiny_model(), full, split);
  std::vector<StepRecord> ref;
  reference.run([&](const StepRecord& r) { ref.push_back(r); });

  // Stop mid-epoch, serialise, reload and finish.
  TrainConfig capped = full;
  capped.max_steps = 3;
  Trainer first(tiny_model(), capped, split);
  first.run();
  std::stringstream ss;
  write_checkpoint(ss, first.checkpoint());
  Checkpoint ck = read_checkpoint(ss);
  EXPECT_EQ(ck.counters.step, 3u);
  ck.train.max_steps = 0;
  Trainer second(ck, split);
  std::vector<StepRecord> rest;
  second.run([&](const StepRecord& r) { rest.push_back(r); });
  ASSERT_EQ(rest.size(), 3u);
  for (std::size_t i = 0; i < rest.size(); ++i) {
    EXPECT_EQ(rest[i].step, ref[3 + i].step);
    EXPECT_EQ(rest[i].total, ref[3 + i].total);
  }
  Checkpoint a = reference.checkpoint(), b = second.checkpoint();
  b.train.max_steps = a.train.max_steps;
  EXPECT_EQ(bytes(a), bytes(b));
}

TEST(Checkpoint, RoundTripAndCorruption) {
  const auto split = tiny_data();
  Trainer t(tiny_model(), tiny_train(), split);
  t.step({0, 1});
  const Checkpoint ck = t.checkpoint();
  const std::string raw = bytes(ck);
  EXPECT_EQ(raw.substr(0, 8), "HSRKAN01");
  std::stringstream ss(raw);
  const Checkpoint back = read_checkpoint(ss);
  EXPECT_EQ(bytes(back), raw);

  model::HsrKanModel net(tiny_model());
  load_parameters(net, back);
  const auto p = net.parameters(), q = t.model().parameters();
  for (std::size_t k = 0; k < p.size(); ++k)
    for (std::size_t i = 0; i < p[k].tensor.size(); ++i) ASSERT_EQ(p[k].tensor[i], q[k].tensor[i]);

  std::stringstream cut(raw.substr(0, raw.size() - 16));
  EXPECT_THROW(read_checkpoint(cut), FormatError);
  std::string wrong = raw;
  wrong[3] = 'X';
  std::stringstream bad(wrong);
  EXPECT_THROW(read_checkpoint(bad), FormatError);
}

TEST(Trainer, NonFiniteLossAbortsWithDiagnostic) {
  auto split = tiny_data();
  split.train[0].z.values[5] = std::numeric_limits<double>::quiet_NaN();
  Trainer t(tiny_model(), tiny_train(), split);
  try {
    t.step({0});
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("first non-finite tensor"), std::string::npos);
  }
}

TEST(Trainer, RejectsMismatchedData) {
  const auto split = tiny_data();
  model::ModelConfig m = tiny_model();
  m.hsi_bands = 7;
  EXPECT_THROW(Trainer(m, tiny_train(), split), ConfigError);
}
