#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "hsrkan/kan_layer.hpp"
#include "hsrkan/loss.hpp"
#include "hsrkan/model.hpp"
#include "hsrkan/ops.hpp"

namespace hsrkan::gradcheck {

struct Options {
  double eps = 1e-6;
  double tolerance = 1e-4;
  // Denominator floor: gradients smaller than this are compared absolutely
  // (finite differences cannot resolve them relatively).
  double floor = 1e-4;
  std::size_t samples = 20;  // indices checked per tensor; all when smaller
  std::uint64_t seed = 0;
};

struct Result {
  std::string name;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  bool pass = true;
};

inline double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

struct Target {
  std::string name;
  Tensor tensor;
};

/// Central finite differences against one backward pass. loss_fn must build
/// its graph from the current tensor values on every call.
inline std::vector<Result> check(const std::function<Tensor()>& loss_fn, const std::vector<Target>& targets,
                                 const Options& opt = {}) {
  for (const auto& t : targets) t.tensor.zero_grad();
  {
    Tape tape;
    TapeGuard guard(tape);
    tape.backward(loss_fn());
  }
  std::mt19937_64 rng(opt.seed);
  std::vector<Result> results;
  for (const auto& target : targets) {
    Tensor t = target.tensor;
    std::vector<double> analytic(t.size(), 0.0);
    if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), analytic.begin());
    std::vector<std::size_t> idx(t.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    if (idx.size() > opt.samples) {
      for (std::size_t i = 0; i < opt.samples; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng() % (idx.size() - i));
        std::swap(idx[i], idx[j]);
      }
      idx.resize(opt.samples);
    }
    Result r;
    r.name = target.name;
    NoGradGuard no_grad;
    for (std::size_t i : idx) {
      double* v = t.data() + i;
      const double saved = *v;
      *v = saved + opt.eps;
      const double up = loss_fn().item();
      *v = saved - opt.eps;
      const double down = loss_fn().item();
      *v = saved;
      const double numeric = (up - down) / (2.0 * opt.eps);
      const double err = relative_error(analytic[i], numeric, opt.floor);
      ++r.checked;
      if (err >= r.max_rel_error) {
        r.max_rel_error = err;
        r.worst_index = i;
        r.analytic = analytic[i];
        r.numeric = numeric;
      }
    }
    r.pass = r.max_rel_error < opt.tolerance;
    results.push_back(r);
  }
  for (const auto& t : targets) t.tensor.zero_grad();
  return results;
}

namespace detail {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (double& v : t.mutable_values()) v = u(rng);
  t.set_requires_grad(true);
  return t;
}

// Values bounded away from zero (for kinks at the origin).
inline Tensor away_from_zero(Shape shape, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.1, 1.0);
  std::bernoulli_distribution sign(0.5);
  Tensor t(std::move(shape));
  for (double& v : t.mutable_values()) v = sign(rng) ? u(rng) : -u(rng);
  t.set_requires_grad(true);
  return t;
}

// sum(r * out) with a fixed random r.
inline Tensor project(const Tensor& out, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Tensor r(out.shape());
  for (double& v : r.mutable_values()) v = g(rng);
  return ops::sum(ops::mul(out, r));
}

inline void prefix(std::vector<Result>& rs, const std::string& p) {
  for (auto& r : rs) r.name = p + "/" + r.name;
}

}  // namespace detail

/// Every autograd primitive on small random instances.
inline std::vector<Result> op_suite(std::uint64_t seed = 0, const Options& opt = {}) {
  std::mt19937_64 rng(seed);
  std::vector<Result> all;
  auto run = [&](const std::string& name, const std::function<Tensor()>& fn, std::vector<Target> targets) {
    Options o = opt;
    o.seed = rng();
    auto rs = check(fn, targets, o);
    detail::prefix(rs, name);
    all.insert(all.end(), rs.begin(), rs.end());
  };
  using detail::project;
  using detail::random_tensor;
  const std::uint64_t ps = rng();

  {
    auto a = random_tensor({4, 5}, rng), b = random_tensor({5, 3}, rng);
    run("matmul", [=] { return project(ops::matmul(a, b), ps); }, {{"a", a}, {"b", b}});
  }
  {
    auto x = random_tensor({1, 2, 5, 5}, rng), k = random_tensor({3, 2, 3, 3}, rng), b = random_tensor({3}, rng);
    run("conv2d", [=] { return project(ops::conv2d(x, k, b), ps); }, {{"x", x}, {"kernel", k}, {"bias", b}});
  }
  {
    auto x = random_tensor({3, 4}, rng, -3.0, 3.0);
    run("silu", [=] { return project(ops::silu(x), ps); }, {{"x", x}});
  }
  {
    auto x = detail::away_from_zero({3, 4}, rng);
    run("relu", [=] { return project(ops::relu(x), ps); }, {{"x", x}});
  }
  {
    auto x = random_tensor({2, 3, 4, 5}, rng);
    run("global_avg_pool", [=] { return project(ops::global_avg_pool(x), ps); }, {{"x", x}});
  }
  {
    auto x = random_tensor({1, 2, 3, 4}, rng);
    run("upsample_bicubic", [=] { return project(ops::upsample(x, 2, ops::Interpolation::bicubic), ps); }, {{"x", x}});
    run("upsample_bilinear", [=] { return project(ops::upsample(x, 4, ops::Interpolation::bilinear), ps); }, {{"x", x}});
  }
  {
    auto a = random_tensor({4, 3}, rng), b = random_tensor({4, 2}, rng);
    run("concat_features", [=] { return project(ops::concat_features(a, b), ps); }, {{"a", a}, {"b", b}});
  }
  {
    auto x = random_tensor({2, 3, 4}, rng);
    run("reshape", [=] { return project(ops::reshape(x, {6, 4}), ps); }, {{"x", x}});
  }
  {
    auto x = random_tensor({2, 3, 2, 2}, rng);
    run("fold_pixels", [=] { return project(ops::fold_pixels(x), ps); }, {{"x", x}});
    auto r = random_tensor({8, 3}, rng);
    run("unfold_pixels", [=] { return project(ops::unfold_pixels(r, 2, 2, 2), ps); }, {{"rows", r}});
  }
  {
    auto a = random_tensor({5}, rng), b = random_tensor({5}, rng);
    run("add", [=] { return project(ops::add(a, b), ps); }, {{"a", a}, {"b", b}});
    run("sub", [=] { return project(ops::sub(a, b), ps); }, {{"a", a}, {"b", b}});
    run("mul", [=] { return project(ops::mul(a, b), ps); }, {{"a", a}, {"b", b}});
    run("scale", [=] { return project(ops::scale(a, -2.5), ps); }, {{"a", a}});
    run("add_scalar", [=] { return project(ops::add_scalar(a, 0.75), ps); }, {{"a", a}});
    run("sum", [=] { return ops::scale(ops::sum(a), 1.5); }, {{"a", a}});
    run("mean", [=] { return ops::scale(ops::mean(a), 3.0); }, {{"a", a}});
  }
  {
    auto a = random_tensor({3, 4}, rng);
    auto b = a.detached();
    auto offs = detail::away_from_zero({3, 4}, rng);
    for (std::size_t i = 0; i < b.size(); ++i) b.data()[i] += offs[i];
    b.set_requires_grad(true);
    run("l1_mean", [=] { return ops::scale(ops::l1_mean(a, b), 10.0); }, {{"a", a}, {"b", b}});
  }
  {
    auto x = random_tensor({2, 3, 2, 2}, rng), w = random_tensor({2, 3}, rng);
    run("channel_mul", [=] { return project(ops::channel_mul(x, w), ps); }, {{"x", x}, {"weight", w}});
  }
  {
    const bspline::KnotVector knots(bspline::SplineConfig{});
    auto x = random_tensor({4, 3}, rng, -0.95, 0.95);
    auto base = random_tensor({3, 2}, rng), spline = random_tensor({3, 8, 2}, rng);
    run("kan_linear_dense",
        [=] { return project(kan::kan_linear(x, base, spline, knots, false, kan::KanRoute::dense).output, ps); },
        {{"x", x}, {"base", base}, {"spline", spline}});
    run("kan_linear_edgewise",
        [=] { return project(kan::kan_linear(x, base, spline, knots, false, kan::KanRoute::edgewise).output, ps); },
        {{"x", x}, {"base", base}, {"spline", spline}});
    run("kan_linear_stats",
        [=] {
          auto r = kan::kan_linear(x, base, spline, knots, true);
          return ops::add(project(r.output, ps), project(*r.edge_l1, ps + 1));
        },
        {{"x", x}, {"base", base}, {"spline", spline}});
  }
  {
    auto a = random_tensor({3, 4}, rng, 0.1, 2.0);
    run("edge_entropy", [=] { return kan::edge_entropy(a); }, {{"edge_l1", a}});
  }
  return all;
}

/// A 3 -> 2 KAN layer on a batch of 2 with both sparsity terms in the loss.
inline std::vector<Result> layer_suite(std::uint64_t seed = 0, const Options& opt = {}) {
  std::mt19937_64 rng(seed);
  auto layer = std::make_shared<kan::KanLayer>(3, 2, bspline::SplineConfig{}, rng);
  auto x = detail::random_tensor({2, 3}, rng, -0.95, 0.95);
  const std::uint64_t ps = rng();
  auto fn = [=] {
    const Tensor y = layer->forward(x, true);
    return ops::add(detail::project(y, ps), ops::add(kan::layer_l1(*layer), kan::layer_entropy(*layer)));
  };
  Options o = opt;
  o.seed = rng();
  auto rs = check(fn, {{"x", x}, {"base_weight", layer->base_weight()}, {"spline_weight", layer->spline_weight()}}, o);
  detail::prefix(rs, "kan_layer");
  return rs;
}

inline model::ModelConfig toy_config() {
  model::ModelConfig cfg;
  cfg.hsi_bands = 7;
  cfg.msi_bands = 3;
  cfg.hidden = 8;
  cfg.blocks = 2;
  cfg.scale = 2;
  return cfg;
}

/// Whole model on the toy configuration: projection of the output plus the
/// full training objective (reconstruction and both sparsity terms).
inline std::vector<Result> model_suite(std::uint64_t seed = 0, const Options& opt = {},
                                       model::ModelConfig cfg = toy_config(), std::size_t size = 8) {
  cfg.seed = seed;
  auto net = std::make_shared<model::HsrKanModel>(cfg);
  std::mt19937_64 rng(seed ^ 0x5EEDULL);
  auto X = detail::random_tensor({1, cfg.msi_bands, size, size}, rng, 0.0, 1.0);
  auto Y = detail::random_tensor({1, cfg.hsi_bands, size / cfg.scale, size / cfg.scale}, rng, 0.0, 1.0);
  Tensor Z = detail::random_tensor({1, cfg.hsi_bands, size, size}, rng, 0.0, 1.0);
  Z.set_requires_grad(false);
  const std::uint64_t ps = rng();
  auto fn = [=] {
    const Tensor pred = net->forward(X, Y, true);
    const auto terms = loss::total_loss(pred, Z, *net, loss::LossConfig{}, true);
    return ops::add(detail::project(pred, ps), terms.total);
  };
  std::vector<Target> targets{{"X", X}, {"Y", Y}};
  for (const auto& p : net->parameters()) targets.push_back({p.name, p.tensor});
  Options o = opt;
  o.seed = rng();
  auto rs = check(fn, targets, o);
  detail::prefix(rs, "model");
  return rs;
}

}  // namespace hsrkan::gradcheck
