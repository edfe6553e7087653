#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstddef>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "hsrkan/bspline.hpp"
#include "hsrkan/ops.hpp"
#include "hsrkan/tensor.hpp"

namespace hsrkan::kan {

struct NamedParameter {
  std::string name;
  Tensor tensor;
};

enum class KanRoute {
  automatic,  // dense when no statistics are requested, edgewise otherwise
  dense,      // two matrix products; cannot produce per-edge statistics
  edgewise,   // explicit per-edge activations
};

struct KanForward {
  Tensor output;                 // N x n_out
  std::optional<Tensor> edge_l1;  // n_in x n_out, mean |phi_ij| over the N rows
};

namespace detail {

// Per (row, input) quantities shared by forward and backward.
struct InputBasis {
  std::size_t rows = 0, n_in = 0, width = 0;  // width = k + 1
  std::vector<double> silu, dsilu;
  std::vector<int> first;
  std::vector<double> value, derivative;  // rows * n_in * width
};

inline std::shared_ptr<InputBasis> evaluate_inputs(const Tensor& x, const bspline::KnotVector& knots) {
  auto ib = std::make_shared<InputBasis>();
  ib->rows = x.dim(0);
  ib->n_in = x.dim(1);
  ib->width = static_cast<std::size_t>(knots.config().order + 1);
  const std::size_t n = ib->rows * ib->n_in;
  ib->silu.resize(n);
  ib->dsilu.resize(n);
  ib->first.resize(n);
  ib->value.resize(n * ib->width);
  ib->derivative.resize(n * ib->width);
  for (std::size_t idx = 0; idx < n; ++idx) {
    const double v = x[idx];
    ib->silu[idx] = ops::silu_value(v);
    ib->dsilu[idx] = ops::silu_derivative(v);
    const auto a = bspline::active_basis(v, knots);
    ib->first[idx] = a.first;
    for (std::size_t t = 0; t < ib->width; ++t) {
      ib->value[idx * ib->width + t] = a.values[t];
      ib->derivative[idx * ib->width + t] = a.derivatives[t];
    }
  }
  return ib;
}

inline double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace detail

/// Fused KAN linear map:
///   out[b, j] = sum_i base[i, j] * SiLU(x[b, i]) + sum_m spline[i, m, j] * B_m(clamp(x[b, i]))
///
/// base is n_in x n_out and spline is n_in x (G+k) x n_out, so that the
/// per-input coefficient rows are contiguous over outputs. With
/// collect_stats the second output holds mean |phi_ij| over the batch rows;
/// it is differentiable, so regularisers built on it reach the weights.
inline KanForward kan_linear(const Tensor& x, const Tensor& base, const Tensor& spline, const bspline::KnotVector& knots,
                             bool collect_stats, KanRoute route = KanRoute::automatic) {
  ops::detail::require_rank(x, 2, "kan_linear");
  ops::detail::require_rank(base, 2, "kan_linear");
  ops::detail::require_rank(spline, 3, "kan_linear");
  const std::size_t N = x.dim(0), n_in = base.dim(0), n_out = base.dim(1);
  const auto nb = static_cast<std::size_t>(knots.config().basis_count());
  if (x.dim(1) != n_in)
    throw ShapeError("kan_linear: input has " + std::to_string(x.dim(1)) + " features, layer expects " +
                     std::to_string(n_in));
  if (spline.dim(0) != n_in || spline.dim(1) != nb || spline.dim(2) != n_out)
    throw ShapeError("kan_linear: spline weight " + to_string(spline.shape()) + " does not match " +
                     to_string(Shape{n_in, nb, n_out}));
  if (route == KanRoute::automatic) route = collect_stats ? KanRoute::edgewise : KanRoute::dense;
  if (route == KanRoute::dense && collect_stats)
    throw ConfigError("kan_linear: the dense route cannot collect per-edge statistics");

  const auto ib = detail::evaluate_inputs(x, knots);
  const std::size_t width = ib->width;
  Tensor y(Shape{N, n_out});
  KanForward result{y, std::nullopt};

  if (route == KanRoute::dense) {
    // S = SiLU(x), Bf = full basis matrix; y = S base + Bf spline
    auto dense = std::make_shared<ops::RowMatrix>(ops::RowMatrix::Zero(static_cast<Eigen::Index>(N),
                                                                       static_cast<Eigen::Index>(n_in * nb)));
    ops::RowMatrix silu_m(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(n_in));
    for (std::size_t b = 0; b < N; ++b)
      for (std::size_t i = 0; i < n_in; ++i) {
        const std::size_t idx = b * n_in + i;
        silu_m(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(i)) = ib->silu[idx];
        for (std::size_t t = 0; t < width; ++t)
          (*dense)(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(i * nb + static_cast<std::size_t>(ib->first[idx]) + t)) =
              ib->value[idx * width + t];
      }
    auto ym = ops::detail::as_matrix(y.data(), N, n_out);
    ym.noalias() = silu_m * ops::detail::as_matrix(base.data(), n_in, n_out);
    ym.noalias() += (*dense) * ops::detail::as_matrix(spline.data(), n_in * nb, n_out);

    if (hsrkan::detail::wants_grad({&x, &base, &spline})) {
      auto silu_ptr = std::make_shared<ops::RowMatrix>(std::move(silu_m));
      hsrkan::detail::record("kan_linear[dense]", {x, base, spline}, {y},
                             [x, base, spline, y, ib, dense, silu_ptr, N, n_in, n_out, nb, width]() {
                               auto gy = ops::detail::as_matrix(y.grad().data(), N, n_out);
                               if (base.requires_grad())
                                 ops::detail::as_matrix(base.grad_buffer().data(), n_in, n_out).noalias() += silu_ptr->transpose() * gy;
                               if (spline.requires_grad())
                                 ops::detail::as_matrix(spline.grad_buffer().data(), n_in * nb, n_out).noalias() += dense->transpose() * gy;
                               if (x.requires_grad()) {
                                 const ops::RowMatrix g_silu = gy * ops::detail::as_matrix(base.data(), n_in, n_out).transpose();
                                 const ops::RowMatrix g_basis = gy * ops::detail::as_matrix(spline.data(), n_in * nb, n_out).transpose();
                                 auto gx = x.grad_buffer();
                                 for (std::size_t b = 0; b < N; ++b)
                                   for (std::size_t i = 0; i < n_in; ++i) {
                                     const std::size_t idx = b * n_in + i;
                                     double acc = g_silu(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(i)) * ib->dsilu[idx];
                                     for (std::size_t t = 0; t < width; ++t)
                                       acc += ib->derivative[idx * width + t] *
                                              g_basis(static_cast<Eigen::Index>(b),
                                                      static_cast<Eigen::Index>(i * nb + static_cast<std::size_t>(ib->first[idx]) + t));
                                     gx[idx] += acc;
                                   }
                               }
                             });
    }
    return result;
  }

  // Edgewise route.
  std::optional<Tensor> stats;
  if (collect_stats) stats = Tensor(Shape{n_in, n_out});
  {
    std::vector<double> phi(n_out);
    double* yv = y.data();
    double* av = stats ? stats->data() : nullptr;
    for (std::size_t b = 0; b < N; ++b)
      for (std::size_t i = 0; i < n_in; ++i) {
        const std::size_t idx = b * n_in + i;
        const double s = ib->silu[idx];
        const double* w = base.data() + i * n_out;
        for (std::size_t j = 0; j < n_out; ++j) phi[j] = w[j] * s;
        for (std::size_t t = 0; t < width; ++t) {
          const double bt = ib->value[idx * width + t];
          const double* c = spline.data() + (i * nb + static_cast<std::size_t>(ib->first[idx]) + t) * n_out;
          for (std::size_t j = 0; j < n_out; ++j) phi[j] += bt * c[j];
        }
        double* yb = yv + b * n_out;
        for (std::size_t j = 0; j < n_out; ++j) yb[j] += phi[j];
        if (av != nullptr) {
          double* ai = av + i * n_out;
          for (std::size_t j = 0; j < n_out; ++j) ai[j] += std::abs(phi[j]);
        }
      }
    if (av != nullptr) {
      const double inv = 1.0 / static_cast<double>(N);
      for (std::size_t e = 0; e < n_in * n_out; ++e) av[e] *= inv;
    }
  }
  result.edge_l1 = stats;

  if (hsrkan::detail::wants_grad({&x, &base, &spline})) {
    std::vector<Tensor> outputs{y};
    if (stats) outputs.push_back(*stats);
    const Tensor stats_t = stats ? *stats : Tensor();
    const bool has_stats = stats.has_value();
    hsrkan::detail::record(
        "kan_linear[edgewise]", {x, base, spline}, std::move(outputs),
        [x, base, spline, y, stats_t, has_stats, ib, N, n_in, n_out, nb, width]() {
          const double* gy = y.has_grad() ? y.grad().data() : nullptr;
          const double* ga = (has_stats && stats_t.has_grad()) ? stats_t.grad().data() : nullptr;
          const double inv_n = 1.0 / static_cast<double>(N);
          double* gbase = base.requires_grad() ? base.grad_buffer().data() : nullptr;
          double* gspline = spline.requires_grad() ? spline.grad_buffer().data() : nullptr;
          double* gx = x.requires_grad() ? x.grad_buffer().data() : nullptr;
          std::vector<double> phi(n_out), g(n_out);
          for (std::size_t b = 0; b < N; ++b)
            for (std::size_t i = 0; i < n_in; ++i) {
              const std::size_t idx = b * n_in + i;
              const double s = ib->silu[idx];
              const double* w = base.data() + i * n_out;
              const std::size_t m0 = static_cast<std::size_t>(ib->first[idx]);
              for (std::size_t j = 0; j < n_out; ++j) g[j] = gy != nullptr ? gy[b * n_out + j] : 0.0;
              if (ga != nullptr) {
                for (std::size_t j = 0; j < n_out; ++j) phi[j] = w[j] * s;
                for (std::size_t t = 0; t < width; ++t) {
                  const double bt = ib->value[idx * width + t];
                  const double* c = spline.data() + (i * nb + m0 + t) * n_out;
                  for (std::size_t j = 0; j < n_out; ++j) phi[j] += bt * c[j];
                }
                const double* gai = ga + i * n_out;
                for (std::size_t j = 0; j < n_out; ++j) g[j] += detail::sign(phi[j]) * gai[j] * inv_n;
              }
              if (gbase != nullptr) {
                double* gb = gbase + i * n_out;
                for (std::size_t j = 0; j < n_out; ++j) gb[j] += g[j] * s;
              }
              if (gspline != nullptr)
                for (std::size_t t = 0; t < width; ++t) {
                  const double bt = ib->value[idx * width + t];
                  double* gc = gspline + (i * nb + m0 + t) * n_out;
                  for (std::size_t j = 0; j < n_out; ++j) gc[j] += g[j] * bt;
                }
              if (gx != nullptr) {
                double gw = 0.0;
                for (std::size_t j = 0; j < n_out; ++j) gw += g[j] * w[j];
                double acc = gw * ib->dsilu[idx];
                for (std::size_t t = 0; t < width; ++t) {
                  const double dt = ib->derivative[idx * width + t];
                  if (dt == 0.0) continue;
                  const double* c = spline.data() + (i * nb + m0 + t) * n_out;
                  double gc = 0.0;
                  for (std::size_t j = 0; j < n_out; ++j) gc += g[j] * c[j];
                  acc += dt * gc;
                }
                gx[idx] += acc;
              }
            }
        });
  }
  return result;
}

/// Shannon entropy (natural log) of the edge-norm distribution
/// p_ij = A_ij / sum(A). Zero when sum(A) == 0; zero entries contribute
/// 0 log 0 := 0 and receive no gradient.
inline Tensor edge_entropy(const Tensor& edge_l1) {
  double total = 0.0;
  for (double a : edge_l1.values()) total += a;
  double entropy = 0.0;
  if (total > 0.0)
    for (double a : edge_l1.values())
      if (a > 0.0) {
        const double p = a / total;
        entropy -= p * std::log(p);
      }
  Tensor out = Tensor::scalar(entropy);
  if (hsrkan::detail::wants_grad({&edge_l1})) {
    hsrkan::detail::record("edge_entropy", {edge_l1}, {out}, [edge_l1, out, total, entropy]() {
      if (total <= 0.0) return;
      const double g = out.grad()[0];
      auto ga = edge_l1.grad_buffer();
      for (std::size_t e = 0; e < ga.size(); ++e) {
        const double a = edge_l1[e];
        if (a > 0.0) ga[e] += g * (-std::log(a / total) - entropy) / total;
      }
    });
  }
  return out;
}

/// One KAN layer: n_in x n_out edges, each phi(x) = w1 SiLU(x) + sum_m c_m B_m(x).
class KanLayer {
 public:
  KanLayer() = default;

  KanLayer(std::size_t n_in, std::size_t n_out, const bspline::SplineConfig& cfg, std::mt19937_64& rng)
      : n_in_(n_in), n_out_(n_out), knots_(std::make_shared<bspline::KnotVector>(cfg)) {
    if (n_in == 0 || n_out == 0) throw ConfigError("KAN layer extents must be positive");
    const auto nb = static_cast<std::size_t>(cfg.basis_count());
    base_ = Tensor(Shape{n_in, n_out});
    spline_ = Tensor(Shape{n_in, nb, n_out});
    const double bound = 1.0 / std::sqrt(static_cast<double>(n_in));
    std::uniform_real_distribution<double> uni(-bound, bound);
    std::normal_distribution<double> gauss(0.0, 0.1 / std::sqrt(static_cast<double>(n_in)));
    for (double& v : base_.mutable_values()) v = uni(rng);
    for (double& v : spline_.mutable_values()) v = gauss(rng);
    base_.set_requires_grad(true);
    spline_.set_requires_grad(true);
  }

  std::size_t n_in() const { return n_in_; }
  std::size_t n_out() const { return n_out_; }
  std::size_t edge_count() const { return n_in_ * n_out_; }
  const bspline::KnotVector& knots() const { return *knots_; }
  const bspline::SplineConfig& spline_config() const { return knots_->config(); }

  Tensor& base_weight() { return base_; }
  const Tensor& base_weight() const { return base_; }
  Tensor& spline_weight() { return spline_; }
  const Tensor& spline_weight() const { return spline_; }

  double& base_at(std::size_t j, std::size_t i) { return base_.data()[i * n_out_ + j]; }
  double& spline_at(std::size_t j, std::size_t i, std::size_t m) {
    return spline_.data()[(i * static_cast<std::size_t>(spline_config().basis_count()) + m) * n_out_ + j];
  }

  /// Batch forward over rows of x (N x n_in). Statistics from this batch
  /// replace any previous ones when collect_stats is set and are cleared
  /// otherwise.
  Tensor forward(const Tensor& x, bool collect_stats, KanRoute route = KanRoute::automatic) {
    auto r = kan_linear(x, base_, spline_, *knots_, collect_stats, route);
    stats_ = r.edge_l1;
    return r.output;
  }

  // phi_{j,i}(x) for the edge from input i to output j, evaluated directly.
  double edge_activation(double x, std::size_t j, std::size_t i) const {
    const auto row = bspline::basis_row(x, *knots_);
    const auto nb = row.size();
    double v = base_[i * n_out_ + j] * ops::silu_value(x);
    for (std::size_t m = 0; m < nb; ++m) v += spline_[(i * nb + m) * n_out_ + j] * row[m];
    return v;
  }

  const std::optional<Tensor>& stats() const { return stats_; }
  void clear_stats() { stats_.reset(); }

  std::vector<NamedParameter> parameters(const std::string& prefix) const {
    return {{prefix + ".base_weight", base_}, {prefix + ".spline_weight", spline_}};
  }

 private:
  std::size_t n_in_ = 0, n_out_ = 0;
  std::shared_ptr<const bspline::KnotVector> knots_;
  Tensor base_, spline_;
  std::optional<Tensor> stats_;
};

/// |Phi|_1: sum of the per-edge mean activation magnitudes from the last
/// statistics-collecting forward pass.
inline Tensor layer_l1(const KanLayer& layer) {
  if (!layer.stats()) throw std::logic_error("layer_l1: no activation statistics; run forward with collect_stats");
  return ops::sum(*layer.stats());
}

inline Tensor layer_entropy(const KanLayer& layer) {
  if (!layer.stats()) throw std::logic_error("layer_entropy: no activation statistics; run forward with collect_stats");
  return edge_entropy(*layer.stats());
}

}  // namespace hsrkan::kan
