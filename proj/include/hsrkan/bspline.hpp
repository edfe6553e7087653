#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "hsrkan/errors.hpp"

namespace hsrkan::bspline {

inline constexpr int kMaxOrder = 15;

struct SplineConfig {
  int grid = 5;   // G: number of intervals on [lo, hi]
  int order = 3;  // k: polynomial degree
  double lo = -1.0;
  double hi = 1.0;

  int basis_count() const { return grid + order; }

  void validate() const {
    if (grid < 1) throw ConfigError("spline grid size must be >= 1, got " + std::to_string(grid));
    if (order < 0 || order > kMaxOrder)
      throw ConfigError("spline order must be in [0, " + std::to_string(kMaxOrder) + "], got " + std::to_string(order));
    if (!(lo < hi)) throw ConfigError("spline domain needs lo < hi");
  }

  friend bool operator==(const SplineConfig&, const SplineConfig&) = default;
};

/// Equidistant knots t_{-k} ... t_{G+k}.
///
/// Storage position p holds knot index p - k. Basis function m of a layer
/// (m = 0 ... G+k-1) is B^k_{m-k}, i.e. it is supported on storage positions
/// [m, m+k+1].
class KnotVector {
 public:
  explicit KnotVector(const SplineConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    spacing_ = (cfg.hi - cfg.lo) / cfg.grid;
    const int n = cfg.grid + 2 * cfg.order + 1;
    knots_.resize(static_cast<std::size_t>(n));
    for (int p = 0; p < n; ++p) knots_[static_cast<std::size_t>(p)] = cfg.lo + (p - cfg.order) * spacing_;
    // exact endpoints of the domain
    knots_[static_cast<std::size_t>(cfg.order)] = cfg.lo;
    knots_[static_cast<std::size_t>(cfg.order + cfg.grid)] = cfg.hi;
  }

  const SplineConfig& config() const { return cfg_; }
  double spacing() const { return spacing_; }
  const std::vector<double>& values() const { return knots_; }
  std::size_t size() const { return knots_.size(); }

  // Knot t_i for i in [-k, G+k].
  double at(int i) const {
    const int p = i + cfg_.order;
    if (p < 0 || p >= static_cast<int>(knots_.size()))
      throw std::out_of_range("knot index " + std::to_string(i) + " outside [-k, G+k]");
    return knots_[static_cast<std::size_t>(p)];
  }

  double lo() const { return cfg_.lo; }
  double hi() const { return cfg_.hi; }

  // Largest representable value below hi: the upper clamp bound.
  double clamp_hi() const { return std::nextafter(cfg_.hi, cfg_.lo); }
  double clamp(double x) const { return std::clamp(x, cfg_.lo, clamp_hi()); }

 private:
  SplineConfig cfg_;
  double spacing_ = 0.0;
  std::vector<double> knots_;
};

inline KnotVector make_knots(const SplineConfig& cfg) { return KnotVector(cfg); }

/// Cox–de Boor recursion for B^p_i(x), knot index i, degree p.
/// Valid for -k <= i and i + p + 1 <= G + k.
inline double basis(int i, int p, double x, const KnotVector& knots) {
  const auto& cfg = knots.config();
  if (p < 0 || i < -cfg.order || i + p + 1 > cfg.grid + cfg.order)
    throw std::out_of_range("basis index i=" + std::to_string(i) + " degree " + std::to_string(p) +
                            " outside the knot vector");
  if (p == 0) return (knots.at(i) <= x && x < knots.at(i + 1)) ? 1.0 : 0.0;
  const double ti = knots.at(i), tip = knots.at(i + p), ti1 = knots.at(i + 1), tip1 = knots.at(i + p + 1);
  return (x - ti) / (tip - ti) * basis(i, p - 1, x, knots) + (tip1 - x) / (tip1 - ti1) * basis(i + 1, p - 1, x, knots);
}

// The k+1 basis functions that can be nonzero at a clamped input.
struct ActiveBasis {
  int first = 0;  // layer basis index m of values[0]
  std::array<double, kMaxOrder + 1> values{};
  std::array<double, kMaxOrder + 1> derivatives{};  // d/dx, zero when the input was clamped
  bool clamped = false;
};

/// Evaluates the nonzero degree-k basis functions at clamp(x) with the
/// triangular form of the Cox–de Boor recursion, plus their derivatives.
inline ActiveBasis active_basis(double x, const KnotVector& knots) {
  const auto& cfg = knots.config();
  const int k = cfg.order;
  const auto& U = knots.values();
  ActiveBasis out;
  const double xc = knots.clamp(x);
  out.clamped = xc != x;

  // storage position j with U[j] <= xc < U[j+1], j in [k, G+k-1]
  int j = static_cast<int>(std::floor((xc - U[0]) / knots.spacing()));
  j = std::clamp(j, k, cfg.grid + k - 1);
  while (j > k && xc < U[static_cast<std::size_t>(j)]) --j;
  while (j < cfg.grid + k - 1 && xc >= U[static_cast<std::size_t>(j + 1)]) ++j;
  out.first = j - k;

  std::array<double, kMaxOrder + 1> N{}, left{}, right{}, prev{};
  N[0] = 1.0;
  for (int p = 1; p <= k; ++p) {
    if (p == k) prev = N;
    left[static_cast<std::size_t>(p)] = xc - U[static_cast<std::size_t>(j + 1 - p)];
    right[static_cast<std::size_t>(p)] = U[static_cast<std::size_t>(j + p)] - xc;
    double saved = 0.0;
    for (int r = 0; r < p; ++r) {
      const double denom = right[static_cast<std::size_t>(r + 1)] + left[static_cast<std::size_t>(p - r)];
      const double temp = N[static_cast<std::size_t>(r)] / denom;
      N[static_cast<std::size_t>(r)] = saved + right[static_cast<std::size_t>(r + 1)] * temp;
      saved = left[static_cast<std::size_t>(p - r)] * temp;
    }
    N[static_cast<std::size_t>(p)] = saved;
  }
  out.values = N;

  if (k >= 1 && !out.clamped) {
    // dB^k_a = k/(U[a+k]-U[a]) B^{k-1}_a - k/(U[a+k+1]-U[a+1]) B^{k-1}_{a+1}
    for (int r = 0; r <= k; ++r) {
      const int a = j - k + r;
      double d = 0.0;
      if (r >= 1)
        d += k * prev[static_cast<std::size_t>(r - 1)] /
             (U[static_cast<std::size_t>(a + k)] - U[static_cast<std::size_t>(a)]);
      if (r <= k - 1)
        d -= k * prev[static_cast<std::size_t>(r)] /
             (U[static_cast<std::size_t>(a + k + 1)] - U[static_cast<std::size_t>(a + 1)]);
      out.derivatives[static_cast<std::size_t>(r)] = d;
    }
  }
  return out;
}

/// All G+k degree-k basis values at clamp(x), in layer order m = 0 ... G+k-1.
inline std::vector<double> basis_row(double x, const KnotVector& knots) {
  const auto& cfg = knots.config();
  std::vector<double> row(static_cast<std::size_t>(cfg.basis_count()), 0.0);
  const ActiveBasis a = active_basis(x, knots);
  for (int r = 0; r <= cfg.order; ++r) row[static_cast<std::size_t>(a.first + r)] = a.values[static_cast<std::size_t>(r)];
  return row;
}

// d/dx of basis_row; zero outside the clamp range and for k = 0.
inline std::vector<double> basis_row_derivative(double x, const KnotVector& knots) {
  const auto& cfg = knots.config();
  std::vector<double> row(static_cast<std::size_t>(cfg.basis_count()), 0.0);
  const ActiveBasis a = active_basis(x, knots);
  for (int r = 0; r <= cfg.order; ++r)
    row[static_cast<std::size_t>(a.first + r)] = a.derivatives[static_cast<std::size_t>(r)];
  return row;
}

}  // namespace hsrkan::bspline
