#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "hsrkan/parallel.hpp"
#include "hsrkan/tensor.hpp"

namespace hsrkan::ops {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

namespace detail {

inline void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank)
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + to_string(t.shape()));
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
}

inline ConstMatrixMap as_matrix(const double* p, std::size_t rows, std::size_t cols) {
  return ConstMatrixMap(p, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
inline MatrixMap as_matrix(double* p, std::size_t rows, std::size_t cols) {
  return MatrixMap(p, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& x, const char* name, Fwd fwd, Deriv deriv) {
  Tensor out(x.shape());
  auto xv = x.values();
  auto ov = out.mutable_values();
  for (std::size_t i = 0; i < xv.size(); ++i) ov[i] = fwd(xv[i]);
  if (hsrkan::detail::wants_grad({&x})) {
    hsrkan::detail::record(name, {x}, {out}, [x, out, deriv]() mutable {
      auto g = out.grad();
      auto xv = x.values();
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * deriv(xv[i]);
    });
  }
  return out;
}

}  // namespace detail

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double silu_value(double x) { return x * sigmoid(x); }
inline double silu_derivative(double x) {
  const double s = sigmoid(x);
  return s * (1.0 + x * (1.0 - s));
}

// ---------------------------------------------------------------------------
// Elementwise and scalar arithmetic

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  Tensor out(a.shape());
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a[i] + b[i];
  if (hsrkan::detail::wants_grad({&a, &b})) {
    hsrkan::detail::record("add", {a, b}, {out}, [a, b, out]() mutable {
      auto g = out.grad();
      if (a.requires_grad()) {
        auto ga = a.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    });
  }
  return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sub");
  Tensor out(a.shape());
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a[i] - b[i];
  if (hsrkan::detail::wants_grad({&a, &b})) {
    hsrkan::detail::record("sub", {a, b}, {out}, [a, b, out]() mutable {
      auto g = out.grad();
      if (a.requires_grad()) {
        auto ga = a.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    });
  }
  return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  auto o = out.mutable_values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a[i] * b[i];
  if (hsrkan::detail::wants_grad({&a, &b})) {
    hsrkan::detail::record("mul", {a, b}, {out}, [a, b, out]() mutable {
      auto g = out.grad();
      if (a.requires_grad()) {
        auto ga = a.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * b[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * a[i];
      }
    });
  }
  return out;
}

inline Tensor scale(const Tensor& x, double factor) {
  return detail::unary(
      x, "scale", [factor](double v) { return v * factor; }, [factor](double) { return factor; });
}

inline Tensor add_scalar(const Tensor& x, double offset) {
  return detail::unary(
      x, "add_scalar", [offset](double v) { return v + offset; }, [](double) { return 1.0; });
}

inline Tensor silu(const Tensor& x) { return detail::unary(x, "silu", silu_value, silu_derivative); }

// relu'(0) is taken as 0.
inline Tensor relu(const Tensor& x) {
  return detail::unary(
      x, "relu", [](double v) { return v > 0.0 ? v : 0.0; }, [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

// ---------------------------------------------------------------------------
// Reductions

inline Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  Tensor out = Tensor::scalar(acc);
  if (hsrkan::detail::wants_grad({&x})) {
    hsrkan::detail::record("sum", {x}, {out}, [x, out]() mutable {
      const double g = out.grad()[0];
      for (double& gx : x.grad_buffer()) gx += g;
    });
  }
  return out;
}

inline Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

// Mean absolute difference; sign(0) contributes no gradient.
inline Tensor l1_mean(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "l1_mean");
  const double inv_n = 1.0 / static_cast<double>(a.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::abs(a[i] - b[i]);
  Tensor out = Tensor::scalar(acc * inv_n);
  if (hsrkan::detail::wants_grad({&a, &b})) {
    hsrkan::detail::record("l1_mean", {a, b}, {out}, [a, b, out, inv_n]() mutable {
      const double g = out.grad()[0] * inv_n;
      auto sign = [](double d) { return d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0); };
      if (a.requires_grad()) {
        auto ga = a.grad_buffer();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * sign(a[i] - b[i]);
      }
      if (b.requires_grad()) {
        auto gb = b.grad_buffer();
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g * sign(a[i] - b[i]);
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Linear algebra

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_rank(a, 2, "matmul");
  detail::require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), n = a.dim(1), p = b.dim(1);
  if (b.dim(0) != n) throw ShapeError("matmul: inner dimensions disagree " + to_string(a.shape()) + " x " + to_string(b.shape()));
  Tensor out(Shape{m, p});
  detail::as_matrix(out.data(), m, p).noalias() = detail::as_matrix(a.data(), m, n) * detail::as_matrix(b.data(), n, p);
  if (hsrkan::detail::wants_grad({&a, &b})) {
    hsrkan::detail::record("matmul", {a, b}, {out}, [a, b, out, m, n, p]() mutable {
      auto g = detail::as_matrix(out.grad().data(), m, p);
      if (a.requires_grad())
        detail::as_matrix(a.grad_buffer().data(), m, n).noalias() += g * detail::as_matrix(b.data(), n, p).transpose();
      if (b.requires_grad())
        detail::as_matrix(b.grad_buffer().data(), n, p).noalias() += detail::as_matrix(a.data(), m, n).transpose() * g;
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shape manipulation

inline Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size())
    throw ShapeError("reshape: " + to_string(x.shape()) + " cannot become " + to_string(shape));
  Tensor out(std::move(shape), std::vector<double>(x.values().begin(), x.values().end()));
  if (hsrkan::detail::wants_grad({&x})) {
    hsrkan::detail::record("reshape", {x}, {out}, [x, out]() mutable {
      auto g = out.grad();
      auto gx = x.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  }
  return out;
}

// Concatenate two rank-2 tensors along the feature (second) axis.
inline Tensor concat_features(const Tensor& a, const Tensor& b) {
  detail::require_rank(a, 2, "concat_features");
  detail::require_rank(b, 2, "concat_features");
  if (a.dim(0) != b.dim(0))
    throw ShapeError("concat_features: row counts differ " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  const std::size_t rows = a.dim(0), pa = a.dim(1), pb = b.dim(1);
  Tensor out(Shape{rows, pa + pb});
  double* o = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy_n(a.data() + r * pa, pa, o + r * (pa + pb));
    std::copy_n(b.data() + r * pb, pb, o + r * (pa + pb) + pa);
  }
  if (hsrkan::detail::wants_grad({&a, &b})) {
    hsrkan::detail::record("concat_features", {a, b}, {out}, [a, b, out, rows, pa, pb]() mutable {
      const double* g = out.grad().data();
      if (a.requires_grad()) {
        double* ga = a.grad_buffer().data();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < pa; ++j) ga[r * pa + j] += g[r * (pa + pb) + j];
      }
      if (b.requires_grad()) {
        double* gb = b.grad_buffer().data();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < pb; ++j) gb[r * pb + j] += g[r * (pa + pb) + pa + j];
      }
    });
  }
  return out;
}

// B x C x H x W -> (B*H*W) x C: one row per pixel, one column per band.
inline Tensor fold_pixels(const Tensor& x) {
  detail::require_rank(x, 4, "fold_pixels");
  const std::size_t B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  Tensor out(Shape{B * HW, C});
  double* o = out.data();
  const double* xv = x.data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t p = 0; p < HW; ++p) o[(b * HW + p) * C + c] = xv[(b * C + c) * HW + p];
  if (hsrkan::detail::wants_grad({&x})) {
    hsrkan::detail::record("fold_pixels", {x}, {out}, [x, out, B, C, HW]() mutable {
      const double* g = out.grad().data();
      double* gx = x.grad_buffer().data();
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t p = 0; p < HW; ++p) gx[(b * C + c) * HW + p] += g[(b * HW + p) * C + c];
    });
  }
  return out;
}

// Inverse of fold_pixels.
inline Tensor unfold_pixels(const Tensor& rows, std::size_t batch, std::size_t height, std::size_t width) {
  detail::require_rank(rows, 2, "unfold_pixels");
  const std::size_t HW = height * width, C = rows.dim(1);
  if (rows.dim(0) != batch * HW)
    throw ShapeError("unfold_pixels: " + std::to_string(rows.dim(0)) + " rows do not tile " + std::to_string(batch) +
                     "x" + std::to_string(height) + "x" + std::to_string(width));
  Tensor out(Shape{batch, C, height, width});
  double* o = out.data();
  const double* r = rows.data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t p = 0; p < HW; ++p) o[(b * C + c) * HW + p] = r[(b * HW + p) * C + c];
  if (hsrkan::detail::wants_grad({&rows})) {
    hsrkan::detail::record("unfold_pixels", {rows}, {out}, [rows, out, batch, C, HW]() mutable {
      const double* g = out.grad().data();
      double* gr = rows.grad_buffer().data();
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t c = 0; c < C; ++c)
          for (std::size_t p = 0; p < HW; ++p) gr[(b * HW + p) * C + c] += g[(b * C + c) * HW + p];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Image ops on B x C x H x W

inline Tensor global_avg_pool(const Tensor& x) {
  detail::require_rank(x, 4, "global_avg_pool");
  const std::size_t B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  const double inv = 1.0 / static_cast<double>(HW);
  Tensor out(Shape{B, C});
  for (std::size_t bc = 0; bc < B * C; ++bc) {
    double acc = 0.0;
    for (std::size_t p = 0; p < HW; ++p) acc += x[bc * HW + p];
    out.data()[bc] = acc * inv;
  }
  if (hsrkan::detail::wants_grad({&x})) {
    hsrkan::detail::record("global_avg_pool", {x}, {out}, [x, out, B, C, HW, inv]() mutable {
      const double* g = out.grad().data();
      double* gx = x.grad_buffer().data();
      for (std::size_t bc = 0; bc < B * C; ++bc)
        for (std::size_t p = 0; p < HW; ++p) gx[bc * HW + p] += g[bc] * inv;
    });
  }
  return out;
}

// x[b,c,:,:] * weight[b,c]: the one documented broadcast.
inline Tensor channel_mul(const Tensor& x, const Tensor& weight) {
  detail::require_rank(x, 4, "channel_mul");
  detail::require_rank(weight, 2, "channel_mul");
  const std::size_t B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  if (weight.dim(0) != B || weight.dim(1) != C)
    throw ShapeError("channel_mul: weight " + to_string(weight.shape()) + " does not match " + to_string(x.shape()));
  Tensor out(x.shape());
  for (std::size_t bc = 0; bc < B * C; ++bc)
    for (std::size_t p = 0; p < HW; ++p) out.data()[bc * HW + p] = x[bc * HW + p] * weight[bc];
  if (hsrkan::detail::wants_grad({&x, &weight})) {
    hsrkan::detail::record("channel_mul", {x, weight}, {out}, [x, weight, out, B, C, HW]() mutable {
      const double* g = out.grad().data();
      if (x.requires_grad()) {
        double* gx = x.grad_buffer().data();
        for (std::size_t bc = 0; bc < B * C; ++bc)
          for (std::size_t p = 0; p < HW; ++p) gx[bc * HW + p] += g[bc * HW + p] * weight[bc];
      }
      if (weight.requires_grad()) {
        double* gw = weight.grad_buffer().data();
        for (std::size_t bc = 0; bc < B * C; ++bc) {
          double acc = 0.0;
          for (std::size_t p = 0; p < HW; ++p) acc += g[bc * HW + p] * x[bc * HW + p];
          gw[bc] += acc;
        }
      }
    });
  }
  return out;
}

namespace detail {

// Column matrix for a 3x3, stride-1, zero-padded convolution of one image:
// rows are (cin, ky, kx), columns are output pixels.
inline void im2col3x3(const double* img, std::size_t C, std::size_t H, std::size_t W, double* cols) {
  const std::size_t HW = H * W;
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t ky = 0; ky < 3; ++ky)
      for (std::size_t kx = 0; kx < 3; ++kx) {
        double* row = cols + ((c * 3 + ky) * 3 + kx) * HW;
        for (std::size_t y = 0; y < H; ++y) {
          const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + ky) - 1;
          double* dst = row + y * W;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(H)) {
            std::fill_n(dst, W, 0.0);
            continue;
          }
          const double* src = img + (c * H + static_cast<std::size_t>(sy)) * W;
          for (std::size_t x = 0; x < W; ++x) {
            const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x + kx) - 1;
            dst[x] = (sx < 0 || sx >= static_cast<std::ptrdiff_t>(W)) ? 0.0 : src[sx];
          }
        }
      }
}

inline void col2im3x3(const double* cols, std::size_t C, std::size_t H, std::size_t W, double* img) {
  const std::size_t HW = H * W;
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t ky = 0; ky < 3; ++ky)
      for (std::size_t kx = 0; kx < 3; ++kx) {
        const double* row = cols + ((c * 3 + ky) * 3 + kx) * HW;
        for (std::size_t y = 0; y < H; ++y) {
          const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + ky) - 1;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(H)) continue;
          double* dst = img + (c * H + static_cast<std::size_t>(sy)) * W;
          for (std::size_t x = 0; x < W; ++x) {
            const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x + kx) - 1;
            if (sx >= 0 && sx < static_cast<std::ptrdiff_t>(W)) dst[sx] += row[y * W + x];
          }
        }
      }
}

}  // namespace detail

/// 3x3 cross-correlation (no kernel flip), stride 1, zero padding 1.
/// kernel is Cout x Cin x 3 x 3; bias, when non-empty, is [Cout].
inline Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor* bias = nullptr) {
  detail::require_rank(x, 4, "conv2d");
  detail::require_rank(kernel, 4, "conv2d");
  if (kernel.dim(2) != 3 || kernel.dim(3) != 3)
    throw ShapeError("conv2d: kernel must be 3x3 spatially, got " + to_string(kernel.shape()));
  const std::size_t B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3), Cout = kernel.dim(0);
  if (kernel.dim(1) != Cin)
    throw ShapeError("conv2d: input has " + std::to_string(Cin) + " channels, kernel expects " +
                     std::to_string(kernel.dim(1)));
  if (bias != nullptr && (bias->rank() != 1 || bias->dim(0) != Cout))
    throw ShapeError("conv2d: bias shape " + to_string(bias->shape()) + " does not match Cout=" + std::to_string(Cout));
  const std::size_t HW = H * W, K = Cin * 9;
  Tensor out(Shape{B, Cout, H, W});
  parallel_for(B, [&](std::size_t b0, std::size_t b1) {
    std::vector<double> cols(K * HW);
    for (std::size_t b = b0; b < b1; ++b) {
      detail::im2col3x3(x.data() + b * Cin * HW, Cin, H, W, cols.data());
      auto o = detail::as_matrix(out.data() + b * Cout * HW, Cout, HW);
      o.noalias() = detail::as_matrix(kernel.data(), Cout, K) * detail::as_matrix(cols.data(), K, HW);
      if (bias != nullptr)
        for (std::size_t co = 0; co < Cout; ++co) o.row(static_cast<Eigen::Index>(co)).array() += (*bias)[co];
    }
  });
  const bool with_bias = bias != nullptr;
  const Tensor bias_t = with_bias ? *bias : Tensor();
  const bool record = with_bias ? hsrkan::detail::wants_grad({&x, &kernel, bias}) : hsrkan::detail::wants_grad({&x, &kernel});
  if (record) {
    std::vector<Tensor> inputs{x, kernel};
    if (with_bias) inputs.push_back(bias_t);
    hsrkan::detail::record("conv2d", std::move(inputs), {out}, [x, kernel, bias_t, with_bias, out, B, Cin, H, W, Cout]() mutable {
      const std::size_t HW = H * W, K = Cin * 9;
      std::vector<double> cols(K * HW);
      const double* g = out.grad().data();
      for (std::size_t b = 0; b < B; ++b) {
        auto gb = detail::as_matrix(g + b * Cout * HW, Cout, HW);
        if (kernel.requires_grad()) {
          detail::im2col3x3(x.data() + b * Cin * HW, Cin, H, W, cols.data());
          detail::as_matrix(kernel.grad_buffer().data(), Cout, K).noalias() +=
              gb * detail::as_matrix(cols.data(), K, HW).transpose();
        }
        if (x.requires_grad()) {
          detail::as_matrix(cols.data(), K, HW).noalias() = detail::as_matrix(kernel.data(), Cout, K).transpose() * gb;
          detail::col2im3x3(cols.data(), Cin, H, W, x.grad_buffer().data() + b * Cin * HW);
        }
        if (with_bias && bias_t.requires_grad()) {
          auto gbias = bias_t.grad_buffer();
          // plain loop: Eigen's vectorised sum() splits by pointer alignment,
          // which would make the result depend on where the buffer landed
          for (std::size_t co = 0; co < Cout; ++co) {
            const double* row = g + (b * Cout + co) * HW;
            double acc = 0.0;
            for (std::size_t p = 0; p < HW; ++p) acc += row[p];
            gbias[co] += acc;
          }
        }
      }
    });
  }
  return out;
}

inline Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias) { return conv2d(x, kernel, &bias); }

enum class Interpolation { bicubic, bilinear };

namespace detail {

// Keys cubic convolution kernel with a = -0.5.
inline double cubic_weight(double t) {
  constexpr double a = -0.5;
  t = std::abs(t);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

// Per output coordinate: source taps (edge-replicated) and weights.
struct ResampleTable {
  std::size_t taps = 0;
  std::vector<std::size_t> index;
  std::vector<double> weight;
};

inline ResampleTable resample_table(std::size_t in, std::size_t factor, Interpolation mode) {
  ResampleTable t;
  t.taps = mode == Interpolation::bicubic ? 4 : 2;
  const std::size_t out = in * factor;
  t.index.resize(out * t.taps);
  t.weight.resize(out * t.taps);
  const auto clamp_idx = [in](std::ptrdiff_t i) {
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(i, 0, static_cast<std::ptrdiff_t>(in) - 1));
  };
  for (std::size_t o = 0; o < out; ++o) {
    // half-pixel centres (align_corners = false)
    const double src = (static_cast<double>(o) + 0.5) / static_cast<double>(factor) - 0.5;
    const double base = std::floor(src);
    const double frac = src - base;
    const auto ib = static_cast<std::ptrdiff_t>(base);
    if (mode == Interpolation::bicubic) {
      for (std::ptrdiff_t k = -1; k <= 2; ++k) {
        t.index[o * 4 + static_cast<std::size_t>(k + 1)] = clamp_idx(ib + k);
        t.weight[o * 4 + static_cast<std::size_t>(k + 1)] = cubic_weight(frac - static_cast<double>(k));
      }
    } else {
      t.index[o * 2] = clamp_idx(ib);
      t.index[o * 2 + 1] = clamp_idx(ib + 1);
      t.weight[o * 2] = 1.0 - frac;
      t.weight[o * 2 + 1] = frac;
    }
  }
  return t;
}

}  // namespace detail

/// Upsample B x C x h x w by an integer factor with half-pixel centres and
/// edge replication. factor 1 is the identity.
inline Tensor upsample(const Tensor& x, std::size_t factor, Interpolation mode = Interpolation::bicubic) {
  detail::require_rank(x, 4, "upsample");
  if (factor == 0) throw ConfigError("upsample: scale factor must be positive");
  const std::size_t B = x.dim(0), C = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t H = h * factor, W = w * factor;
  const auto ty = detail::resample_table(h, factor, mode);
  const auto tx = detail::resample_table(w, factor, mode);
  const std::size_t taps = tx.taps;
  Tensor out(Shape{B, C, H, W});
  parallel_for(B * C, [&](std::size_t p0, std::size_t p1) {
    std::vector<double> rows(h * W);
    for (std::size_t plane = p0; plane < p1; ++plane) {
      const double* src = x.data() + plane * h * w;
      for (std::size_t r = 0; r < h; ++r)
        for (std::size_t X = 0; X < W; ++X) {
          double acc = 0.0;
          for (std::size_t t = 0; t < taps; ++t) acc += tx.weight[X * taps + t] * src[r * w + tx.index[X * taps + t]];
          rows[r * W + X] = acc;
        }
      double* dst = out.data() + plane * H * W;
      for (std::size_t Y = 0; Y < H; ++Y)
        for (std::size_t X = 0; X < W; ++X) {
          double acc = 0.0;
          for (std::size_t t = 0; t < taps; ++t) acc += ty.weight[Y * taps + t] * rows[ty.index[Y * taps + t] * W + X];
          dst[Y * W + X] = acc;
        }
    }
  });
  if (hsrkan::detail::wants_grad({&x})) {
    hsrkan::detail::record("upsample", {x}, {out}, [x, out, ty, tx, B, C, h, w, H, W, taps]() mutable {
      const double* g = out.grad().data();
      double* gx = x.grad_buffer().data();
      std::vector<double> rows(h * W);
      for (std::size_t plane = 0; plane < B * C; ++plane) {
        std::fill(rows.begin(), rows.end(), 0.0);
        const double* gp = g + plane * H * W;
        for (std::size_t Y = 0; Y < H; ++Y)
          for (std::size_t X = 0; X < W; ++X)
            for (std::size_t t = 0; t < taps; ++t) rows[ty.index[Y * taps + t] * W + X] += ty.weight[Y * taps + t] * gp[Y * W + X];
        double* gsrc = gx + plane * h * w;
        for (std::size_t r = 0; r < h; ++r)
          for (std::size_t X = 0; X < W; ++X)
            for (std::size_t t = 0; t < taps; ++t) gsrc[r * w + tx.index[X * taps + t]] += tx.weight[X * taps + t] * rows[r * W + X];
      }
    });
  }
  return out;
}

}  // namespace hsrkan::ops
