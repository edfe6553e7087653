#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <json.hpp>

#include "hsrkan/degradation.hpp"
#include "hsrkan/errors.hpp"

namespace hsrkan::metrics {

using data::HsiCube;

struct MetricReport {
  double psnr = 0.0;   // dB, +inf for identical cubes
  double ssim = 0.0;
  double sam = 0.0;    // degrees
  double ergas = 0.0;
};

inline void to_json(nlohmann::json& j, const MetricReport& r) {
  j = nlohmann::json{{"psnr", std::isinf(r.psnr) ? nlohmann::json("inf") : nlohmann::json(r.psnr)},
                     {"ssim", r.ssim},
                     {"sam", r.sam},
                     {"ergas", r.ergas}};
}

inline void from_json(const nlohmann::json& j, MetricReport& r) {
  const auto& p = j.at("psnr");
  r.psnr = p.is_string() ? std::numeric_limits<double>::infinity() : p.get<double>();
  r.ssim = j.at("ssim").get<double>();
  r.sam = j.at("sam").get<double>();
  r.ergas = j.at("ergas").get<double>();
}

namespace detail {
inline void require_same(const HsiCube& a, const HsiCube& b, const char* what) {
  if (!a.same_shape(b)) throw ShapeError(std::string(what) + ": cube shapes differ");
}
}  // namespace detail

// Whole-cube PSNR, 10 log10(peak^2 / MSE).
inline double psnr(const HsiCube& pred, const HsiCube& ref, double peak = 1.0) {
  detail::require_same(pred, ref, "psnr");
  if (!(peak > 0.0)) throw ConfigError("psnr: peak must be positive");
  double se = 0.0;
  for (std::size_t i = 0; i < pred.values.size(); ++i) {
    const double d = pred.values[i] - ref.values[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(pred.values.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

struct SamResult {
  double degrees = 0.0;
  std::size_t skipped = 0;  // pixels where either spectrum has zero norm
};

inline SamResult sam_detailed(const HsiCube& pred, const HsiCube& ref) {
  detail::require_same(pred, ref, "sam");
  if (pred.bands < 2) throw ShapeError("sam: needs at least two bands");
  const std::size_t P = pred.plane();
  SamResult r;
  double acc = 0.0;
  std::size_t counted = 0;
  std::vector<double> u(pred.bands), v(pred.bands);
  for (std::size_t p = 0; p < P; ++p) {
    double na = 0.0, nb = 0.0;
    for (std::size_t b = 0; b < pred.bands; ++b) {
      u[b] = pred.values[b * P + p];
      v[b] = ref.values[b * P + p];
      na += u[b] * u[b];
      nb += v[b] * v[b];
    }
    if (na == 0.0 || nb == 0.0) {
      ++r.skipped;
      continue;
    }
    // angle = 2 atan2(|u^ - v^|, |u^ + v^|) on unit vectors: exact zero for
    // identical directions, where acos of a rounded cosine is not
    na = std::sqrt(na);
    nb = std::sqrt(nb);
    double dm = 0.0, dp = 0.0;
    for (std::size_t b = 0; b < pred.bands; ++b) {
      const double a = u[b] / na, c = v[b] / nb;
      dm += (a - c) * (a - c);
      dp += (a + c) * (a + c);
    }
    acc += 2.0 * std::atan2(std::sqrt(dm), std::sqrt(dp));
    ++counted;
  }
  r.degrees = counted ? acc / static_cast<double>(counted) * 180.0 / std::numbers::pi : 0.0;
  return r;
}

inline double sam(const HsiCube& pred, const HsiCube& ref) { return sam_detailed(pred, ref).degrees; }

/// 100/s * sqrt(mean_b RMSE_b^2 / mean_b^2), with band means taken from the
/// reference (second) cube.
inline double ergas(const HsiCube& pred, const HsiCube& ref, double scale) {
  detail::require_same(pred, ref, "ergas");
  if (!(scale > 0.0)) throw ConfigError("ergas: scale must be positive");
  const std::size_t P = pred.plane();
  double acc = 0.0;
  for (std::size_t b = 0; b < pred.bands; ++b) {
    double se = 0.0, mean = 0.0;
    for (std::size_t p = 0; p < P; ++p) {
      const double d = pred.values[b * P + p] - ref.values[b * P + p];
      se += d * d;
      mean += ref.values[b * P + p];
    }
    mean /= static_cast<double>(P);
    if (mean == 0.0) throw NumericalError("ergas: band " + std::to_string(b) + " of the reference has zero mean");
    acc += (se / static_cast<double>(P)) / (mean * mean);
  }
  return 100.0 / scale * std::sqrt(acc / static_cast<double>(pred.bands));
}

struct SsimParams {
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01, k2 = 0.03;
  double range = 1.0;
};

inline std::vector<double> gaussian_window(const SsimParams& p) {
  std::vector<double> w(p.window);
  const double c = (static_cast<double>(p.window) - 1.0) / 2.0;
  double s = 0.0;
  for (std::size_t i = 0; i < p.window; ++i) {
    const double d = static_cast<double>(i) - c;
    w[i] = std::exp(-d * d / (2.0 * p.sigma * p.sigma));
    s += w[i];
  }
  for (double& v : w) v /= s;
  return w;
}

// SSIM of one band from the five local moments.
inline double ssim_from_moments(double mx, double my, double exx, double eyy, double exy, const SsimParams& p) {
  const double c1 = (p.k1 * p.range) * (p.k1 * p.range);
  const double c2 = (p.k2 * p.range) * (p.k2 * p.range);
  const double vx = exx - mx * mx, vy = eyy - my * my, cxy = exy - mx * my;
  return ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
}

/// Single-scale SSIM with a Gaussian window evaluated at every fully-inside
/// window position ("valid"), averaged over positions and then over bands.
inline double ssim(const HsiCube& pred, const HsiCube& ref, const SsimParams& params = {}) {
  detail::require_same(pred, ref, "ssim");
  const std::size_t n = params.window, H = pred.height, W = pred.width;
  if (H < n || W < n) throw ShapeError("ssim: image smaller than the " + std::to_string(n) + "x" + std::to_string(n) + " window");
  const auto w = gaussian_window(params);
  const std::size_t oh = H - n + 1, ow = W - n + 1, P = pred.plane();
  // Separable valid filtering of one plane.
  auto filter = [&](const std::vector<double>& img) {
    std::vector<double> rows(H * ow), out(oh * ow);
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < ow; ++x) {
        double acc = 0.0;
        for (std::size_t t = 0; t < n; ++t) acc += w[t] * img[y * W + x + t];
        rows[y * ow + x] = acc;
      }
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t x = 0; x < ow; ++x) {
        double acc = 0.0;
        for (std::size_t t = 0; t < n; ++t) acc += w[t] * rows[(y + t) * ow + x];
        out[y * ow + x] = acc;
      }
    return out;
  };
  double total = 0.0;
  std::vector<double> a(P), b(P), aa(P), bb(P), ab(P);
  for (std::size_t band = 0; band < pred.bands; ++band) {
    for (std::size_t p = 0; p < P; ++p) {
      a[p] = pred.values[band * P + p];
      b[p] = ref.values[band * P + p];
      aa[p] = a[p] * a[p];
      bb[p] = b[p] * b[p];
      ab[p] = a[p] * b[p];
    }
    const auto ma = filter(a), mb = filter(b), maa = filter(aa), mbb = filter(bb), mab = filter(ab);
    double band_sum = 0.0;
    for (std::size_t i = 0; i < ma.size(); ++i) band_sum += ssim_from_moments(ma[i], mb[i], maa[i], mbb[i], mab[i], params);
    total += band_sum / static_cast<double>(ma.size());
  }
  return total / static_cast<double>(pred.bands);
}

inline MetricReport evaluate(const HsiCube& pred, const HsiCube& ref, double scale) {
  MetricReport r;
  r.psnr = psnr(pred, ref);
  r.sam = sam(pred, ref);
  r.ergas = ergas(pred, ref, scale);
  r.ssim = ssim(pred, ref);
  return r;
}

}  // namespace hsrkan::metrics
