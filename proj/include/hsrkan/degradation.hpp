#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hsrkan/errors.hpp"
#include "hsrkan/tensor.hpp"

namespace hsrkan::data {

/// Band-major hyperspectral (or multispectral) cube, values nominally in [0, 1].
struct HsiCube {
  std::size_t bands = 0, height = 0, width = 0;
  std::vector<double> values;  // [band][row][col]
  nlohmann::json meta = nlohmann::json::object();

  HsiCube() = default;
  HsiCube(std::size_t c, std::size_t h, std::size_t w) : bands(c), height(h), width(w), values(c * h * w, 0.0) {}

  std::size_t plane() const { return height * width; }
  double& at(std::size_t b, std::size_t y, std::size_t x) { return values[(b * height + y) * width + x]; }
  double at(std::size_t b, std::size_t y, std::size_t x) const { return values[(b * height + y) * width + x]; }

  bool same_shape(const HsiCube& o) const { return bands == o.bands && height == o.height && width == o.width; }

  Tensor to_tensor() const { return Tensor(Shape{1, bands, height, width}, values); }

  // Image b of a B x C x H x W tensor.
  static HsiCube from_tensor(const Tensor& t, std::size_t b = 0) {
    if (t.rank() != 4) throw ShapeError("HsiCube::from_tensor expects rank 4, got " + to_string(t.shape()));
    HsiCube c(t.dim(1), t.dim(2), t.dim(3));
    const std::size_t n = c.values.size();
    std::copy_n(t.data() + b * n, n, c.values.begin());
    return c;
  }

  friend bool operator==(const HsiCube& a, const HsiCube& b) {
    return a.same_shape(b) && a.values == b.values;
  }
};

// Stack same-shaped cubes into a B x C x H x W tensor.
inline Tensor stack(const std::vector<const HsiCube*>& cubes) {
  if (cubes.empty()) throw ShapeError("stack: no cubes");
  const HsiCube& first = *cubes.front();
  std::vector<double> values;
  values.reserve(cubes.size() * first.values.size());
  for (const HsiCube* c : cubes) {
    if (!c->same_shape(first)) throw ShapeError("stack: cubes differ in shape");
    values.insert(values.end(), c->values.begin(), c->values.end());
  }
  return Tensor(Shape{cubes.size(), first.bands, first.height, first.width}, std::move(values));
}

// ---------------------------------------------------------------------------
// .hsc file format: "HSCUBE01", u64 LE header length, UTF-8 JSON header,
// then little-endian f32 payload in band-major row-major order.

inline constexpr char kCubeMagic[8] = {'H', 'S', 'C', 'U', 'B', 'E', '0', '1'};

namespace detail {
inline void write_u64_le(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(b, 8);
}
inline std::uint64_t read_u64_le(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw FormatError("truncated length prefix");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}
inline void write_f32_le(std::ostream& os, float f) {
  const auto u = std::bit_cast<std::uint32_t>(f);
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((u >> (8 * i)) & 0xFF);
  os.write(b, 4);
}
inline float read_f32_le(const unsigned char* b) {
  std::uint32_t u = 0;
  for (int i = 0; i < 4; ++i) u |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return std::bit_cast<float>(u);
}
}  // namespace detail

inline void write_hsc(std::ostream& os, const HsiCube& cube) {
  nlohmann::json header{{"bands", cube.bands}, {"height", cube.height}, {"width", cube.width}, {"dtype", "f32"}};
  if (!cube.meta.empty()) header["meta"] = cube.meta;
  const std::string text = header.dump();
  os.write(kCubeMagic, 8);
  detail::write_u64_le(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (double v : cube.values) detail::write_f32_le(os, static_cast<float>(v));
  if (!os) throw FormatError("failed writing .hsc stream");
}

inline HsiCube read_hsc(std::istream& is) {
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kCubeMagic, 8) != 0) throw FormatError("not an .hsc file (bad magic)");
  const std::uint64_t len = detail::read_u64_le(is);
  if (len > (1u << 24)) throw FormatError(".hsc header too large");
  std::string text(len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(len));
  if (!is) throw FormatError("truncated .hsc header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string(".hsc header is not JSON: ") + e.what());
  }
  if (header.value("dtype", std::string()) != "f32") throw FormatError(".hsc dtype must be f32");
  HsiCube cube(header.at("bands").get<std::size_t>(), header.at("height").get<std::size_t>(),
               header.at("width").get<std::size_t>());
  if (header.contains("meta")) cube.meta = header["meta"];
  std::vector<unsigned char> payload(cube.values.size() * 4);
  is.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
  if (!is) throw FormatError("truncated .hsc payload");
  for (std::size_t i = 0; i < cube.values.size(); ++i) cube.values[i] = detail::read_f32_le(payload.data() + 4 * i);
  return cube;
}

inline void save_hsc(const std::filesystem::path& path, const HsiCube& cube) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  write_hsc(os, cube);
}

inline HsiCube load_hsc(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  return read_hsc(is);
}

// ---------------------------------------------------------------------------
// Spectral response R (c x C, row-stochastic)

struct SpectralResponse {
  std::size_t rows = 0, cols = 0;  // c, C
  std::vector<double> weights;     // row-major

  double at(std::size_t r, std::size_t c) const { return weights[r * cols + c]; }

  void validate() const {
    if (rows == 0 || cols == 0 || weights.size() != rows * cols) throw ConfigError("spectral response: bad dimensions");
    for (std::size_t r = 0; r < rows; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < cols; ++c) {
        if (!(at(r, c) >= 0.0)) throw ConfigError("spectral response: negative or non-finite weight");
        s += at(r, c);
      }
      if (std::abs(s - 1.0) > 1e-9)
        throw ConfigError("spectral response: row " + std::to_string(r) + " sums to " + std::to_string(s));
    }
  }

  static SpectralResponse identity(std::size_t n) {
    SpectralResponse R{n, n, std::vector<double>(n * n, 0.0)};
    for (std::size_t i = 0; i < n; ++i) R.weights[i * n + i] = 1.0;
    return R;
  }

  /// Three Gaussian band-sensitivity bumps centred at 1/6, 1/2 and 5/6 of the
  /// band axis with standard deviation C/6 bands, each row normalised to 1.
  static SpectralResponse gaussian_rgb(std::size_t hsi_bands) {
    if (hsi_bands < 2) throw ConfigError("spectral response needs at least 2 hyperspectral bands");
    const std::size_t c = 3;
    SpectralResponse R{c, hsi_bands, std::vector<double>(c * hsi_bands)};
    const double centres[3] = {1.0 / 6.0, 0.5, 5.0 / 6.0};
    const double sigma = static_cast<double>(hsi_bands) / 6.0;
    for (std::size_t r = 0; r < c; ++r) {
      double s = 0.0;
      const double mu = centres[r] * static_cast<double>(hsi_bands);
      for (std::size_t b = 0; b < hsi_bands; ++b) {
        const double d = (static_cast<double>(b) + 0.5 - mu) / sigma;
        R.weights[r * hsi_bands + b] = std::exp(-0.5 * d * d);
        s += R.weights[r * hsi_bands + b];
      }
      for (std::size_t b = 0; b < hsi_bands; ++b) R.weights[r * hsi_bands + b] /= s;
    }
    return R;
  }
};

inline SpectralResponse load_response_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open spectral response " + path.string());
  SpectralResponse R;
  std::string line;
  while (std::getline(is, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t n = 0;
    while (std::getline(ss, cell, ',')) {
      try {
        R.weights.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw ConfigError("spectral response: bad number '" + cell + "'");
      }
      ++n;
    }
    if (R.rows == 0) R.cols = n;
    if (n != R.cols) throw ConfigError("spectral response: ragged CSV row");
    ++R.rows;
  }
  R.validate();
  return R;
}

inline void save_response_csv(const std::filesystem::path& path, const SpectralResponse& R) {
  std::ofstream os(path);
  os << std::setprecision(17);
  for (std::size_t r = 0; r < R.rows; ++r)
    for (std::size_t c = 0; c < R.cols; ++c) os << R.at(r, c) << (c + 1 == R.cols ? '\n' : ',');
}

// X = R Z, per pixel.
inline HsiCube degrade_spectral(const HsiCube& Z, const SpectralResponse& R) {
  if (R.cols != Z.bands)
    throw ShapeError("degrade_spectral: response has " + std::to_string(R.cols) + " columns, cube has " +
                     std::to_string(Z.bands) + " bands");
  HsiCube X(R.rows, Z.height, Z.width);
  const std::size_t P = Z.plane();
  for (std::size_t r = 0; r < R.rows; ++r) {
    double* dst = X.values.data() + r * P;
    for (std::size_t b = 0; b < Z.bands; ++b) {
      const double w = R.at(r, b);
      const double* src = Z.values.data() + b * P;
      for (std::size_t p = 0; p < P; ++p) dst[p] += w * src[p];
    }
  }
  return X;
}

// ---------------------------------------------------------------------------
// Spatial degradation: 3x3 Gaussian blur (sigma 0.5), then decimation.

struct SpatialDegradation {
  std::size_t factor = 4;
  double sigma = 0.5;

  // Normalised 1-D taps; the 2-D kernel is their outer product.
  std::array<double, 3> taps() const {
    const double e = std::exp(-1.0 / (2.0 * sigma * sigma));
    const double s = 1.0 + 2.0 * e;
    return {e / s, 1.0 / s, e / s};
  }

  std::array<double, 9> kernel() const {
    const auto t = taps();
    std::array<double, 9> k{};
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) k[i * 3 + j] = t[i] * t[j];
    return k;
  }
};

namespace detail {
// numpy-style "reflect": -1 -> 1, n -> n-2.
inline std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
  if (n == 1) return 0;
  const auto m = static_cast<std::ptrdiff_t>(n);
  if (i < 0) i = -i;
  if (i >= m) i = 2 * (m - 1) - i;
  return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(i, 0, m - 1));
}
}  // namespace detail

// Separable 3x3 Gaussian blur of every band with reflect padding.
inline HsiCube blur(const HsiCube& Z, const SpatialDegradation& deg) {
  const auto t = deg.taps();
  HsiCube out(Z.bands, Z.height, Z.width);
  std::vector<double> tmp(Z.plane());
  const std::size_t H = Z.height, W = Z.width;
  for (std::size_t b = 0; b < Z.bands; ++b) {
    const double* src = Z.values.data() + b * Z.plane();
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) {
        double acc = 0.0;
        for (std::ptrdiff_t d = -1; d <= 1; ++d)
          acc += t[static_cast<std::size_t>(d + 1)] *
                 src[y * W + detail::reflect_index(static_cast<std::ptrdiff_t>(x) + d, W)];
        tmp[y * W + x] = acc;
      }
    double* dst = out.values.data() + b * Z.plane();
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) {
        double acc = 0.0;
        for (std::ptrdiff_t d = -1; d <= 1; ++d)
          acc += t[static_cast<std::size_t>(d + 1)] *
                 tmp[detail::reflect_index(static_cast<std::ptrdiff_t>(y) + d, H) * W + x];
        dst[y * W + x] = acc;
      }
  }
  return out;
}

/// Y = Z D: blur, then keep every s-th sample starting at offset floor(s/2).
inline HsiCube degrade_spatial(const HsiCube& Z, const SpatialDegradation& deg) {
  const std::size_t s = deg.factor;
  if (s == 0) throw ConfigError("degrade_spatial: factor must be positive");
  if (Z.height % s != 0 || Z.width % s != 0)
    throw ShapeError("degrade_spatial: " + std::to_string(Z.height) + "x" + std::to_string(Z.width) +
                     " is not divisible by " + std::to_string(s));
  const HsiCube blurred = blur(Z, deg);
  HsiCube Y(Z.bands, Z.height / s, Z.width / s);
  const std::size_t off = s / 2;
  for (std::size_t b = 0; b < Z.bands; ++b)
    for (std::size_t y = 0; y < Y.height; ++y)
      for (std::size_t x = 0; x < Y.width; ++x) Y.at(b, y, x) = blurred.at(b, y * s + off, x * s + off);
  return Y;
}

// ---------------------------------------------------------------------------
// Synthetic scenes: smooth endmember spectra mixed by per-pixel simplex
// abundances drawn from multi-scale smoothed random fields.

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Gaussian smoothing of an H x W field with edge replication.
inline void smooth_field(std::vector<double>& f, std::size_t H, std::size_t W, double sigma) {
  const auto radius = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double s = 0.0;
  for (std::ptrdiff_t d = -radius; d <= radius; ++d) {
    k[static_cast<std::size_t>(d + radius)] = std::exp(-0.5 * static_cast<double>(d * d) / (sigma * sigma));
    s += k[static_cast<std::size_t>(d + radius)];
  }
  for (double& v : k) v /= s;
  const auto clampi = [](std::ptrdiff_t i, std::size_t n) {
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(i, 0, static_cast<std::ptrdiff_t>(n) - 1));
  };
  std::vector<double> tmp(f.size());
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      double acc = 0.0;
      for (std::ptrdiff_t d = -radius; d <= radius; ++d)
        acc += k[static_cast<std::size_t>(d + radius)] * f[y * W + clampi(static_cast<std::ptrdiff_t>(x) + d, W)];
      tmp[y * W + x] = acc;
    }
  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      double acc = 0.0;
      for (std::ptrdiff_t d = -radius; d <= radius; ++d)
        acc += k[static_cast<std::size_t>(d + radius)] * tmp[clampi(static_cast<std::ptrdiff_t>(y) + d, H) * W + x];
      f[y * W + x] = acc;
    }
}

inline void standardize(std::vector<double>& f) {
  double mean = 0.0;
  for (double v : f) mean += v;
  mean /= static_cast<double>(f.size());
  double var = 0.0;
  for (double v : f) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(f.size()));
  for (double& v : f) v = sd > 0.0 ? (v - mean) / sd : 0.0;
}

}  // namespace detail

struct SynthResult {
  HsiCube cube;
  std::vector<double> abundances;  // [endmember][row][col]
  std::vector<double> endmembers;  // [endmember][band]
};

inline SynthResult synth_hsi_detailed(std::uint64_t seed, std::size_t bands, std::size_t height, std::size_t width,
                                      std::size_t n_endmembers) {
  if (bands == 0 || height == 0 || width == 0) throw ConfigError("synth_hsi: dimensions must be positive");
  if (n_endmembers == 0) throw ConfigError("synth_hsi: need at least one endmember");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  SynthResult r;
  const std::size_t E = n_endmembers, P = height * width;

  r.endmembers.assign(E * bands, 0.0);
  for (std::size_t e = 0; e < E; ++e) {
    const double offset = 0.3 * uni(rng);
    double amp[3], centre[3], wdt[3];
    for (int q = 0; q < 3; ++q) {
      amp[q] = 0.2 + 0.8 * uni(rng);
      centre[q] = uni(rng);
      wdt[q] = 0.08 + 0.22 * uni(rng);
    }
    const double peak = 0.6 + 0.35 * uni(rng);
    double mx = 0.0;
    for (std::size_t b = 0; b < bands; ++b) {
      const double pos = bands > 1 ? static_cast<double>(b) / static_cast<double>(bands - 1) : 0.5;
      double v = offset;
      for (int q = 0; q < 3; ++q) v += amp[q] * std::exp(-0.5 * (pos - centre[q]) * (pos - centre[q]) / (wdt[q] * wdt[q]));
      r.endmembers[e * bands + b] = v;
      mx = std::max(mx, v);
    }
    for (std::size_t b = 0; b < bands; ++b) r.endmembers[e * bands + b] *= peak / mx;
  }

  r.abundances.assign(E * P, 1.0);
  if (E > 1) {
    const double coarse = std::max(1.0, static_cast<double>(std::min(height, width)) / 8.0);
    std::vector<std::vector<double>> logits(E);
    for (std::size_t e = 0; e < E; ++e) {
      std::vector<double> a(P), b(P);
      for (double& v : a) v = gauss(rng);
      for (double& v : b) v = gauss(rng);
      detail::smooth_field(a, height, width, coarse);
      detail::smooth_field(b, height, width, 1.0);
      detail::standardize(a);
      detail::standardize(b);
      logits[e].resize(P);
      for (std::size_t p = 0; p < P; ++p) logits[e][p] = 2.5 * (a[p] + 0.6 * b[p]);
    }
    for (std::size_t p = 0; p < P; ++p) {
      double mx = logits[0][p];
      for (std::size_t e = 1; e < E; ++e) mx = std::max(mx, logits[e][p]);
      double s = 0.0;
      for (std::size_t e = 0; e < E; ++e) s += std::exp(logits[e][p] - mx);
      for (std::size_t e = 0; e < E; ++e) r.abundances[e * P + p] = std::exp(logits[e][p] - mx) / s;
    }
  }

  r.cube = HsiCube(bands, height, width);
  for (std::size_t b = 0; b < bands; ++b)
    for (std::size_t p = 0; p < P; ++p) {
      double v = 0.0;
      for (std::size_t e = 0; e < E; ++e) v += r.abundances[e * P + p] * r.endmembers[e * bands + b];
      // f32-representable so that an .hsc round trip is lossless
      r.cube.values[b * P + p] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  r.cube.meta = {{"seed", seed}, {"endmembers", E}, {"generator", "endmember-mix-v1"}};
  return r;
}

inline HsiCube synth_hsi(std::uint64_t seed, std::size_t bands, std::size_t height, std::size_t width,
                         std::size_t n_endmembers) {
  return synth_hsi_detailed(seed, bands, height, width, n_endmembers).cube;
}

// ---------------------------------------------------------------------------
// Datasets of (X, Y, Z) triples

struct DatasetConfig {
  std::size_t bands = 31;
  std::size_t size = 64;  // H = W of the ground-truth patch
  std::size_t scale = 4;
  std::size_t endmembers = 4;
  SpectralResponse response{};  // empty: Gaussian RGB stand-in for C bands

  SpectralResponse effective_response() const {
    return response.weights.empty() ? SpectralResponse::gaussian_rgb(bands) : response;
  }
};

struct Sample {
  std::uint64_t seed = 0;
  HsiCube z, x, y;  // HR-HSI target, HR-MSI, LR-HSI
};

// Patch i of a dataset seeded with `seed` uses its own derived seed.
inline std::uint64_t patch_seed(std::uint64_t seed, std::size_t index) {
  return detail::splitmix64(detail::splitmix64(seed) ^ static_cast<std::uint64_t>(index));
}

inline Sample make_sample(const HsiCube& z, const SpectralResponse& R, std::size_t scale, std::uint64_t seed = 0) {
  Sample s;
  s.seed = seed;
  s.z = z;
  s.x = degrade_spectral(z, R);
  s.y = degrade_spatial(z, SpatialDegradation{scale});
  return s;
}

inline std::vector<Sample> make_dataset(std::uint64_t seed, std::size_t n_patches, const DatasetConfig& cfg) {
  const SpectralResponse R = cfg.effective_response();
  R.validate();
  std::vector<Sample> out;
  out.reserve(n_patches);
  for (std::size_t i = 0; i < n_patches; ++i) {
    const std::uint64_t ps = patch_seed(seed, i);
    out.push_back(make_sample(synth_hsi(ps, cfg.bands, cfg.size, cfg.size, cfg.endmembers), R, cfg.scale, ps));
  }
  return out;
}

struct Split {
  std::vector<Sample> train, val;
};

// The last n_val patches (distinct patch seeds) form the validation split.
inline Split split_dataset(std::vector<Sample> samples, std::size_t n_val) {
  if (n_val >= samples.size()) throw ConfigError("split_dataset: validation split leaves no training data");
  Split s;
  const std::size_t n_train = samples.size() - n_val;
  for (std::size_t i = 0; i < samples.size(); ++i) (i < n_train ? s.train : s.val).push_back(std::move(samples[i]));
  return s;
}

}  // namespace hsrkan::data
