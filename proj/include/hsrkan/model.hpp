#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "hsrkan/bspline.hpp"
#include "hsrkan/kan_layer.hpp"
#include "hsrkan/ops.hpp"
#include "hsrkan/tensor.hpp"

namespace hsrkan::model {

using kan::KanLayer;
using kan::NamedParameter;

struct ModelConfig {
  std::size_t hsi_bands = 31;  // C
  std::size_t msi_bands = 3;   // c
  std::size_t hidden = 32;     // D
  std::size_t blocks = 2;      // L
  std::size_t scale = 4;       // s
  bspline::SplineConfig spline{};
  std::uint64_t seed = 0;
  bool use_cab = true;  // false: blocks are two plainly stacked per-pixel KAN layers
  ops::Interpolation upsample = ops::Interpolation::bicubic;

  void validate() const {
    if (msi_bands < 1) throw ConfigError("msi_bands (c) must be >= 1");
    if (hsi_bands <= msi_bands) throw ConfigError("hsi_bands (C) must exceed msi_bands (c)");
    if (hidden < 1) throw ConfigError("hidden (D) must be >= 1");
    if (blocks < 1) throw ConfigError("blocks (L) must be >= 1");
    if (scale != 2 && scale != 4 && scale != 8) throw ConfigError("scale must be 2, 4 or 8, got " + std::to_string(scale));
    spline.validate();
  }

  // Hidden 256, 4 blocks, G=5, k=3.
  static ModelConfig full() {
    ModelConfig cfg;
    cfg.hidden = 256;
    cfg.blocks = 4;
    return cfg;
  }
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"hsi_bands", c.hsi_bands},
                     {"msi_bands", c.msi_bands},
                     {"hidden", c.hidden},
                     {"blocks", c.blocks},
                     {"scale", c.scale},
                     {"grid", c.spline.grid},
                     {"order", c.spline.order},
                     {"domain", {c.spline.lo, c.spline.hi}},
                     {"seed", c.seed},
                     {"use_cab", c.use_cab},
                     {"upsample", c.upsample == ops::Interpolation::bicubic ? "bicubic" : "bilinear"}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  c = ModelConfig{};
  try {
    c.hsi_bands = j.value("hsi_bands", c.hsi_bands);
    c.msi_bands = j.value("msi_bands", c.msi_bands);
    c.hidden = j.value("hidden", c.hidden);
    c.blocks = j.value("blocks", c.blocks);
    c.scale = j.value("scale", c.scale);
    c.spline.grid = j.value("grid", c.spline.grid);
    c.spline.order = j.value("order", c.spline.order);
    if (j.contains("domain")) {
      const auto& d = j.at("domain");
      if (!d.is_array() || d.size() != 2) throw ConfigError("model config: domain must be [lo, hi]");
      c.spline.lo = d[0].get<double>();
      c.spline.hi = d[1].get<double>();
    }
    c.seed = j.value("seed", c.seed);
    c.use_cab = j.value("use_cab", c.use_cab);
    const std::string up = j.value("upsample", std::string("bicubic"));
    if (up == "bicubic")
      c.upsample = ops::Interpolation::bicubic;
    else if (up == "bilinear")
      c.upsample = ops::Interpolation::bilinear;
    else
      throw ConfigError("model config: upsample must be bicubic or bilinear, got " + up);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
}

struct ParamCount {
  std::size_t total = 0;
  std::vector<std::pair<std::string, std::size_t>> breakdown;
  std::size_t kan_edges = 0;
  // Marginal parameter growth per unit increase of G, and of k.
  std::size_t per_unit_grid = 0;
  std::size_t per_unit_order = 0;
  // Count when every edge also carries a separate spline scale (1 extra per edge).
  std::size_t with_spline_scale = 0;
};

/// Exact parameter count of this implementation: every KAN edge carries
/// 1 + G + k values, the two 3x3 convolutions carry weights and biases.
inline ParamCount param_count(const ModelConfig& cfg) {
  cfg.validate();
  const std::size_t per_edge = 1 + static_cast<std::size_t>(cfg.spline.basis_count());
  const std::size_t C = cfg.hsi_bands, c = cfg.msi_bands, D = cfg.hidden, L = cfg.blocks;
  ParamCount pc;
  const std::size_t fusion_edges = c * D + C * D + 2 * D * D;
  const std::size_t block_edges = 2 * L * D * D;
  pc.kan_edges = fusion_edges + block_edges;
  pc.breakdown.emplace_back("fusion.msi", c * D * per_edge);
  pc.breakdown.emplace_back("fusion.hsi", C * D * per_edge);
  pc.breakdown.emplace_back("fusion.align", 2 * D * D * per_edge);
  for (std::size_t l = 0; l < L; ++l) pc.breakdown.emplace_back("block" + std::to_string(l), 2 * D * D * per_edge);
  pc.breakdown.emplace_back("restructure.conv1", D * D * 9 + D);
  pc.breakdown.emplace_back("restructure.conv2", C * D * 9 + C);
  for (const auto& [name, n] : pc.breakdown) pc.total += n;
  pc.per_unit_grid = pc.kan_edges;
  pc.per_unit_order = pc.kan_edges;
  pc.with_spline_scale = pc.total + pc.kan_edges;
  return pc;
}

/// Multiply-accumulate estimate for one forward pass over an H x W output,
/// counting the k+2 nonzero terms per edge evaluation (SiLU branch plus k+1
/// active basis functions).
inline std::size_t forward_macs(const ModelConfig& cfg, std::size_t H, std::size_t W) {
  const std::size_t per_eval = static_cast<std::size_t>(cfg.spline.order) + 2;
  const std::size_t C = cfg.hsi_bands, c = cfg.msi_bands, D = cfg.hidden, P = H * W;
  std::size_t macs = P * (c * D + C * D + 2 * D * D) * per_eval;
  const std::size_t block_rows = cfg.use_cab ? 1 : P;
  macs += cfg.blocks * 2 * D * D * per_eval * block_rows;
  macs += P * 9 * (D * D + D * C);
  return macs;
}

/// Fusion -> L attention blocks -> restructure head, mapping
/// (X: B x c x H x W, Y: B x C x h x w) to B x C x H x W.
class HsrKanModel {
 public:
  struct Block {
    KanLayer kan1, kan2;
  };

  explicit HsrKanModel(const ModelConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    std::mt19937_64 rng(cfg.seed);
    const auto& sc = cfg.spline;
    fusion_msi_ = KanLayer(cfg.msi_bands, cfg.hidden, sc, rng);
    fusion_hsi_ = KanLayer(cfg.hsi_bands, cfg.hidden, sc, rng);
    fusion_align_ = KanLayer(2 * cfg.hidden, cfg.hidden, sc, rng);
    for (std::size_t l = 0; l < cfg.blocks; ++l) {
      Block b;
      b.kan1 = KanLayer(cfg.hidden, cfg.hidden, sc, rng);
      b.kan2 = KanLayer(cfg.hidden, cfg.hidden, sc, rng);
      blocks_.push_back(std::move(b));
    }
    conv1_w_ = conv_weight(cfg.hidden, cfg.hidden, rng, conv1_b_);
    conv2_w_ = conv_weight(cfg.hsi_bands, cfg.hidden, rng, conv2_b_);
  }

  const ModelConfig& config() const { return cfg_; }

  Tensor upsample_hsi(const Tensor& Y) const { return ops::upsample(Y, cfg_.scale, cfg_.upsample); }

  Tensor kan_fusion(const Tensor& X, const Tensor& Y, bool collect_stats = false) {
    check_inputs(X, Y);
    return fuse(X, upsample_hsi(Y), collect_stats);
  }

  /// score = kan2(kan1(GAP(x))); out = x * score + x. With use_cab off the
  /// block is kan2(kan1(.)) applied to every pixel instead.
  Tensor kan_cab(std::size_t index, const Tensor& x, bool collect_stats = false) {
    ops::detail::require_rank(x, 4, "kan_cab");
    if (x.dim(1) != cfg_.hidden)
      throw ShapeError("kan_cab: input has " + std::to_string(x.dim(1)) + " channels, block expects " +
                       std::to_string(cfg_.hidden));
    Block& blk = blocks_.at(index);
    if (!cfg_.use_cab) {
      const Tensor rows = ops::fold_pixels(x);
      const Tensor h = blk.kan2.forward(blk.kan1.forward(rows, collect_stats), collect_stats);
      return ops::unfold_pixels(h, x.dim(0), x.dim(2), x.dim(3));
    }
    const Tensor pooled = ops::global_avg_pool(x);
    const Tensor score = blk.kan2.forward(blk.kan1.forward(pooled, collect_stats), collect_stats);
    return ops::add(ops::channel_mul(x, score), x);
  }

  // Z = conv2(ReLU(conv1(o))) + UP(Y), with UP(Y) supplied already upsampled.
  Tensor restructure(const Tensor& o, const Tensor& y_up) {
    ops::detail::require_rank(o, 4, "restructure");
    if (o.dim(1) != cfg_.hidden)
      throw ShapeError("restructure: expected " + std::to_string(cfg_.hidden) + " channels, got " + to_string(o.shape()));
    const Tensor h = ops::relu(ops::conv2d(o, conv1_w_, conv1_b_));
    const Tensor r = ops::conv2d(h, conv2_w_, conv2_b_);
    if (r.shape() != y_up.shape())
      throw ShapeError("restructure: head output " + to_string(r.shape()) + " vs UP(Y) " + to_string(y_up.shape()));
    return ops::add(r, y_up);
  }

  Tensor forward(const Tensor& X, const Tensor& Y, bool collect_stats = false) {
    check_inputs(X, Y);
    const Tensor y_up = upsample_hsi(Y);
    Tensor o = fuse(X, y_up, collect_stats);
    for (std::size_t l = 0; l < blocks_.size(); ++l) o = kan_cab(l, o, collect_stats);
    return restructure(o, y_up);
  }

  std::vector<KanLayer*> kan_layers() {
    std::vector<KanLayer*> out{&fusion_msi_, &fusion_hsi_, &fusion_align_};
    for (auto& b : blocks_) {
      out.push_back(&b.kan1);
      out.push_back(&b.kan2);
    }
    return out;
  }
  std::vector<const KanLayer*> kan_layers() const {
    std::vector<const KanLayer*> out{&fusion_msi_, &fusion_hsi_, &fusion_align_};
    for (const auto& b : blocks_) {
      out.push_back(&b.kan1);
      out.push_back(&b.kan2);
    }
    return out;
  }

  Block& block(std::size_t index) { return blocks_.at(index); }
  KanLayer& fusion_msi() { return fusion_msi_; }
  KanLayer& fusion_hsi() { return fusion_hsi_; }
  KanLayer& fusion_align() { return fusion_align_; }

  // Stable, ordered parameter list; names are the checkpoint keys.
  std::vector<NamedParameter> parameters() const {
    std::vector<NamedParameter> out;
    auto append = [&out](std::vector<NamedParameter> ps) {
      for (auto& p : ps) out.push_back(std::move(p));
    };
    append(fusion_msi_.parameters("fusion.msi"));
    append(fusion_hsi_.parameters("fusion.hsi"));
    append(fusion_align_.parameters("fusion.align"));
    for (std::size_t l = 0; l < blocks_.size(); ++l) {
      append(blocks_[l].kan1.parameters("block" + std::to_string(l) + ".kan1"));
      append(blocks_[l].kan2.parameters("block" + std::to_string(l) + ".kan2"));
    }
    out.push_back({"restructure.conv1.weight", conv1_w_});
    out.push_back({"restructure.conv1.bias", conv1_b_});
    out.push_back({"restructure.conv2.weight", conv2_w_});
    out.push_back({"restructure.conv2.bias", conv2_b_});
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : parameters()) n += p.tensor.size();
    return n;
  }

  void zero_grad() const {
    for (const auto& p : parameters()) p.tensor.zero_grad();
  }

  // Sets every learned value (KAN, conv weights and biases) to zero.
  void zero_weights() {
    for (auto& p : parameters()) {
      Tensor t = p.tensor;
      for (double& v : t.mutable_values()) v = 0.0;
    }
  }

  void clear_stats() {
    for (KanLayer* l : kan_layers()) l->clear_stats();
  }

 private:
  static Tensor conv_weight(std::size_t cout, std::size_t cin, std::mt19937_64& rng, Tensor& bias) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(cin * 9));
    std::uniform_real_distribution<double> uni(-bound, bound);
    Tensor w(Shape{cout, cin, 3, 3});
    for (double& v : w.mutable_values()) v = uni(rng);
    bias = Tensor(Shape{cout});
    for (double& v : bias.mutable_values()) v = uni(rng);
    w.set_requires_grad(true);
    bias.set_requires_grad(true);
    return w;
  }

  void check_inputs(const Tensor& X, const Tensor& Y) const {
    ops::detail::require_rank(X, 4, "forward(X)");
    ops::detail::require_rank(Y, 4, "forward(Y)");
    if (X.dim(1) != cfg_.msi_bands)
      throw ShapeError("X has " + std::to_string(X.dim(1)) + " bands, model expects c=" + std::to_string(cfg_.msi_bands));
    if (Y.dim(1) != cfg_.hsi_bands)
      throw ShapeError("Y has " + std::to_string(Y.dim(1)) + " bands, model expects C=" + std::to_string(cfg_.hsi_bands));
    if (X.dim(0) != Y.dim(0)) throw ShapeError("X and Y batch sizes differ");
    if (X.dim(2) != cfg_.scale * Y.dim(2) || X.dim(3) != cfg_.scale * Y.dim(3))
      throw ShapeError("scale mismatch: X " + to_string(X.shape()) + " is not " + std::to_string(cfg_.scale) +
                       "x the spatial size of Y " + to_string(Y.shape()));
  }

  // O0 = KAN_align(concat[KAN_msi(fold X), KAN_hsi(fold UP(Y))]), unfolded to B x D x H x W.
  Tensor fuse(const Tensor& X, const Tensor& y_up, bool collect_stats) {
    const Tensor x0 = ops::fold_pixels(X);
    const Tensor y0 = ops::fold_pixels(y_up);
    const Tensor fx = fusion_msi_.forward(x0, collect_stats);
    const Tensor fy = fusion_hsi_.forward(y0, collect_stats);
    const Tensor o0 = fusion_align_.forward(ops::concat_features(fx, fy), collect_stats);
    return ops::unfold_pixels(o0, X.dim(0), X.dim(2), X.dim(3));
  }

  ModelConfig cfg_;
  KanLayer fusion_msi_, fusion_hsi_, fusion_align_;
  std::vector<Block> blocks_;
  Tensor conv1_w_, conv1_b_, conv2_w_, conv2_b_;
};

}  // namespace hsrkan::model
