#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hsrkan/degradation.hpp"
#include "hsrkan/loss.hpp"
#include "hsrkan/metrics.hpp"
#include "hsrkan/model.hpp"

namespace hsrkan::train {

using model::HsrKanModel;
using model::ModelConfig;

struct TrainConfig {
  double lr0 = 4e-4;
  double decay = 0.1;
  std::size_t decay_every = 100;  // epochs
  std::size_t batch_size = 4;
  std::size_t epochs = 200;
  std::size_t max_steps = 0;  // 0: no step cap
  std::size_t eval_every = 10;  // epochs; the final epoch is always evaluated
  bool sparse_loss_enabled = true;
  loss::LossConfig loss{};
  std::uint64_t seed = 0;

  void validate() const {
    if (!(lr0 > 0.0)) throw ConfigError("lr0 must be positive");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (decay_every < 1) throw ConfigError("decay_every must be >= 1");
    if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
    loss.validate();
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"lr0", c.lr0},
                     {"decay", c.decay},
                     {"decay_every", c.decay_every},
                     {"batch_size", c.batch_size},
                     {"epochs", c.epochs},
                     {"max_steps", c.max_steps},
                     {"eval_every", c.eval_every},
                     {"sparse_loss_enabled", c.sparse_loss_enabled},
                     {"loss", c.loss},
                     {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  c = TrainConfig{};
  try {
    c.lr0 = j.value("lr0", c.lr0);
    c.decay = j.value("decay", c.decay);
    c.decay_every = j.value("decay_every", c.decay_every);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.max_steps = j.value("max_steps", c.max_steps);
    c.eval_every = j.value("eval_every", c.eval_every);
    c.sparse_loss_enabled = j.value("sparse_loss_enabled", c.sparse_loss_enabled);
    if (j.contains("loss")) c.loss = j.at("loss").get<loss::LossConfig>();
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
}

// lr0 * decay^floor(epoch / decay_every)
inline double lr_at(std::size_t epoch, const TrainConfig& cfg) {
  return cfg.lr0 * std::pow(cfg.decay, static_cast<double>(epoch / cfg.decay_every));
}

// ---------------------------------------------------------------------------
// Adam (beta1 0.9, beta2 0.999, eps 1e-8) with bias correction.

struct AdamState {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::uint64_t t = 0;
  std::vector<std::vector<double>> m, v;  // one per parameter, in parameter order
};

inline void adam_step(const std::vector<kan::NamedParameter>& params, AdamState& state, double lr) {
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.tensor.size(), 0.0);
      state.v.emplace_back(p.tensor.size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("adam_step: optimizer state does not match parameter list");
  ++state.t;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor p = params[k].tensor;
    auto& m = state.m[k];
    auto& v = state.v[k];
    if (m.size() != p.size()) throw ShapeError("adam_step: moment size mismatch for " + params[k].name);
    const auto g = p.grad();
    auto w = p.mutable_values();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g.empty() ? 0.0 : g[i];
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * gi;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * gi * gi;
      w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + state.eps);
    }
  }
}

// ---------------------------------------------------------------------------
// Checkpoints: "HSRKAN01", u64 LE manifest length, JSON manifest, then
// little-endian f64 payloads at the offsets listed in the manifest.

inline constexpr char kCheckpointMagic[8] = {'H', 'S', 'R', 'K', 'A', 'N', '0', '1'};

struct Counters {
  std::size_t epoch = 0;   // current epoch
  std::size_t cursor = 0;  // batches of the current epoch already taken
  std::size_t step = 0;    // optimizer steps taken overall
};

struct Checkpoint {
  ModelConfig model;
  TrainConfig train;
  Counters counters;
  std::string rng_state;  // generator state at the start of the current epoch
  std::uint64_t adam_t = 0;
  std::map<std::string, std::pair<Shape, std::vector<double>>> tensors;  // params and "adam.m."/"adam.v." moments
  std::vector<std::string> order;  // tensor order in the payload
};

namespace detail {
inline void put_f64(std::string& out, double v) {
  const auto u = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xFF));
}
inline double get_f64(const unsigned char* b) {
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(u);
}
}  // namespace detail

inline void write_checkpoint(std::ostream& os, const Checkpoint& ck) {
  nlohmann::json manifest;
  manifest["format"] = 1;
  manifest["model"] = ck.model;
  manifest["train"] = ck.train;
  manifest["counters"] = {{"epoch", ck.counters.epoch}, {"cursor", ck.counters.cursor}, {"step", ck.counters.step}};
  manifest["rng_state"] = ck.rng_state;
  manifest["adam_t"] = ck.adam_t;
  nlohmann::json entries = nlohmann::json::array();
  std::string payload;
  for (const auto& name : ck.order) {
    const auto& [shape, values] = ck.tensors.at(name);
    entries.push_back({{"name", name}, {"shape", shape}, {"dtype", "f64"}, {"offset", payload.size()}, {"count", values.size()}});
    for (double v : values) detail::put_f64(payload, v);
  }
  manifest["tensors"] = entries;
  const std::string text = manifest.dump();
  os.write(kCheckpointMagic, 8);
  data::detail::write_u64_le(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  os.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!os) throw FormatError("failed writing checkpoint");
}

inline Checkpoint read_checkpoint(std::istream& is) {
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kCheckpointMagic, 8) != 0) throw FormatError("not a checkpoint (bad magic)");
  const std::uint64_t len = data::detail::read_u64_le(is);
  if (len > (1u << 28)) throw FormatError("checkpoint manifest too large");
  std::string text(len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(len));
  if (!is) throw FormatError("truncated checkpoint manifest");
  const std::string payload((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  Checkpoint ck;
  try {
    const auto manifest = nlohmann::json::parse(text);
    ck.model = manifest.at("model").get<ModelConfig>();
    ck.train = manifest.at("train").get<TrainConfig>();
    const auto& c = manifest.at("counters");
    ck.counters = {c.at("epoch").get<std::size_t>(), c.at("cursor").get<std::size_t>(), c.at("step").get<std::size_t>()};
    ck.rng_state = manifest.at("rng_state").get<std::string>();
    ck.adam_t = manifest.at("adam_t").get<std::uint64_t>();
    for (const auto& e : manifest.at("tensors")) {
      const auto name = e.at("name").get<std::string>();
      const auto offset = e.at("offset").get<std::size_t>();
      const auto count = e.at("count").get<std::size_t>();
      if (e.at("dtype").get<std::string>() != "f64") throw FormatError("checkpoint tensor " + name + " is not f64");
      if (offset + 8 * count > payload.size()) throw FormatError("checkpoint payload truncated at " + name);
      std::vector<double> values(count);
      const auto* base = reinterpret_cast<const unsigned char*>(payload.data()) + offset;
      for (std::size_t i = 0; i < count; ++i) values[i] = detail::get_f64(base + 8 * i);
      ck.tensors[name] = {e.at("shape").get<Shape>(), std::move(values)};
      ck.order.push_back(name);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad checkpoint manifest: ") + e.what());
  }
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  write_checkpoint(os, ck);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open checkpoint " + path.string());
  return read_checkpoint(is);
}

// Copies checkpointed parameter values into a freshly constructed model.
inline void load_parameters(HsrKanModel& net, const Checkpoint& ck) {
  for (const auto& p : net.parameters()) {
    const auto it = ck.tensors.find(p.name);
    if (it == ck.tensors.end()) throw FormatError("checkpoint lacks parameter " + p.name);
    if (it->second.first != p.tensor.shape())
      throw FormatError("checkpoint parameter " + p.name + " has shape " + to_string(it->second.first));
    Tensor t = p.tensor;
    std::copy(it->second.second.begin(), it->second.second.end(), t.mutable_values().begin());
  }
}

// ---------------------------------------------------------------------------

struct StepRecord {
  std::size_t step = 0, epoch = 0;
  double lr = 0.0, l1 = 0.0, sparse_l1 = 0.0, sparse_entropy = 0.0, total = 0.0;
  std::optional<double> val_psnr;
};

inline std::string csv_header() { return "step,epoch,lr,l1,sparse_l1,sparse_entropy,total,val_psnr"; }

inline std::string csv_row(const StepRecord& r) {
  std::ostringstream os;
  os << std::setprecision(12) << r.step << ',' << r.epoch << ',' << r.lr << ',' << r.l1 << ',' << r.sparse_l1 << ','
     << r.sparse_entropy << ',' << r.total << ',';
  if (r.val_psnr) {
    if (std::isinf(*r.val_psnr))
      os << "inf";
    else
      os << *r.val_psnr;
  }
  return os.str();
}

// Forward in inference mode over a set of samples, one image at a time.
inline std::vector<data::HsiCube> predict(HsrKanModel& net, const std::vector<data::Sample>& samples) {
  NoGradGuard no_grad;
  std::vector<data::HsiCube> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(data::HsiCube::from_tensor(net.forward(s.x.to_tensor(), s.y.to_tensor())));
  return out;
}

// UP(Y) alone: the output of a model whose learned weights are all zero.
inline data::HsiCube upsample_baseline(const data::Sample& s, std::size_t scale,
                                       ops::Interpolation mode = ops::Interpolation::bicubic) {
  return data::HsiCube::from_tensor(ops::upsample(s.y.to_tensor(), scale, mode));
}

// Per-sample metrics averaged over the set.
inline metrics::MetricReport mean_report(const std::vector<data::HsiCube>& predictions,
                                         const std::vector<data::Sample>& samples, double scale) {
  metrics::MetricReport acc;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto r = metrics::evaluate(predictions[i], samples[i].z, scale);
    acc.psnr += r.psnr;
    acc.ssim += r.ssim;
    acc.sam += r.sam;
    acc.ergas += r.ergas;
  }
  const double n = static_cast<double>(samples.size());
  acc.psnr /= n;
  acc.ssim /= n;
  acc.sam /= n;
  acc.ergas /= n;
  return acc;
}

inline double mean_psnr(const std::vector<data::HsiCube>& predictions, const std::vector<data::Sample>& samples) {
  double acc = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) acc += metrics::psnr(predictions[i], samples[i].z);
  return acc / static_cast<double>(samples.size());
}

/// Deterministic mini-batch Adam training over a fixed split.
///
/// The loop is restartable at any step: a checkpoint stores the generator
/// state from the start of the current epoch plus the number of batches of
/// that epoch already consumed, so the epoch's permutation is regenerated.
class Trainer {
 public:
  Trainer(const ModelConfig& mcfg, const TrainConfig& tcfg, const data::Split& split)
      : net_(mcfg), cfg_(tcfg), split_(&split), rng_(tcfg.seed) {
    tcfg.validate();
    check_split();
    epoch_start_ = state_string();
  }

  Trainer(const Checkpoint& ck, const data::Split& split)
      : net_(ck.model), cfg_(ck.train), split_(&split), counters_(ck.counters) {
    check_split();
    load_parameters(net_, ck);
    std::istringstream(ck.rng_state) >> rng_;
    epoch_start_ = ck.rng_state;
    adam_.t = ck.adam_t;
    for (const auto& p : net_.parameters()) {
      const auto m = ck.tensors.find("adam.m." + p.name);
      const auto v = ck.tensors.find("adam.v." + p.name);
      if (m == ck.tensors.end() || v == ck.tensors.end()) {
        if (ck.adam_t == 0) continue;
        throw FormatError("checkpoint lacks optimizer moments for " + p.name);
      }
      adam_.m.push_back(m->second.second);
      adam_.v.push_back(v->second.second);
    }
  }

  HsrKanModel& model() { return net_; }
  const TrainConfig& config() const { return cfg_; }
  const Counters& counters() const { return counters_; }
  const AdamState& optimizer() const { return adam_; }

  bool finished() const {
    return counters_.epoch >= cfg_.epochs || (cfg_.max_steps != 0 && counters_.step >= cfg_.max_steps);
  }

  /// One optimizer step on the given training-sample indices.
  StepRecord step(const std::vector<std::size_t>& batch) {
    std::vector<const data::HsiCube*> xs, ys, zs;
    for (std::size_t i : batch) {
      xs.push_back(&split_->train.at(i).x);
      ys.push_back(&split_->train.at(i).y);
      zs.push_back(&split_->train.at(i).z);
    }
    const Tensor X = data::stack(xs), Y = data::stack(ys), Z = data::stack(zs);
    net_.zero_grad();
    Tape tape;
    TapeGuard guard(tape);
    const Tensor pred = net_.forward(X, Y, cfg_.sparse_loss_enabled);
    const auto terms = loss::total_loss(pred, Z, net_, cfg_.loss, cfg_.sparse_loss_enabled);
    StepRecord rec;
    rec.epoch = counters_.epoch;
    rec.lr = lr_at(counters_.epoch, cfg_);
    rec.l1 = terms.l1;
    rec.sparse_l1 = terms.sparse_l1;
    rec.sparse_entropy = terms.sparse_entropy;
    rec.total = terms.total.item();
    if (!std::isfinite(rec.total)) {
      const auto where = tape.first_non_finite();
      throw NumericalError("non-finite loss at step " + std::to_string(counters_.step) +
                           "; first non-finite tensor: " + where.value_or("none recorded (non-finite loss term)"));
    }
    tape.backward(terms.total);
    adam_step(net_.parameters(), adam_, rec.lr);
    ++counters_.step;
    rec.step = counters_.step;
    return rec;
  }

  /// Trains until the epoch budget or step cap is exhausted. Each record is
  /// handed to `sink` once complete (the last record of an evaluated epoch
  /// carries the validation PSNR).
  void run(const std::function<void(const StepRecord&)>& sink = {}) {
    while (!finished()) {
      const auto order = epoch_order();
      const std::size_t n_batches = (order.size() + cfg_.batch_size - 1) / cfg_.batch_size;
      std::optional<StepRecord> pending;
      while (counters_.cursor < n_batches && !(cfg_.max_steps != 0 && counters_.step >= cfg_.max_steps)) {
        const std::size_t b0 = counters_.cursor * cfg_.batch_size;
        const std::size_t b1 = std::min(order.size(), b0 + cfg_.batch_size);
        std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(b0),
                                       order.begin() + static_cast<std::ptrdiff_t>(b1));
        if (pending && sink) sink(*pending);
        pending = step(batch);
        ++counters_.cursor;
      }
      const bool epoch_done = counters_.cursor >= n_batches;
      if (epoch_done) {
        const bool last = counters_.epoch + 1 >= cfg_.epochs;
        if (pending && ((counters_.epoch + 1) % cfg_.eval_every == 0 || last) && !split_->val.empty())
          pending->val_psnr = validation_psnr();
        ++counters_.epoch;
        counters_.cursor = 0;
        epoch_start_ = state_string();
      } else if (pending && !split_->val.empty()) {
        pending->val_psnr = validation_psnr();  // stopped by the step cap
      }
      if (pending && sink) sink(*pending);
    }
  }

  double validation_psnr() { return mean_psnr(predict(net_, split_->val), split_->val); }

  double train_psnr() { return mean_psnr(predict(net_, split_->train), split_->train); }

  Checkpoint checkpoint() const {
    Checkpoint ck;
    ck.model = net_.config();
    ck.train = cfg_;
    ck.counters = counters_;
    ck.rng_state = epoch_start_;
    ck.adam_t = adam_.t;
    const auto params = net_.parameters();
    for (const auto& p : params) {
      ck.tensors[p.name] = {p.tensor.shape(), std::vector<double>(p.tensor.values().begin(), p.tensor.values().end())};
      ck.order.push_back(p.name);
    }
    if (!adam_.m.empty())
      for (std::size_t k = 0; k < params.size(); ++k) {
        ck.tensors["adam.m." + params[k].name] = {params[k].tensor.shape(), adam_.m[k]};
        ck.tensors["adam.v." + params[k].name] = {params[k].tensor.shape(), adam_.v[k]};
        ck.order.push_back("adam.m." + params[k].name);
        ck.order.push_back("adam.v." + params[k].name);
      }
    return ck;
  }

 private:
  void check_split() const {
    if (split_->train.empty()) throw ConfigError("training split is empty");
    const auto& mc = net_.config();
    for (const auto& s : split_->train) {
      if (s.z.bands != mc.hsi_bands || s.x.bands != mc.msi_bands)
        throw ConfigError("dataset band counts do not match the model config");
      if (s.x.height != mc.scale * s.y.height || s.x.width != mc.scale * s.y.width)
        throw ConfigError("dataset scale does not match the model config");
    }
  }

  std::string state_string() const {
    std::ostringstream os;
    os << rng_;
    return os.str();
  }

  // Permutation for the current epoch, drawn from the epoch-start state.
  std::vector<std::size_t> epoch_order() {
    std::istringstream(epoch_start_) >> rng_;
    std::vector<std::size_t> order(split_->train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(rng_() % i);
      std::swap(order[i - 1], order[j]);
    }
    return order;
  }

  HsrKanModel net_;
  TrainConfig cfg_;
  const data::Split* split_;
  std::mt19937_64 rng_;
  std::string epoch_start_;
  Counters counters_;
  AdamState adam_;
};

}  // namespace hsrkan::train
