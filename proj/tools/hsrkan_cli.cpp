// hsrkan: synthetic data, training, evaluation and diagnostics from the shell.
//
// Exit codes: 0 success, 2 configuration / input error, 3 numerical failure
// (non-finite loss, failed gradient check), 1 anything else.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hsrkan/hsrkan.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace hsrkan;

namespace {

// Everything needed to rerun a command, written as <out>/manifest.json.
struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  json config_paths = json::object();
  json effective_config = json::object();
  std::uint64_t seed = 0;
  std::vector<std::string> artifacts;  // relative to the output directory
};

std::vector<std::string> g_argv;

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot write " + path.string());
  os << text;
  if (!os) throw ConfigError("write failed: " + path.string());
}

json read_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open " + path);
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void prepare_out(const fs::path& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) throw ConfigError("cannot create output directory " + out.string());
}

void write_manifest(const fs::path& out, RunManifest m) {
  m.argv = g_argv;
  m.artifacts.push_back("manifest.json");
  const json j = {{"command", m.command},
                  {"argv", m.argv},
                  {"config_paths", m.config_paths},
                  {"effective_config", m.effective_config},
                  {"seed", m.seed},
                  {"threads", thread_count()},
                  {"artifacts", m.artifacts},
                  {"version", kVersion}};
  write_text(out / "manifest.json", j.dump(2) + "\n");
}

std::string indexed(const std::string& prefix, std::size_t i, const std::string& ext) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04zu", i);
  return prefix + buf + ext;
}

// Ground-truth cubes of a data directory: every z_*.hsc in name order.
std::vector<std::pair<std::string, data::HsiCube>> load_cubes(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ConfigError("data directory " + dir.string() + " does not exist");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (e.is_regular_file() && name.rfind("z_", 0) == 0 && e.path().extension() == ".hsc") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ConfigError("no z_*.hsc cubes in " + dir.string());
  std::vector<std::pair<std::string, data::HsiCube>> out;
  for (const auto& f : files) out.emplace_back(f.filename().string(), data::load_hsc(f));
  return out;
}

data::SpectralResponse response_for(const std::string& csv, std::size_t bands) {
  auto R = csv.empty() ? data::SpectralResponse::gaussian_rgb(bands) : data::load_response_csv(csv);
  R.validate();
  if (R.cols != bands) throw ConfigError("spectral response has " + std::to_string(R.cols) + " columns, cubes have " +
                                         std::to_string(bands) + " bands");
  return R;
}

std::vector<data::Sample> make_samples(const std::vector<std::pair<std::string, data::HsiCube>>& cubes,
                                       const data::SpectralResponse& R, std::size_t scale) {
  std::vector<data::Sample> out;
  for (std::size_t i = 0; i < cubes.size(); ++i) out.push_back(data::make_sample(cubes[i].second, R, scale, i));
  return out;
}

// 8-bit binary PGM, max-normalised.
void write_pgm(const fs::path& path, const std::vector<double>& v, std::size_t h, std::size_t w) {
  const double peak = *std::max_element(v.begin(), v.end());
  std::string bytes = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  for (double x : v) bytes.push_back(static_cast<char>(peak > 0.0 ? std::lround(x / peak * 255.0) : 0));
  write_text(path, bytes);
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::uint64_t seed = 0;
  std::size_t bands = 31, size = 64, count = 8, endmembers = 4;
  std::string out;
};

int cmd_synth(const SynthArgs& a) {
  if (a.size == 0) throw ConfigError("--size must be positive");
  if (a.count == 0) throw ConfigError("--count must be positive");
  if (a.bands < 2) throw ConfigError("--bands must be at least 2");
  if (a.endmembers == 0) throw ConfigError("--endmembers must be positive");
  prepare_out(a.out);
  RunManifest m;
  m.command = "synth";
  m.seed = a.seed;
  m.effective_config = {{"seed", a.seed}, {"bands", a.bands}, {"size", a.size}, {"count", a.count}, {"endmembers", a.endmembers}};
  for (std::size_t i = 0; i < a.count; ++i) {
    const auto name = indexed("z_", i, ".hsc");
    data::save_hsc(fs::path(a.out) / name, data::synth_hsi(data::patch_seed(a.seed, i), a.bands, a.size, a.size, a.endmembers));
    m.artifacts.push_back(name);
  }
  write_manifest(a.out, m);
  std::cerr << "wrote " << a.count << " cubes to " << a.out << "\n";
  return 0;
}

struct DegradeArgs {
  std::string data, response, out;
  std::size_t scale = 4;
};

int cmd_degrade(const DegradeArgs& a) {
  if (a.scale == 0) throw ConfigError("--scale must be positive");
  const auto cubes = load_cubes(a.data);
  const auto R = response_for(a.response, cubes.front().second.bands);
  prepare_out(a.out);
  RunManifest m;
  m.command = "degrade";
  m.config_paths = {{"data", a.data}, {"response", a.response}};
  m.effective_config = {{"scale", a.scale}};
  for (std::size_t i = 0; i < cubes.size(); ++i) {
    const auto s = data::make_sample(cubes[i].second, R, a.scale, i);
    const auto stem = cubes[i].first.substr(2);  // "0003.hsc"
    data::save_hsc(fs::path(a.out) / ("x_" + stem), s.x);
    data::save_hsc(fs::path(a.out) / ("y_" + stem), s.y);
    m.artifacts.push_back("x_" + stem);
    m.artifacts.push_back("y_" + stem);
  }
  write_manifest(a.out, m);
  std::cerr << "wrote " << cubes.size() << " (X, Y) pairs to " << a.out << "\n";
  return 0;
}

struct TrainArgs {
  std::string model_config, train_config, data, out, response, resume;
  bool no_sparse = false, no_cab = false;
  std::optional<std::size_t> epochs, max_steps, batch_size, eval_every, val_count;
  std::optional<double> lr, lambda;
  std::optional<std::uint64_t> seed;
};

int cmd_train(const TrainArgs& a) {
  std::optional<train::Checkpoint> resume;
  model::ModelConfig mc;
  train::TrainConfig tc;
  if (!a.resume.empty()) {
    resume = train::load_checkpoint(a.resume);
    mc = resume->model;
    tc = resume->train;
  }
  if (!a.model_config.empty()) mc = read_json(a.model_config).get<model::ModelConfig>();
  if (!a.train_config.empty()) tc = read_json(a.train_config).get<train::TrainConfig>();
  if (a.no_cab) mc.use_cab = false;
  if (a.no_sparse) tc.sparse_loss_enabled = false;
  if (a.epochs) tc.epochs = *a.epochs;
  if (a.max_steps) tc.max_steps = *a.max_steps;
  if (a.batch_size) tc.batch_size = *a.batch_size;
  if (a.eval_every) tc.eval_every = *a.eval_every;
  if (a.lr) tc.lr0 = *a.lr;
  if (a.lambda) tc.loss.lambda = *a.lambda;
  if (a.seed) {
    tc.seed = *a.seed;
    mc.seed = *a.seed;
  }
  mc.validate();
  tc.validate();
  tc.loss.validate();
  if (resume && json(mc) != json(resume->model)) throw ConfigError("--resume: the model config differs from the checkpoint's");

  const auto cubes = load_cubes(a.data);
  if (cubes.front().second.bands != mc.hsi_bands)
    throw ConfigError("data has " + std::to_string(cubes.front().second.bands) + " bands, model expects " +
                      std::to_string(mc.hsi_bands));
  const auto R = response_for(a.response, mc.hsi_bands);
  if (R.rows != mc.msi_bands)
    throw ConfigError("spectral response has " + std::to_string(R.rows) + " rows, model expects " +
                      std::to_string(mc.msi_bands) + " MSI bands");
  if (cubes.size() < 2) throw ConfigError("training needs at least two cubes (one is held out)");
  const std::size_t n_val = a.val_count.value_or(std::max<std::size_t>(1, cubes.size() / 8));
  const auto split = data::split_dataset(make_samples(cubes, R, mc.scale), n_val);

  const json effective = {{"model", mc}, {"train", tc}, {"val_count", n_val}, {"train_count", split.train.size()}};
  std::cerr << "effective config: " << effective.dump() << "\n";

  prepare_out(a.out);
  const fs::path out(a.out);
  write_text(out / "config.json", effective.dump(2) + "\n");
  std::ofstream log(out / "log.csv", std::ios::binary);
  if (!log) throw ConfigError("cannot write " + (out / "log.csv").string());
  log << train::csv_header() << "\n";

  RunManifest m;
  m.command = "train";
  m.seed = tc.seed;
  m.config_paths = {{"model_config", a.model_config}, {"train_config", a.train_config}, {"data", a.data},
                    {"response", a.response}, {"resume", a.resume}};
  m.effective_config = effective;
  m.artifacts = {"config.json", "log.csv"};

  if (resume) resume->train = tc;
  auto trainer = resume ? train::Trainer(*resume, split) : train::Trainer(mc, tc, split);
  trainer.run([&](const train::StepRecord& r) {
    log << train::csv_row(r) << "\n";
    log.flush();
    if (r.val_psnr) std::cerr << "epoch " << r.epoch + 1 << " step " << r.step << " val PSNR " << *r.val_psnr << " dB\n";
  });
  train::save_checkpoint(out / "checkpoint.hsrk", trainer.checkpoint());
  m.artifacts.push_back("checkpoint.hsrk");
  write_manifest(out, m);
  return 0;
}

struct EvalArgs {
  std::string checkpoint, data, out, response;
  bool no_dumps = false;
};

int cmd_eval(const EvalArgs& a) {
  const auto ck = train::load_checkpoint(a.checkpoint);
  model::HsrKanModel net(ck.model);
  train::load_parameters(net, ck);
  const auto cubes = load_cubes(a.data);
  if (cubes.front().second.bands != ck.model.hsi_bands)
    throw ConfigError("data has " + std::to_string(cubes.front().second.bands) + " bands, checkpoint expects " +
                      std::to_string(ck.model.hsi_bands));
  const auto R = response_for(a.response, ck.model.hsi_bands);
  const auto samples = make_samples(cubes, R, ck.model.scale);
  const auto preds = train::predict(net, samples);

  prepare_out(a.out);
  const fs::path out(a.out);
  RunManifest m;
  m.command = "eval";
  m.seed = ck.model.seed;
  m.config_paths = {{"checkpoint", a.checkpoint}, {"data", a.data}, {"response", a.response}};
  m.effective_config = {{"model", ck.model}};

  json per_cube = json::array();
  std::vector<data::HsiCube> baseline;
  std::size_t sam_skipped = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& z = samples[i].z;
    const auto& p = preds[i];
    const auto rep = metrics::evaluate(p, z, static_cast<double>(ck.model.scale));
    sam_skipped += metrics::sam_detailed(p, z).skipped;
    per_cube.push_back({{"file", cubes[i].first}, {"metrics", rep}});
    baseline.push_back(train::upsample_baseline(samples[i], ck.model.scale, ck.model.upsample));
    if (a.no_dumps) continue;
    const auto stem = cubes[i].first.substr(2, cubes[i].first.size() - 6);
    data::save_hsc(out / ("pred_" + stem + ".hsc"), p);
    std::vector<double> err(z.plane(), 0.0);
    for (std::size_t b = 0; b < z.bands; ++b)
      for (std::size_t q = 0; q < z.plane(); ++q) {
        const double d = p.values[b * z.plane() + q] - z.values[b * z.plane() + q];
        err[q] += d * d / static_cast<double>(z.bands);
      }
    write_pgm(out / ("heatmap_" + stem + ".pgm"), err, z.height, z.width);
    m.artifacts.push_back("pred_" + stem + ".hsc");
    m.artifacts.push_back("heatmap_" + stem + ".pgm");
  }
  const auto mean = train::mean_report(preds, samples, static_cast<double>(ck.model.scale));
  const json report = {{"mean", mean},
                       {"upsample_baseline", train::mean_report(baseline, samples, static_cast<double>(ck.model.scale))},
                       {"sam_skipped_pixels", sam_skipped},
                       {"cubes", per_cube}};
  write_text(out / "report.json", report.dump(2) + "\n");
  m.artifacts.insert(m.artifacts.begin(), "report.json");
  write_manifest(out, m);
  std::cout << json(mean).dump() << "\n";
  return 0;
}

struct GradcheckArgs {
  std::string scope = "op", out;
  std::uint64_t seed = 0;
  std::size_t samples = 20;
};

int cmd_gradcheck(const GradcheckArgs& a) {
  gradcheck::Options opt;
  opt.samples = a.samples;
  opt.seed = a.seed;
  std::vector<gradcheck::Result> results;
  if (a.scope == "op")
    results = gradcheck::op_suite(a.seed, opt);
  else if (a.scope == "layer")
    results = gradcheck::layer_suite(a.seed, opt);
  else
    results = gradcheck::model_suite(a.seed, opt);

  std::size_t failed = 0;
  std::cout << std::left << std::setw(44) << "tensor" << std::right << std::setw(8) << "checked" << std::setw(12)
            << "max rel" << std::setw(8) << "index" << std::setw(15) << "analytic" << std::setw(15) << "numeric"
            << "  result\n";
  json rows = json::array();
  for (const auto& r : results) {
    failed += !r.pass;
    std::cout << std::left << std::setw(44) << r.name << std::right << std::setw(8) << r.checked << std::setw(12)
              << std::scientific << std::setprecision(2) << r.max_rel_error << std::setw(8) << r.worst_index
              << std::setw(15) << std::setprecision(6) << r.analytic << std::setw(15) << r.numeric << std::defaultfloat
              << "  " << (r.pass ? "PASS" : "FAIL") << "\n";
    rows.push_back({{"name", r.name},
                    {"checked", r.checked},
                    {"max_rel_error", r.max_rel_error},
                    {"worst_index", r.worst_index},
                    {"analytic", r.analytic},
                    {"numeric", r.numeric},
                    {"pass", r.pass}});
  }
  std::cout << results.size() - failed << "/" << results.size() << " passed (tolerance " << opt.tolerance << ")\n";
  if (!a.out.empty()) {
    prepare_out(a.out);
    write_text(fs::path(a.out) / "gradcheck.json", rows.dump(2) + "\n");
    RunManifest m;
    m.command = "gradcheck";
    m.seed = a.seed;
    m.effective_config = {{"scope", a.scope}, {"samples", a.samples}, {"eps", opt.eps}, {"tolerance", opt.tolerance}};
    m.artifacts = {"gradcheck.json"};
    write_manifest(a.out, m);
  }
  return failed == 0 ? 0 : 3;
}

struct MetricsArgs {
  std::string pred, ref, out;
  double scale = 4.0;
};

int cmd_metrics(const MetricsArgs& a) {
  const auto p = data::load_hsc(a.pred), r = data::load_hsc(a.ref);
  const auto rep = metrics::evaluate(p, r, a.scale);
  const std::string line = json(rep).dump();
  std::cout << line << "\n";
  if (!a.out.empty()) {
    prepare_out(a.out);
    write_text(fs::path(a.out) / "metrics.json", line + "\n");
    RunManifest m;
    m.command = "metrics";
    m.config_paths = {{"pred", a.pred}, {"ref", a.ref}};
    m.effective_config = {{"scale", a.scale}};
    m.artifacts = {"metrics.json"};
    write_manifest(a.out, m);
  }
  return 0;
}

struct ReportArgs {
  std::string config, out;
  bool as_json = false;
  std::optional<int> grid, order;
  std::optional<std::size_t> hidden, blocks;
  std::size_t height = 64, width = 64;
};

json report_json(const model::ModelConfig& cfg, std::size_t H, std::size_t W) {
  const auto pc = model::param_count(cfg);
  json breakdown = json::array();
  for (const auto& [name, n] : pc.breakdown) breakdown.push_back({{"module", name}, {"params", n}});
  auto next = cfg;
  next.spline.grid += 2;
  return {{"config", cfg},
          {"breakdown", breakdown},
          {"total_params", pc.total},
          {"kan_edges", pc.kan_edges},
          {"per_unit_grid", pc.per_unit_grid},
          {"per_unit_order", pc.per_unit_order},
          {"increment_grid_plus_2", model::param_count(next).total - pc.total},
          {"with_spline_scale", pc.with_spline_scale},
          {"forward_macs", model::forward_macs(cfg, H, W)},
          {"macs_size", {H, W}}};
}

int cmd_report(const ReportArgs& a) {
  model::ModelConfig cfg = a.config.empty() ? model::ModelConfig::full() : read_json(a.config).get<model::ModelConfig>();
  if (a.grid) cfg.spline.grid = *a.grid;
  if (a.order) cfg.spline.order = *a.order;
  if (a.hidden) cfg.hidden = *a.hidden;
  if (a.blocks) cfg.blocks = *a.blocks;
  cfg.validate();
  const json rep = report_json(cfg, a.height, a.width);
  if (a.as_json) {
    std::cout << rep.dump(2) << "\n";
  } else {
    std::cout << "C=" << cfg.hsi_bands << " c=" << cfg.msi_bands << " D=" << cfg.hidden << " L=" << cfg.blocks
              << " s=" << cfg.scale << " G=" << cfg.spline.grid << " k=" << cfg.spline.order
              << (cfg.use_cab ? "" : " (stacked KAN blocks)") << "\n\n";
    std::cout << std::left << std::setw(22) << "module" << std::right << std::setw(14) << "params" << "\n";
    for (const auto& row : rep["breakdown"])
      std::cout << std::left << std::setw(22) << row["module"].get<std::string>() << std::right << std::setw(14)
                << row["params"].get<std::size_t>() << "\n";
    const auto total = rep["total_params"].get<std::size_t>();
    std::cout << std::left << std::setw(22) << "total" << std::right << std::setw(14) << total << "  ("
              << std::fixed << std::setprecision(2) << static_cast<double>(total) / 1e6 << "M)\n"
              << std::defaultfloat;
    std::cout << "\nKAN edges              " << rep["kan_edges"] << "\n"
              << "params per unit G      " << rep["per_unit_grid"] << "\n"
              << "params per unit k      " << rep["per_unit_order"] << "\n"
              << "increment for G+2      " << rep["increment_grid_plus_2"] << "\n"
              << "with spline scale      " << rep["with_spline_scale"] << "\n"
              << "forward MACs at " << a.height << "x" << a.width << "  " << rep["forward_macs"] << "\n";
  }
  if (!a.out.empty()) {
    prepare_out(a.out);
    write_text(fs::path(a.out) / "report.json", rep.dump(2) + "\n");
    RunManifest m;
    m.command = "report";
    m.seed = cfg.seed;
    m.config_paths = {{"config", a.config}};
    m.effective_config = {{"model", cfg}};
    m.artifacts = {"report.json"};
    write_manifest(a.out, m);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  retain_freed_memory();
  g_argv.assign(argv, argv + argc);

  CLI::App app{"HSR-KAN hyperspectral super-resolution: data synthesis, training and evaluation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  std::function<int()> action;

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "write synthetic ground-truth cubes z_NNNN.hsc");
  synth->add_option("--seed", sa.seed, "dataset seed");
  synth->add_option("--bands", sa.bands, "spectral bands C");
  synth->add_option("--size", sa.size, "patch height = width");
  synth->add_option("--count", sa.count, "number of cubes");
  synth->add_option("--endmembers", sa.endmembers, "endmember spectra per scene");
  synth->add_option("--out", sa.out, "output directory")->required();
  synth->callback([&] { action = [&] { return cmd_synth(sa); }; });

  DegradeArgs da;
  auto* degrade = app.add_subcommand("degrade", "write the (X, Y) observations of every cube as f32 .hsc files");
  degrade->add_option("--data", da.data, "directory of z_*.hsc cubes")->required();
  degrade->add_option("--scale", da.scale, "spatial downsampling factor");
  degrade->add_option("--response", da.response, "spectral response CSV (default: Gaussian RGB)");
  degrade->add_option("--out", da.out, "output directory")->required();
  degrade->callback([&] { action = [&] { return cmd_degrade(da); }; });

  TrainArgs ta;
  auto* trn = app.add_subcommand("train", "train a model; writes log.csv, checkpoint.hsrk, config.json");
  trn->add_option("--model-config", ta.model_config, "model JSON");
  trn->add_option("--train-config", ta.train_config, "training JSON");
  trn->add_option("--data", ta.data, "directory of z_*.hsc cubes")->required();
  trn->add_option("--out", ta.out, "output directory")->required();
  trn->add_option("--response", ta.response, "spectral response CSV (default: Gaussian RGB)");
  trn->add_option("--resume", ta.resume, "continue from a checkpoint");
  trn->add_flag("--no-sparse-loss", ta.no_sparse, "train with the L1 term only");
  trn->add_flag("--no-cab", ta.no_cab, "replace attention blocks by stacked per-pixel KAN layers");
  trn->add_option("--epochs", ta.epochs);
  trn->add_option("--max-steps", ta.max_steps, "stop after this many optimizer steps (0: no cap)");
  trn->add_option("--batch-size", ta.batch_size);
  trn->add_option("--eval-every", ta.eval_every, "epochs between validation passes");
  trn->add_option("--val-count", ta.val_count, "cubes held out for validation (default: count/8, at least 1)");
  trn->add_option("--lr", ta.lr, "initial learning rate");
  trn->add_option("--lambda", ta.lambda, "sparse loss weight");
  trn->add_option("--seed", ta.seed, "model initialisation and shuffling seed");
  trn->callback([&] { action = [&] { return cmd_train(ta); }; });

  EvalArgs ea;
  auto* evl = app.add_subcommand("eval", "evaluate a checkpoint; writes report.json, pred_*.hsc, heatmap_*.pgm");
  evl->add_option("--checkpoint", ea.checkpoint)->required();
  evl->add_option("--data", ea.data, "directory of z_*.hsc cubes")->required();
  evl->add_option("--out", ea.out, "output directory")->required();
  evl->add_option("--response", ea.response, "spectral response CSV (default: Gaussian RGB)");
  evl->add_flag("--no-dumps", ea.no_dumps, "skip prediction cubes and heatmaps");
  evl->callback([&] { action = [&] { return cmd_eval(ea); }; });

  GradcheckArgs ga;
  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  gc->add_option("--scope", ga.scope)->check(CLI::IsMember({"op", "layer", "model"}));
  gc->add_option("--seed", ga.seed);
  gc->add_option("--samples", ga.samples, "indices checked per tensor");
  gc->add_option("--out", ga.out, "also write gradcheck.json here");
  gc->callback([&] { action = [&] { return cmd_gradcheck(ga); }; });

  MetricsArgs ma;
  auto* met = app.add_subcommand("metrics", "PSNR, SSIM, SAM and ERGAS of two cubes as one JSON line");
  met->add_option("pred", ma.pred)->required();
  met->add_option("ref", ma.ref)->required();
  met->add_option("--scale", ma.scale, "resolution ratio used by ERGAS");
  met->add_option("--out", ma.out, "also write metrics.json here");
  met->callback([&] { action = [&] { return cmd_metrics(ma); }; });

  ReportArgs ra;
  auto* rep = app.add_subcommand("report", "parameter and MAC counts for a model config");
  rep->add_option("--config", ra.config, "model JSON (default: D=256, L=4)");
  rep->add_option("--grid", ra.grid);
  rep->add_option("--order", ra.order);
  rep->add_option("--hidden", ra.hidden);
  rep->add_option("--blocks", ra.blocks);
  rep->add_option("--height", ra.height, "image height for the MAC estimate");
  rep->add_option("--width", ra.width, "image width for the MAC estimate");
  rep->add_flag("--json", ra.as_json);
  rep->add_option("--out", ra.out, "also write report.json here");
  rep->callback([&] { action = [&] { return cmd_report(ra); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    return action();
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return 3;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ShapeError& e) {
    std::cerr << "shape error: " << e.what() << "\n";
    return 2;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
