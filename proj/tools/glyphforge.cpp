// glyphforge command-line driver.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error. Every run prints
// its resolved configuration as one JSON line on stderr.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "glyphforge/data.hpp"
#include "glyphforge/eval.hpp"
#include "glyphforge/geometry.hpp"
#include "glyphforge/gradsuite.hpp"
#include "glyphforge/image.hpp"
#include "glyphforge/kernels.hpp"
#include "glyphforge/ops.hpp"
#include "glyphforge/parallel.hpp"
#include "glyphforge/rng.hpp"
#include "glyphforge/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace glyphforge;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

json read_json_file(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw UsageError("cannot read config file " + path.string());
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    throw UsageError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
}

// Config-file overlay for the generic subcommands: keys are long flag names
// without dashes. Flags given on the command line win.
void overlay_options(CLI::App* sub, const std::string& config_path) {
  if (config_path.empty()) return;
  const json j = read_json_file(config_path);
  if (!j.is_object()) throw UsageError("config file must hold a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key == "config") throw UsageError("config files cannot nest");
    CLI::Option* opt = sub->get_option_no_throw("--" + key);
    if (!opt) throw UsageError("unknown config key '" + key + "' for " + sub->get_name());
    if (opt->count() > 0) continue;
    std::string text;
    if (value.is_string()) {
      text = value.get<std::string>();
    } else if (value.is_boolean()) {
      if (!value.get<bool>()) continue;
      text = "true";
    } else {
      text = value.dump();
    }
    opt->add_result(text);
    opt->run_callback();
  }
}

void require(bool present, const std::string& flag) {
  if (!present) throw UsageError("missing required option " + flag);
}

void print_config(const std::string& command, json j) {
  j["command"] = command;
  j["threads"] = worker_count();
  j["simd"] = std::string(kernels::isa_name(kernels::active_isa()));
  std::cerr << "resolved config: " << j.dump() << "\n";
}

std::string zero_pad(std::size_t v, int width) {
  std::string s = std::to_string(v);
  return std::string(s.size() < static_cast<std::size_t>(width) ? width - s.size() : 0, '0') + s;
}

// synth ------------------------------------------------------------------

struct SynthArgs {
  std::size_t classes = 0, per_class = 0, size = 64;
  double noise = data::TextureProfile{}.noise_amplitude;
  std::string out, config;
  std::optional<std::uint64_t> seed;
};

int run_synth(CLI::App* sub, SynthArgs& a) {
  overlay_options(sub, a.config);
  require(a.classes > 0, "--classes");
  require(a.per_class > 0, "--per-class");
  require(!a.out.empty(), "--out");
  require(a.seed.has_value(), "--seed");
  data::SyntheticGlyphSpec spec;
  spec.num_classes = a.classes;
  spec.image_size = a.size;
  spec.texture.noise_amplitude = a.noise;
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  print_config("synth", {{"classes", a.classes}, {"per_class", a.per_class}, {"size", a.size},
                         {"noise", a.noise}, {"out", a.out}, {"seed", *a.seed}, {"spec", spec}});
  const auto corpus = data::synth_generate(spec, a.per_class, *a.seed);
  data::write_corpus(corpus, spec, *a.seed, a.out);
  std::cout << "wrote " << corpus.sc.size() << " SC and " << corpus.pc.size() << " PC images to "
            << a.out << "\n";
  return 0;
}

// warp -------------------------------------------------------------------

struct WarpArgs {
  std::string in, out, config;
  bool tps_only = false, affine_only = false;
  std::size_t grid_n = 4;
  std::optional<std::uint64_t> seed;
};

int run_warp(CLI::App* sub, WarpArgs& a) {
  overlay_options(sub, a.config);
  require(!a.in.empty(), "--in");
  require(!a.out.empty(), "--out");
  require(a.seed.has_value(), "--seed");
  if (a.tps_only && a.affine_only) throw UsageError("--tps-only and --affine-only are exclusive");
  if (a.grid_n < 2) throw UsageError("--n must be at least 2");
  const auto mode = a.tps_only      ? geometry::WarpMode::tps_only
                    : a.affine_only ? geometry::WarpMode::affine_only
                                    : geometry::WarpMode::affine_tps;
  print_config("warp", {{"in", a.in}, {"out", a.out}, {"seed", *a.seed}, {"n", a.grid_n},
                        {"mode", a.tps_only ? "tps_only" : a.affine_only ? "affine_only" : "affine_tps"}});
  const Image img = load_image(a.in);
  Rng rng(*a.seed);
  const std::size_t flat = geometry::WarpParams::flat_size_for(a.grid_n);
  std::vector<double> raw(flat);
  for (auto& v : raw) v = rng.normal();
  const auto theta = ad::squash_warp_params(ad::Tensor<double>::from({1, flat}, raw), a.grid_n);
  const auto params = geometry::WarpParams::unflatten(theta.values(), a.grid_n);
  const auto grid = geometry::build_grid(params, img.height(), img.width(), mode);
  if (grid.tps_failed) std::cerr << "warning: TPS solve failed, applied the affine part only\n";
  const fs::path out(a.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  save_image(geometry::bilinear_sample(img, grid), out);
  return 0;
}

// train ------------------------------------------------------------------

struct TrainArgs {
  std::string sc, pc, out, config, resume;
  bool desk_scale = false, no_diversity = false, uniform_weights = false;
  bool deterministic = false, invert_polarity = false, quiet = false;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> iters, checkpoint_every;
  std::optional<std::uint64_t> stop_at;
};

training::TrainConfig resolve_train_config(const TrainArgs& a) {
  training::TrainConfig cfg = a.desk_scale ? training::TrainConfig::desk() : training::TrainConfig{};
  if (!a.config.empty()) {
    try {
      training::from_json(read_json_file(a.config), cfg);
    } catch (const json::exception& e) {
      throw UsageError(std::string("bad training config: ") + e.what());
    }
  }
  if (a.seed) cfg.seed = *a.seed;
  if (!a.sc.empty()) cfg.sc_dir = a.sc;
  if (!a.pc.empty()) cfg.pc_dir = a.pc;
  if (a.no_diversity) cfg.diversity = false;
  if (a.uniform_weights) cfg.stroke_weighting = false;
  if (a.deterministic) cfg.deterministic = true;
  if (a.invert_polarity) cfg.invert_polarity = true;
  if (a.checkpoint_every) cfg.checkpoint_every = *a.checkpoint_every;
  if (a.iters) {
    cfg.constant_iters = *a.iters / 2;
    cfg.decay_iters = *a.iters - cfg.constant_iters;
  }
  return cfg;
}

std::pair<std::vector<Image>, std::vector<Image>> load_corpora(const training::TrainConfig& cfg) {
  if (cfg.sc_dir.empty() || cfg.pc_dir.empty()) {
    throw UsageError("SC and PC directories are required (--sc, --pc or the config file)");
  }
  const auto sc = data::scan_dataset(cfg.sc_dir, cfg.net.image_size);
  const auto pc = data::scan_dataset(cfg.pc_dir, cfg.net.image_size);
  for (const auto* m : {&sc, &pc}) {
    for (const auto& s : m->skipped) std::cerr << "skipped " << s.path << ": " << s.reason << "\n";
  }
  return training::load_training_data(cfg, sc, pc);
}

int run_train(TrainArgs& a) {
  require(!a.out.empty(), "--out");
  std::unique_ptr<training::TrainState> state;
  if (!a.resume.empty()) {
    if (!a.config.empty() || a.desk_scale) {
      throw UsageError("--resume takes its configuration from the checkpoint");
    }
    state = training::load_checkpoint(a.resume);
    auto& cfg = state->config;
    if (a.seed && *a.seed != cfg.seed) throw UsageError("--seed differs from the checkpoint's seed");
    if (!a.sc.empty()) cfg.sc_dir = a.sc;
    if (!a.pc.empty()) cfg.pc_dir = a.pc;
    if (a.iters) {
      if (*a.iters < state->iteration) throw UsageError("--iters is below the checkpoint iteration");
      cfg.constant_iters = *a.iters / 2;
      cfg.decay_iters = *a.iters - cfg.constant_iters;
    }
    if (a.checkpoint_every) cfg.checkpoint_every = *a.checkpoint_every;
  } else {
    training::TrainConfig cfg = resolve_train_config(a);
    if (!a.seed && (a.config.empty() || !read_json_file(a.config).contains("seed"))) {
      throw UsageError("missing required option --seed");
    }
    try {
      cfg.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    state = std::make_unique<training::TrainState>(cfg);
  }
  json resolved = state->config;
  resolved["out"] = a.out;
  resolved["start_iteration"] = state->iteration;
  print_config("train", resolved);

  const auto [sc, pc] = load_corpora(state->config);
  training::TrainCallbacks cb;
  cb.stop_at = a.stop_at;
  const std::uint64_t every = std::max<std::uint64_t>(1, state->config.total_iters() / 20);
  if (!a.quiet) {
    cb.on_step = [every, total = state->config.total_iters()](const losses::LossReport& r) {
      if ((r.iter + 1) % every != 0 && r.iter + 1 != total) return;
      std::fprintf(stderr, "iter %llu/%llu  L_Gg %.4f  L_Dg %.4f  L_GXY_GYX %.4f  L_DY_DX %.4f  RER %+.3f\n",
                   static_cast<unsigned long long>(r.iter + 1), static_cast<unsigned long long>(total),
                   r.l_gg, r.l_dg, r.l_gxy_gyx, r.l_dy_dx, r.rer);
    };
  }
  training::train(*state, sc, pc, fs::path(a.out), cb);
  const bool done = state->iteration >= state->config.total_iters();
  std::cout << (done ? "finished " : "stopped after ") << state->iteration << " iterations; checkpoint "
            << (fs::path(a.out) / (done ? std::string("final.ckpt")
                                        : "ckpt_" + std::to_string(state->iteration) + ".ckpt"))
                   .string()
            << "\n";
  return 0;
}

// generate ---------------------------------------------------------------

struct GenerateArgs {
  std::string ckpt, in, out, config;
  std::size_t n = 0;
  std::optional<std::uint64_t> seed;
};

int run_generate(CLI::App* sub, GenerateArgs& a) {
  overlay_options(sub, a.config);
  require(!a.ckpt.empty(), "--ckpt");
  require(!a.in.empty(), "--in");
  require(!a.out.empty(), "--out");
  require(a.n > 0, "--n");
  require(a.seed.has_value(), "--seed");
  print_config("generate", {{"ckpt", a.ckpt}, {"in", a.in}, {"n", a.n}, {"seed", *a.seed}, {"out", a.out}});
  auto state = training::load_checkpoint(a.ckpt);
  std::vector<fs::path> inputs;
  if (fs::is_directory(a.in)) {
    inputs = data::list_images(a.in);
    if (inputs.empty()) throw std::runtime_error("no images under " + a.in);
  } else {
    inputs.push_back(a.in);
  }
  fs::create_directories(a.out);
  std::size_t written = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto samples = training::generate(*state, load_image(inputs[i]), a.n, *a.seed + i);
    // Flattened relative path keeps names unique across class folders.
    std::string stem = inputs.size() == 1 ? inputs[i].stem().string()
                                          : fs::relative(inputs[i], a.in).replace_extension().string();
    for (auto& ch : stem) {
      if (ch == '/' || ch == '\\') ch = '_';
    }
    for (std::size_t k = 0; k < samples.size(); ++k) {
      save_png(samples[k], fs::path(a.out) / (stem + "_" + zero_pad(k, 3) + ".png"));
      ++written;
    }
  }
  std::cout << "wrote " << written << " images to " << a.out << "\n";
  return 0;
}

// grad-check -------------------------------------------------------------

struct GradCheckArgs {
  std::string module = "all", json_out, config;
  double step = ad::GradCheckOptions{}.step;
  double tolerance = ad::GradCheckOptions{}.tolerance;
  std::optional<double> network_step, network_floor;
  std::size_t entries = gradsuite::SuiteOptions{}.entries_per_param;
  std::uint64_t seed = gradsuite::SuiteOptions{}.seed;
};

int run_grad_check(CLI::App* sub, GradCheckArgs& a) {
  overlay_options(sub, a.config);
  gradsuite::SuiteOptions opts;
  opts.check.step = a.step;
  opts.check.tolerance = a.tolerance;
  opts.network_step = a.network_step.value_or(a.step);
  if (a.network_floor) opts.network_floor = *a.network_floor;
  opts.entries_per_param = a.entries;
  opts.seed = a.seed;
  print_config("grad-check", {{"module", a.module}, {"step", opts.check.step},
                              {"network_step", opts.network_step}, {"network_floor", opts.network_floor},
                              {"tolerance", opts.check.tolerance}, {"entries", a.entries},
                              {"seed", a.seed}});
  std::vector<gradsuite::CaseResult> results;
  try {
    results = gradsuite::run(a.module, opts);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  bool ok = true;
  double total_seconds = 0.0;
  json report = json::array();
  for (const auto& r : results) {
    ok = ok && r.report.passed;
    total_seconds += r.seconds;
    std::printf("%-4s %-9s %-28s max_rel %.2e  kinks %zu/%zu  %.2fs\n", r.report.passed ? "ok" : "FAIL",
                r.suite.c_str(), r.name.c_str(), r.report.max_rel_error, r.report.kinks,
                r.report.entries.size(), r.seconds);
    report.push_back({{"suite", r.suite}, {"name", r.name}, {"passed", r.report.passed},
                      {"max_rel_error", r.report.max_rel_error}, {"kinks", r.report.kinks},
                      {"entries", r.report.entries.size()}, {"seconds", r.seconds}});
  }
  std::printf("%s: %zu cases in %.1fs\n", ok ? "passed" : "FAILED", results.size(), total_seconds);
  if (!a.json_out.empty()) std::ofstream(a.json_out) << report.dump(2) << "\n";
  return ok ? 0 : 1;
}

// eval -------------------------------------------------------------------

struct EvalArgs {
  std::string real, gen, out, config;
  std::size_t bins = 50;
  double significance = 0.05;
  std::optional<std::uint64_t> seed;
};

int run_eval(CLI::App* sub, EvalArgs& a) {
  overlay_options(sub, a.config);
  require(!a.real.empty(), "--real");
  require(!a.gen.empty(), "--gen");
  require(a.seed.has_value(), "--seed");
  if (a.bins < 2) throw UsageError("--bins must be at least 2");
  print_config("eval", {{"real", a.real}, {"gen", a.gen}, {"bins", a.bins},
                        {"significance", a.significance}, {"seed", *a.seed}});
  const auto real = data::load_image_set(a.real);
  if (real.empty()) throw std::runtime_error("no images under " + a.real);
  const auto gen = data::load_image_set(a.gen, real.front().height());
  if (gen.empty()) throw std::runtime_error("no images under " + a.gen);
  const auto model = eval::fit_bins(real, a.bins, *a.seed);
  const auto nj = eval::ndb_jsd(model, gen, a.significance);
  eval::EvalResult result{nj.ndb, model.k(), nj.jsd, gen.size() >= 2 ? eval::pairwise_diversity(gen) : 0.0,
                          real.size(), gen.size()};
  const json j = result;
  std::cout << j.dump() << "\n";
  if (!a.out.empty()) std::ofstream(a.out) << j.dump(2) << "\n";
  return 0;
}

// losses (audit) ---------------------------------------------------------

struct LossesArgs {
  std::string report, ckpt, sc, pc, config;
  std::optional<std::uint64_t> iter;
  double tolerance = 1e-6;
};

losses::LossReport pick_report(const fs::path& path, std::uint64_t iteration) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read report " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  const std::string text = ss.str();
  // A single JSON object, or JSON lines as written by train.
  const json whole = json::parse(text, nullptr, false);
  if (!whole.is_discarded() && whole.is_object()) return whole.get<losses::LossReport>();
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const json j = json::parse(line);
    if (j.at("iter").get<std::uint64_t>() == iteration) return j.get<losses::LossReport>();
  }
  throw std::runtime_error("no report for iteration " + std::to_string(iteration) + " in " +
                           path.string());
}

int run_losses(CLI::App* sub, LossesArgs& a) {
  overlay_options(sub, a.config);
  require(!a.report.empty(), "--report");
  require(!a.ckpt.empty(), "--ckpt");
  auto state = training::load_checkpoint(a.ckpt);
  if (!a.sc.empty()) state->config.sc_dir = a.sc;
  if (!a.pc.empty()) state->config.pc_dir = a.pc;
  const std::uint64_t iteration = a.iter.value_or(state->iteration);
  print_config("losses", {{"report", a.report}, {"ckpt", a.ckpt}, {"iter", iteration},
                          {"sc", state->config.sc_dir}, {"pc", state->config.pc_dir},
                          {"tolerance", a.tolerance}});
  const auto logged = pick_report(a.report, iteration);
  const auto [sc, pc] = load_corpora(state->config);
  const auto result = training::audit_report(logged, *state, sc, pc, a.tolerance);
  for (const auto& f : result.fields) {
    std::printf("%-4s %-14s logged %.10g  recomputed %.10g\n", f.match ? "ok" : "DIFF", f.name.c_str(),
                f.logged, f.recomputed);
  }
  std::printf("%s (max abs diff %.3g)\n", result.passed ? "report verified" : "REPORT MISMATCH",
              result.max_abs_diff);
  return result.passed ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"glyphforge: glyph transformation and texture transfer for character images"};
  app.require_subcommand(1);
  app.fallthrough(false);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Write synthetic SC/PC corpora");
  s->add_option("--classes", synth.classes, "Number of glyph classes");
  s->add_option("--per-class", synth.per_class, "Samples per class and domain");
  s->add_option("--out", synth.out, "Output directory");
  s->add_option("--seed", synth.seed, "Random seed");
  s->add_option("--size", synth.size, "Image side in pixels")->capture_default_str();
  s->add_option("--noise", synth.noise, "PC texture amplitude in [0,1]")->capture_default_str();
  s->add_option("--config", synth.config, "JSON file with option values");

  WarpArgs warp;
  auto* w = app.add_subcommand("warp", "Apply one random affine+TPS warp to an image");
  w->add_option("--in", warp.in, "Input image (PNG or PGM)");
  w->add_option("--out", warp.out, "Output image");
  w->add_flag("--tps-only", warp.tps_only, "Drop the affine part");
  w->add_flag("--affine-only", warp.affine_only, "Drop the TPS part");
  w->add_option("--seed", warp.seed, "Random seed");
  w->add_option("--n", warp.grid_n, "Control grid size N (N x N points)")->capture_default_str();
  w->add_option("--config", warp.config, "JSON file with option values");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train both GANs, writing checkpoints and a JSON-lines log");
  t->add_option("--sc", train.sc, "SC dataset root (class subdirectories)");
  t->add_option("--pc", train.pc, "PC dataset root (class subdirectories)");
  t->add_option("--out", train.out, "Checkpoint and log directory");
  t->add_flag("--desk-scale", train.desk_scale, "64x64, batch 8, 2000 iterations, channel multiplier 1/4");
  t->add_option("--config", train.config, "Training config JSON (flags win)");
  t->add_option("--seed", train.seed, "Random seed");
  t->add_option("--resume", train.resume, "Continue from a checkpoint");
  t->add_option("--iters", train.iters, "Total iterations (half constant, half decay)");
  t->add_option("--stop-at", train.stop_at, "Stop after this many completed iterations");
  t->add_option("--checkpoint-every", train.checkpoint_every, "Checkpoint period, 0 disables");
  t->add_flag("--no-diversity", train.no_diversity, "Drop the diversity loss");
  t->add_flag("--uniform-weights", train.uniform_weights, "Use W = 1 in the cycle loss");
  t->add_flag("--deterministic", train.deterministic, "Single-threaded kernels");
  t->add_flag("--invert-polarity", train.invert_polarity, "Light strokes on a dark background");
  t->add_flag("--quiet", train.quiet, "No progress lines");

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Sample PC-style images from a checkpoint");
  g->add_option("--ckpt", gen.ckpt, "Checkpoint file");
  g->add_option("--in", gen.in, "SC image or directory of images");
  g->add_option("--n", gen.n, "Samples per input");
  g->add_option("--seed", gen.seed, "Random seed");
  g->add_option("--out", gen.out, "Output directory");
  g->add_option("--config", gen.config, "JSON file with option values");

  GradCheckArgs gc;
  auto* c = app.add_subcommand("grad-check", "Finite-difference gradient suites");
  c->add_option("--module", gc.module, "all, ops, geometry or losses")
      ->check(CLI::IsMember({"all", "ops", "geometry", "losses"}))
      ->capture_default_str();
  c->add_option("--step", gc.step, "Central-difference step")->capture_default_str();
  c->add_option("--network-step", gc.network_step, "Step for network-sized cases (default --step)");
  c->add_option("--network-floor", gc.network_floor, "Denominator floor for network-sized cases");
  c->add_option("--tolerance", gc.tolerance, "Max relative error")->capture_default_str();
  c->add_option("--entries", gc.entries, "Sampled entries per network parameter")->capture_default_str();
  c->add_option("--seed", gc.seed, "Random seed")->capture_default_str();
  c->add_option("--json", gc.json_out, "Write per-case results here");
  c->add_option("--config", gc.config, "JSON file with option values");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "NDB, JSD and pairwise diversity as JSON");
  e->add_option("--real", ev.real, "Directory of real images");
  e->add_option("--gen", ev.gen, "Directory of generated images");
  e->add_option("--bins", ev.bins, "Number of k-means bins")->capture_default_str();
  e->add_option("--significance", ev.significance, "Two-proportion test level")->capture_default_str();
  e->add_option("--seed", ev.seed, "Random seed");
  e->add_option("--out", ev.out, "Also write the JSON here");
  e->add_option("--config", ev.config, "JSON file with option values");

  LossesArgs lo;
  auto* l = app.add_subcommand("losses", "Recompute a logged loss report from a checkpoint");
  l->add_option("--report", lo.report, "Report JSON or train_log.jsonl");
  l->add_option("--ckpt", lo.ckpt, "Checkpoint taken before the reported step");
  l->add_option("--iter", lo.iter, "Report iteration (default: the checkpoint's)");
  l->add_option("--sc", lo.sc, "SC dataset root (default: recorded in the checkpoint)");
  l->add_option("--pc", lo.pc, "PC dataset root (default: recorded in the checkpoint)");
  l->add_option("--tolerance", lo.tolerance, "Relative tolerance per field")->capture_default_str();
  l->add_option("--config", lo.config, "JSON file with option values");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    app.exit(ex);
    return 2;
  }

  CLI::App* active = app.get_subcommands().front();
  try {
    if (active == s) return run_synth(s, synth);
    if (active == w) return run_warp(w, warp);
    if (active == t) return run_train(train);
    if (active == g) return run_generate(g, gen);
    if (active == c) return run_grad_check(c, gc);
    if (active == e) return run_eval(e, ev);
    if (active == l) return run_losses(l, lo);
  } catch (const UsageError& ex) {
    std::cerr << "error: " << ex.what() << "\n\n" << active->help();
    return 2;
  } catch (const nn::ConfigError& ex) {
    std::cerr << "error: " << ex.what() << "\n\n" << active->help();
    return 2;
  } catch (const CLI::Error& ex) {
    std::cerr << "error: " << ex.what() << "\n\n" << active->help();
    return 2;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
  return 2;
}
