#include "glyphforge/training.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

#include "glyphforge/eval.hpp"
#include "glyphforge/parallel.hpp"

namespace glyphforge::training {

namespace fs = std::filesystem;
using losses::LossReport;

// Config -----------------------------------------------------------------

void TrainConfig::validate() const {
  net.validate();
  if (batch == 0) throw nn::ConfigError("batch must be >= 1");
  if (!(lambda >= 0.0)) throw nn::ConfigError("lambda must be >= 0");
  if (!(c >= 1.0)) throw nn::ConfigError("C must be >= 1");
  if (!(m > 1.0)) throw nn::ConfigError("M must exceed 1");
  if (!(lr_gtg >= 0.0) || !(lr_ttg >= 0.0)) throw nn::ConfigError("learning rates must be >= 0");
}

TrainConfig TrainConfig::desk() {
  TrainConfig c;
  c.net = nn::NetConfig::desk_scale();
  c.batch = 8;
  c.constant_iters = 1000;
  c.decay_iters = 1000;
  c.desk_scale = true;
  return c;
}

TrainConfig TrainConfig::tiny() {
  TrainConfig c;
  c.net = nn::NetConfig::tiny();
  c.batch = 4;
  c.constant_iters = 25;
  c.decay_iters = 25;
  c.checkpoint_every = 0;
  return c;
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"net", c.net},
                     {"lambda", c.lambda},
                     {"C", c.c},
                     {"M", c.m},
                     {"batch", c.batch},
                     {"lr_gtg", c.lr_gtg},
                     {"lr_ttg", c.lr_ttg},
                     {"constant_iters", c.constant_iters},
                     {"decay_iters", c.decay_iters},
                     {"seed", c.seed},
                     {"desk_scale", c.desk_scale},
                     {"checkpoint_every", c.checkpoint_every},
                     {"diversity", c.diversity},
                     {"stroke_weighting", c.stroke_weighting},
                     {"deterministic", c.deterministic},
                     {"invert_polarity", c.invert_polarity},
                     {"sc_dir", c.sc_dir},
                     {"pc_dir", c.pc_dir}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  if (!j.is_object()) throw nn::ConfigError("training config must be a JSON object");
  static const char* known[] = {"net",         "lambda",         "C",
                                "M",           "batch",          "lr_gtg",
                                "lr_ttg",      "constant_iters", "decay_iters",
                                "seed",        "desk_scale",     "checkpoint_every",
                                "diversity",   "stroke_weighting", "deterministic",
                                "invert_polarity", "sc_dir",  "pc_dir"};
  for (const auto& [k, v] : j.items()) {
    if (std::none_of(std::begin(known), std::end(known), [&](const char* s) { return k == s; })) {
      throw nn::ConfigError("unknown training config key '" + k + "'");
    }
  }
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  // desk_scale first so explicit keys in the same object still win.
  if (j.contains("desk_scale") && j.at("desk_scale").get<bool>() && !c.desk_scale) {
    const TrainConfig d = TrainConfig::desk();
    c.net = d.net;
    c.batch = d.batch;
    c.constant_iters = d.constant_iters;
    c.decay_iters = d.decay_iters;
    c.desk_scale = true;
  }
  if (j.contains("net")) nn::from_json(j.at("net"), c.net);
  get("lambda", c.lambda);
  get("C", c.c);
  get("M", c.m);
  get("batch", c.batch);
  get("lr_gtg", c.lr_gtg);
  get("lr_ttg", c.lr_ttg);
  get("constant_iters", c.constant_iters);
  get("decay_iters", c.decay_iters);
  get("seed", c.seed);
  get("desk_scale", c.desk_scale);
  get("checkpoint_every", c.checkpoint_every);
  get("diversity", c.diversity);
  get("stroke_weighting", c.stroke_weighting);
  get("deterministic", c.deterministic);
  get("invert_polarity", c.invert_polarity);
  get("sc_dir", c.sc_dir);
  get("pc_dir", c.pc_dir);
}

// State ------------------------------------------------------------------

namespace {

constexpr std::uint64_t kNoiseStream = 0x9e3779b97f4a7c15ULL;

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

const TrainConfig& validated(const TrainConfig& c) {
  c.validate();
  return c;
}

}  // namespace

TrainState::TrainState(const TrainConfig& cfg)
    : config(validated(cfg)),
      init_rng(cfg.seed),
      nets(nn::build_default_nets<float>(cfg.net, init_rng)),
      opt_gtg_gen(nets.gtg.generator_parameters()),
      opt_gtg_disc(nets.gtg.disc.parameters()),
      opt_ttg_gen(nets.ttg.generator_parameters()),
      opt_ttg_disc(nets.ttg.discriminator_parameters()),
      rng(cfg.seed ^ kNoiseStream) {}

std::vector<ad::NamedTensor<float>> TrainState::all_tensors() const {
  auto out = nets.gtg.parameters();
  for (auto& p : nets.ttg.parameters()) out.push_back(p);
  for (auto& b : nets.gtg.buffers()) out.push_back(b);
  for (auto& b : nets.ttg.buffers()) out.push_back(b);
  return out;
}

std::vector<ad::Adam<float>*> TrainState::optimizers() {
  return {&opt_gtg_gen, &opt_gtg_disc, &opt_ttg_gen, &opt_ttg_disc};
}

// Batches ----------------------------------------------------------------

Tensor<float> to_batch(const std::vector<Image>& images, const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw TrainingError("empty batch");
  const std::size_t h = images.at(indices[0]).height(), w = images.at(indices[0]).width();
  std::vector<float> v;
  v.reserve(indices.size() * h * w);
  for (std::size_t i : indices) {
    const Image& img = images.at(i);
    if (img.height() != h || img.width() != w) throw TrainingError("batch images differ in size");
    for (double p : img.data()) v.push_back(static_cast<float>(p));
  }
  return Tensor<float>::from({indices.size(), 1, h, w}, std::move(v));
}

std::vector<Image> from_batch(const Tensor<float>& t) {
  if (t.rank() != 4 || t.dim(1) != 1) throw ad::ShapeError("from_batch: expected [B, 1, H, W]");
  const std::size_t b = t.dim(0), h = t.dim(2), w = t.dim(3);
  std::vector<Image> out;
  for (std::size_t i = 0; i < b; ++i) {
    std::vector<double> px(h * w);
    for (std::size_t p = 0; p < h * w; ++p) px[p] = t.values()[i * h * w + p];
    out.emplace_back(h, w, std::move(px));
  }
  return out;
}

std::vector<std::size_t> batch_indices(std::uint64_t seed, std::uint64_t stream,
                                       std::uint64_t iteration, std::size_t batch, std::size_t n) {
  if (n == 0) throw TrainingError("cannot sample from an empty dataset");
  std::vector<std::size_t> out;
  out.reserve(batch);
  std::uint64_t cached_epoch = ~0ULL;
  std::vector<std::size_t> perm(n);
  for (std::size_t j = 0; j < batch; ++j) {
    const std::uint64_t pos = iteration * batch + j;
    const std::uint64_t epoch = pos / n;
    if (epoch != cached_epoch) {
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      Rng r(mix(seed ^ mix(stream) ^ mix(epoch + 1)));
      for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[r.below(i)]);
      cached_epoch = epoch;
    }
    out.push_back(perm[pos % n]);
  }
  return out;
}

// Step -------------------------------------------------------------------

namespace {

Tensor<float> noise(Rng& rng, std::size_t batch, std::size_t dim) {
  std::vector<float> v(batch * dim);
  for (auto& e : v) e = static_cast<float>(rng.normal());
  return Tensor<float>::from({batch, dim}, std::move(v));
}

void check_finite(const Tensor<float>& loss, const char* phase) {
  if (!std::isfinite(loss.item())) {
    throw ad::NonFiniteError(std::string("non-finite loss in phase ") + phase);
  }
}

void zero_all(TrainState& s) {
  for (auto* o : s.optimizers()) o->zero_grad();
}

void step_with(ad::Adam<float>& opt, double lr, const char* phase) {
  try {
    opt.step(lr);
  } catch (const ad::NonFiniteError& e) {
    throw ad::NonFiniteError(std::string(phase) + ": " + e.what());
  }
}

bool has_nonzero_grad(const ad::Adam<float>& opt) {
  for (const auto& p : opt.params()) {
    if (!p.tensor.has_grad()) continue;
    for (float g : p.tensor.grad()) {
      if (g != 0.0f) return true;
    }
  }
  return false;
}

}  // namespace

LossReport train_step(TrainState& s, const Tensor<float>& x, const Tensor<float>& y) {
  const TrainConfig& cfg = s.config;
  const std::size_t size = cfg.net.image_size;
  const ad::Shape expect{x.dim(0), 1, size, size};
  if (x.shape() != expect || y.rank() != 4 || y.dim(1) != 1 || y.dim(2) != size || y.dim(3) != size) {
    throw ad::ShapeError("train_step: batches must be [B, 1, " + std::to_string(size) + ", " +
                         std::to_string(size) + "], got " + ad::shape_str(x.shape()) + " and " +
                         ad::shape_str(y.shape()));
  }
  const std::size_t b = x.dim(0);
  auto& gtg = s.nets.gtg;
  auto& ttg = s.nets.ttg;
  gtg.set_training(true);
  ttg.set_training(true);
  const double lr_g = ad::LrSchedule{cfg.lr_gtg, cfg.constant_iters, cfg.decay_iters}.rate(s.iteration);
  const double lr_t = ad::LrSchedule{cfg.lr_ttg, cfg.constant_iters, cfg.decay_iters}.rate(s.iteration);

  LossReport report;
  report.iter = s.iteration;

  // (1) GTG generator side.
  {
    const char* phase = "gtg-generator";
    zero_all(s);
    const std::size_t fdim = cfg.net.feature_dim();
    Tensor<float> z1 = noise(s.rng, b, fdim);
    Tensor<float> z2 = noise(s.rng, b, fdim);
    Tensor<float> feature = nn::encode(gtg, x);
    Tensor<float> theta1 = nn::predict_theta(gtg, feature, z1);
    Tensor<float> x_t = nn::warp(cfg.net, x, theta1);
    Tensor<float> x_rec = gtg.recon_x.forward(theta1);
    Tensor<float> z_rec = gtg.recon_z.forward(theta1);
    auto snr = losses::snr_loss(x, x_rec, z1, z_rec, losses::SnrConfig{cfg.m});
    Tensor<float> adv = losses::gtg_gen_loss(gtg.disc, x_t);
    Tensor<float> total = ad::add(adv, snr.loss);
    if (cfg.diversity) {
      Tensor<float> theta2 = nn::predict_theta(gtg, feature, z2);
      Tensor<float> div = losses::diversity_loss(theta1, theta2);
      report.l_div = div.item();
      total = ad::add(total, div);
    }
    check_finite(total, phase);
    report.l_gg = total.item();
    report.l_snr = snr.loss.item();
    report.rer = snr.rer;
    report.alpha = snr.alpha;
    report.rer_clamped = snr.clamped;
    total.backward();
    step_with(s.opt_gtg_gen, lr_g, phase);
  }

  // (2) D_g on the refreshed x_t against destylized targets. G_YX is not
  // updated before phase 3, so its recorded output is reused there; D_g
  // only sees the detached copy.
  Tensor<float> x_t, g_yx_y;
  {
    const char* phase = "gtg-discriminator";
    zero_all(s);
    g_yx_y = ttg.gen_yx.forward(y);
    Tensor<float> y_d = ad::detach(g_yx_y);
    {
      ad::NoGradGuard guard;
      Tensor<float> z = noise(s.rng, b, cfg.net.feature_dim());
      x_t = nn::warp(cfg.net, x, nn::predict_theta(gtg, nn::encode(gtg, x), z));
    }
    Tensor<float> loss = losses::gtg_disc_loss(gtg.disc, x_t, y_d);
    check_finite(loss, phase);
    report.l_dg = loss.item();
    loss.backward();
    step_with(s.opt_gtg_disc, lr_g, phase);
  }

  // (3) TTG generators; x_t is a constant here.
  Tensor<float> fake_y, fake_x;
  {
    const char* phase = "ttg-generator";
    zero_all(s);
    Tensor<float> w;
    if (cfg.stroke_weighting) {
      auto bw = losses::stroke_weights(x_t, cfg.c, BinarizeMethod::otsu(), cfg.invert_polarity);
      w = bw.weights;
      report.weight_degenerate = bw.degenerate;
    } else {
      w = Tensor<float>::full(x_t.shape(), 1.0f);
    }
    auto r = losses::ttg_gen_loss(ttg, x_t, y, w, cfg.lambda, g_yx_y);
    check_finite(r.total, phase);
    report.l_gxy_gyx = r.total.item();
    report.l_sacyc = r.cycle.item();
    r.total.backward();
    if (has_nonzero_grad(s.opt_gtg_gen) || has_nonzero_grad(s.opt_gtg_disc)) {
      throw TrainingError("gradient crossed the GTG/TTG boundary");
    }
    step_with(s.opt_ttg_gen, lr_t, phase);
    fake_y = ad::detach(r.fake_y);
    fake_x = ad::detach(r.fake_x);
  }

  // (4) TTG discriminators on detached generator outputs.
  {
    const char* phase = "ttg-discriminator";
    zero_all(s);
    Tensor<float> loss = losses::ttg_disc_loss(ttg, x, fake_y, y, fake_x);
    check_finite(loss, phase);
    report.l_dy_dx = loss.item();
    loss.backward();
    step_with(s.opt_ttg_disc, lr_t, phase);
  }
  zero_all(s);
  ++s.iteration;
  return report;
}

// Loop -------------------------------------------------------------------

std::pair<std::vector<Image>, std::vector<Image>> load_training_data(
    const TrainConfig& config, const data::DatasetManifest& sc, const data::DatasetManifest& pc) {
  for (const auto* m : {&sc, &pc}) {
    if (m->image_size != config.net.image_size) {
      throw TrainingError("dataset image size " + std::to_string(m->image_size) +
                          " does not match the configured " +
                          std::to_string(config.net.image_size));
    }
  }
  if (sc.entries.empty()) throw TrainingError("SC dataset is empty");
  if (pc.entries.empty()) throw TrainingError("PC dataset is empty");
  return {sc.load_all(), pc.load_all()};
}

namespace {


void check_sizes(const std::vector<Image>& set, std::size_t size, const char* name) {
  if (set.empty()) throw TrainingError(std::string(name) + " dataset is empty");
  for (const auto& img : set) {
    if (img.height() != size || img.width() != size) {
      throw TrainingError(std::string(name) + " image is " + std::to_string(img.height()) + "x" +
                          std::to_string(img.width()) + ", config expects " +
                          std::to_string(size) + "x" + std::to_string(size));
    }
  }
}

void write_atomic(const fs::path& path, const std::string& bytes) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw TrainingError("cannot write " + tmp.string());
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw TrainingError("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

}  // namespace

LossReport dataset_step(TrainState& state, const std::vector<Image>& sc,
                        const std::vector<Image>& pc) {
  const TrainConfig& cfg = state.config;
  const std::uint64_t t = state.iteration;
  Tensor<float> x = to_batch(sc, batch_indices(cfg.seed, kScStream, t, cfg.batch, sc.size()));
  Tensor<float> y = to_batch(pc, batch_indices(cfg.seed, kPcStream, t, cfg.batch, pc.size()));
  return train_step(state, x, y);
}

AuditResult audit_report(const LossReport& logged, TrainState& state, const std::vector<Image>& sc,
                         const std::vector<Image>& pc, double tolerance) {
  if (logged.iter != state.iteration) {
    throw TrainingError("audit: report is for iteration " + std::to_string(logged.iter) +
                        " but the checkpoint is at iteration " + std::to_string(state.iteration));
  }
  check_sizes(sc, state.config.net.image_size, "SC");
  check_sizes(pc, state.config.net.image_size, "PC");
  const LossReport again = dataset_step(state, sc, pc);
  AuditResult result;
  auto field = [&](const char* name, double a, double b) {
    const double diff = std::abs(a - b);
    const bool ok = diff <= tolerance * std::max(1.0, std::abs(a));
    result.fields.push_back({name, a, b, ok});
    result.max_abs_diff = std::max(result.max_abs_diff, diff);
    result.passed = result.passed && ok;
  };
  field("L_Gg", logged.l_gg, again.l_gg);
  field("L_Dg", logged.l_dg, again.l_dg);
  field("L_GXY_GYX", logged.l_gxy_gyx, again.l_gxy_gyx);
  field("L_DY_DX", logged.l_dy_dx, again.l_dy_dx);
  field("L_snr", logged.l_snr, again.l_snr);
  field("RER", logged.rer, again.rer);
  field("alpha", logged.alpha, again.alpha);
  field("L_div", logged.l_div, again.l_div);
  field("L_sacyc", logged.l_sacyc, again.l_sacyc);
  field("w_degenerate", static_cast<double>(logged.weight_degenerate),
        static_cast<double>(again.weight_degenerate));
  return result;
}

void train(TrainState& state, const std::vector<Image>& sc, const std::vector<Image>& pc,
           const std::optional<fs::path>& out, const TrainCallbacks& callbacks) {
  const TrainConfig& cfg = state.config;
  check_sizes(sc, cfg.net.image_size, "SC");
  check_sizes(pc, cfg.net.image_size, "PC");
  const std::size_t saved_workers = worker_count();
  if (cfg.deterministic) set_worker_count(0);
  struct Restore {
    std::size_t n;
    ~Restore() { set_worker_count(n); }
  } restore{saved_workers};

  std::ofstream log;
  if (out) {
    fs::create_directories(*out);
    log.open(*out / "train_log.jsonl", std::ios::app);
    if (!log) throw TrainingError("cannot open training log in " + out->string());
  }
  const std::uint64_t end = std::min<std::uint64_t>(cfg.total_iters(),
                                                    callbacks.stop_at.value_or(cfg.total_iters()));
  while (state.iteration < end) {
    std::string before;
    if (out) before = checkpoint_bytes(state);
    LossReport report;
    try {
      report = dataset_step(state, sc, pc);
    } catch (const ad::NonFiniteError&) {
      if (out) write_atomic(*out / "pre_failure.ckpt", before);
      throw;
    }
    if (log) {
      nlohmann::json j = report;
      log << j.dump() << "\n";
      log.flush();
    }
    if (callbacks.on_step) callbacks.on_step(report);
    if (out && cfg.checkpoint_every > 0 && state.iteration % cfg.checkpoint_every == 0) {
      save_checkpoint(state, *out / ("ckpt_" + std::to_string(state.iteration) + ".ckpt"));
    }
  }
  if (!out) return;
  if (state.iteration >= cfg.total_iters()) {
    save_checkpoint(state, *out / "final.ckpt");
  } else {
    save_checkpoint(state, *out / ("ckpt_" + std::to_string(state.iteration) + ".ckpt"));
  }
}

// Inference --------------------------------------------------------------

namespace {

struct EvalMode {
  TrainState& s;
  explicit EvalMode(TrainState& st) : s(st) {
    s.nets.gtg.set_training(false);
    s.nets.ttg.set_training(false);
  }
  ~EvalMode() {
    s.nets.gtg.set_training(true);
    s.nets.ttg.set_training(true);
  }
};

}  // namespace

std::vector<Image> generate(TrainState& state, const Image& x, std::size_t num_samples,
                            std::uint64_t seed) {
  if (num_samples == 0) return {};
  const std::size_t size = state.config.net.image_size;
  Image src = (x.height() == size && x.width() == size) ? x : resize(x, size, size);
  EvalMode mode(state);
  ad::NoGradGuard guard;
  Rng rng(seed);
  std::vector<Image> batch(num_samples, src);
  std::vector<std::size_t> idx(num_samples);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Tensor<float> xs = to_batch(batch, idx);
  Tensor<float> z = noise(rng, num_samples, state.config.net.feature_dim());
  auto& gtg = state.nets.gtg;
  Tensor<float> x_t = nn::warp(state.config.net, xs, nn::predict_theta(gtg, nn::encode(gtg, xs), z));
  std::vector<Image> out = from_batch(state.nets.ttg.gen_xy.forward(x_t));
  if (x.height() != size || x.width() != size) {
    for (auto& img : out) img = resize(img, x.height(), x.width());
  }
  for (auto& img : out) img.clamp();
  return out;
}

double generation_diversity(TrainState& state, const std::vector<Image>& inputs,
                            std::size_t samples_per_input, std::uint64_t seed) {
  if (inputs.empty()) throw TrainingError("no inputs for diversity");
  double total = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    total += eval::pairwise_diversity(generate(state, inputs[i], samples_per_input, mix(seed + i)));
  }
  return total / static_cast<double>(inputs.size());
}

double foreground_cycle_error(TrainState& state, const std::vector<Image>& inputs) {
  if (inputs.empty()) throw TrainingError("no inputs for cycle error");
  EvalMode mode(state);
  ad::NoGradGuard guard;
  std::vector<std::size_t> idx(inputs.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Tensor<float> xs = to_batch(inputs, idx);
  Tensor<float> rec = state.nets.ttg.gen_yx.forward(state.nets.ttg.gen_xy.forward(xs));
  const std::size_t hw = inputs.front().size();
  double err = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const BinaryMask mask =
        binarize(inputs[i], BinarizeMethod::otsu(), state.config.invert_polarity).mask;
    for (std::size_t p = 0; p < hw; ++p) {
      if (!mask[p]) continue;
      err += std::abs(static_cast<double>(rec.values()[i * hw + p]) - inputs[i].data()[p]);
      ++count;
    }
  }
  if (count == 0) throw TrainingError("inputs have no foreground pixels");
  return err / static_cast<double>(count);
}

// Checkpoints -------------------------------------------------------------

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

class Writer {
 public:
  template <typename U>
  void pod(U v) {
    buf_.append(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    buf_ += s;
  }
  void floats(const std::vector<float>& v) {
    pod<std::uint64_t>(v.size());
    buf_.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(float));
  }
  void raw(const char* p, std::size_t n) { buf_.append(p, n); }
  std::string take() { return std::move(buf_); }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(const std::string& b) : b_(b) {}
  template <typename U>
  U pod() {
    need(sizeof(U));
    U v;
    std::memcpy(&v, b_.data() + pos_, sizeof v);
    pos_ += sizeof v;
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    need(n);
    std::string s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::vector<float> floats() {
    const auto n = pod<std::uint64_t>();
    need(n * sizeof(float));
    std::vector<float> v(n);
    std::memcpy(v.data(), b_.data() + pos_, n * sizeof(float));
    pos_ += n * sizeof(float);
    return v;
  }
  std::string raw(std::size_t n) {
    need(n);
    std::string s = b_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  void need(std::size_t n) const {
    if (n > b_.size() - pos_) throw TrainingError("checkpoint is truncated");
  }
  const std::string& b_;
  std::size_t pos_ = 0;
};

const char* kGroupNames[] = {"gtg_generator", "gtg_discriminator", "ttg_generators",
                             "ttg_discriminators"};

}  // namespace

std::string checkpoint_bytes(TrainState& state) {
  Writer w;
  w.raw(kCheckpointMagic, sizeof kCheckpointMagic - 1);
  w.pod<std::uint32_t>(kCheckpointVersion);
  nlohmann::json cfg = state.config;
  w.str(cfg.dump());

  const auto tensors = state.all_tensors();
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    w.str(t.name);
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(t.tensor.rank()));
    for (std::size_t d : t.tensor.shape()) w.pod<std::uint64_t>(d);
    w.floats(t.tensor.storage());
  }

  const auto opts = state.optimizers();
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(opts.size()));
  for (std::size_t g = 0; g < opts.size(); ++g) {
    w.str(kGroupNames[g]);
    w.pod<std::uint64_t>(opts[g]->step_count());
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(opts[g]->params().size()));
    for (std::size_t i = 0; i < opts[g]->params().size(); ++i) {
      w.str(opts[g]->params()[i].name);
      w.floats(opts[g]->first_moments()[i]);
      w.floats(opts[g]->second_moments()[i]);
    }
  }
  w.str(state.rng.state());
  w.pod<std::uint64_t>(state.iteration);
  return w.take();
}

void save_checkpoint(TrainState& state, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_atomic(path, checkpoint_bytes(state));
}

std::unique_ptr<TrainState> load_checkpoint_bytes(const std::string& bytes) {
  Reader r(bytes);
  if (r.raw(sizeof kCheckpointMagic - 1) != kCheckpointMagic) {
    throw TrainingError("not a checkpoint (bad magic)");
  }
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw TrainingError("unsupported checkpoint version " + std::to_string(version));
  }
  TrainConfig cfg;
  from_json(nlohmann::json::parse(r.str()), cfg);
  auto state = std::make_unique<TrainState>(cfg);

  const auto tensors = state->all_tensors();
  const auto count = r.pod<std::uint32_t>();
  if (count != tensors.size()) {
    throw TrainingError("checkpoint has " + std::to_string(count) + " tensors, expected " +
                        std::to_string(tensors.size()));
  }
  for (const auto& t : tensors) {
    const std::string name = r.str();
    if (name != t.name) throw TrainingError("checkpoint tensor '" + name + "' where '" + t.name + "' expected");
    ad::Shape shape(r.pod<std::uint32_t>());
    for (auto& d : shape) d = r.pod<std::uint64_t>();
    if (shape != t.tensor.shape()) throw TrainingError("shape mismatch for " + name);
    std::vector<float> v = r.floats();
    if (v.size() != t.tensor.size()) throw TrainingError("size mismatch for " + name);
    t.tensor.storage() = std::move(v);
  }

  const auto opts = state->optimizers();
  if (r.pod<std::uint32_t>() != opts.size()) throw TrainingError("optimizer group count mismatch");
  for (std::size_t g = 0; g < opts.size(); ++g) {
    if (r.str() != kGroupNames[g]) throw TrainingError("optimizer group order mismatch");
    const auto step = r.pod<std::uint64_t>();
    const auto n = r.pod<std::uint32_t>();
    if (n != opts[g]->params().size()) throw TrainingError("optimizer parameter count mismatch");
    std::vector<std::vector<float>> m(n), v(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (r.str() != opts[g]->params()[i].name) throw TrainingError("optimizer slot name mismatch");
      m[i] = r.floats();
      v[i] = r.floats();
    }
    opts[g]->restore(step, std::move(m), std::move(v));
  }
  state->rng.set_state(r.str());
  state->iteration = r.pod<std::uint64_t>();
  if (!r.done()) throw TrainingError("trailing bytes in checkpoint");
  return state;
}

std::unique_ptr<TrainState> load_checkpoint(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw TrainingError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return load_checkpoint_bytes(ss.str());
}

}  // namespace glyphforge::training
