#pragma once
// Associate adversarial training: the glyph-transformation GAN and the
// texture-transfer GAN updated in turn, bridged by warped sources (x_t)
// and destylized targets (y_d).

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "glyphforge/data.hpp"
#include "glyphforge/losses.hpp"
#include "glyphforge/networks.hpp"
#include "glyphforge/optim.hpp"

namespace glyphforge::training {

using ad::Tensor;

struct TrainConfig {
  nn::NetConfig net = nn::NetConfig::full_scale();
  double lambda = 10.0;  // cycle weight
  double c = 2.0;        // stroke weight constant
  double m = 6.0;        // RER band
  std::size_t batch = 64;
  double lr_gtg = 1e-4;
  double lr_ttg = 1e-3;
  std::size_t constant_iters = 15000;
  std::size_t decay_iters = 15000;
  std::uint64_t seed = 0;
  bool desk_scale = false;
  std::size_t checkpoint_every = 1000;
  bool diversity = true;         // false drops L_div from the GTG objective
  bool stroke_weighting = true;  // false forces W = 1
  bool deterministic = false;    // single-threaded kernels
  bool invert_polarity = false;  // light-on-dark corpora
  std::string sc_dir, pc_dir;    // recorded for audits

  std::size_t total_iters() const { return constant_iters + decay_iters; }
  void validate() const;

  /// 64x64, batch 8, 1000 + 1000 iterations, channel multiplier 1/4.
  static TrainConfig desk();
  /// 8x8 images for fast tests.
  static TrainConfig tiny();
};

void to_json(nlohmann::json& j, const TrainConfig& c);
/// Overlays keys from j onto c; unknown keys throw nn::ConfigError.
void from_json(const nlohmann::json& j, TrainConfig& c);

struct TrainState {
  explicit TrainState(const TrainConfig& config);

  TrainConfig config;
  Rng init_rng;  // consumed by network initialization
  nn::Networks<float> nets;
  ad::Adam<float> opt_gtg_gen;   // E, P, R_x, R_z
  ad::Adam<float> opt_gtg_disc;  // D_g
  ad::Adam<float> opt_ttg_gen;   // G_XY, G_YX
  ad::Adam<float> opt_ttg_disc;  // D_X, D_Y
  Rng rng;                       // noise draws
  std::uint64_t iteration = 0;   // completed steps

  std::vector<ad::NamedTensor<float>> all_tensors() const;  // parameters then buffers
  std::vector<ad::Adam<float>*> optimizers();
};

class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// [B, 1, H, W] from images[indices].
Tensor<float> to_batch(const std::vector<Image>& images, const std::vector<std::size_t>& indices);
std::vector<Image> from_batch(const Tensor<float>& t);

/// Dataset positions for step `iteration`: consecutive slices of per-epoch
/// permutations, a pure function of (seed, stream, iteration).
std::vector<std::size_t> batch_indices(std::uint64_t seed, std::uint64_t stream,
                                       std::uint64_t iteration, std::size_t batch, std::size_t n);

inline constexpr std::uint64_t kScStream = 1, kPcStream = 2;

/// One four-phase associate step. Throws ad::NonFiniteError naming the
/// phase when a loss or gradient is not finite.
losses::LossReport train_step(TrainState& state, const Tensor<float>& x, const Tensor<float>& y);

/// Draws the batches for state.iteration and runs train_step on them.
losses::LossReport dataset_step(TrainState& state, const std::vector<Image>& sc,
                                const std::vector<Image>& pc);

struct AuditField {
  std::string name;
  double logged = 0.0;
  double recomputed = 0.0;
  bool match = false;
};

struct AuditResult {
  std::vector<AuditField> fields;
  double max_abs_diff = 0.0;
  bool passed = true;
};

/// Replays the step a logged report came from. state must hold the
/// checkpoint taken just before it (state.iteration == logged.iter);
/// state is advanced by one step.
AuditResult audit_report(const losses::LossReport& logged, TrainState& state,
                         const std::vector<Image>& sc, const std::vector<Image>& pc,
                         double tolerance = 1e-6);

struct TrainCallbacks {
  std::function<void(const losses::LossReport&)> on_step;
  // Stop early once this many steps are complete; the schedule is unchanged.
  std::optional<std::uint64_t> stop_at;
};

/// Runs state.iteration .. config.total_iters(). With an output directory,
/// writes train_log.jsonl (appending), ckpt_<iter>.ckpt every
/// checkpoint_every steps and final.ckpt. On a non-finite failure the
/// pre-step state goes to pre_failure.ckpt before rethrowing. A run
/// stopped early ends with ckpt_<iter>.ckpt instead of final.ckpt.
void train(TrainState& state, const std::vector<Image>& sc, const std::vector<Image>& pc,
           const std::optional<std::filesystem::path>& out = std::nullopt,
           const TrainCallbacks& callbacks = {});

/// Loads both manifests and checks their size against the config.
std::pair<std::vector<Image>, std::vector<Image>> load_training_data(
    const TrainConfig& config, const data::DatasetManifest& sc, const data::DatasetManifest& pc);

/// Samples y = G_XY(warp(x, theta(E(x), z))) in eval mode.
std::vector<Image> generate(TrainState& state, const Image& x, std::size_t num_samples,
                            std::uint64_t seed);

/// Mean over inputs of pairwise_diversity among samples_per_input generations.
double generation_diversity(TrainState& state, const std::vector<Image>& inputs,
                            std::size_t samples_per_input, std::uint64_t seed);

/// Mean |G_YX(G_XY(x)) - x| over the Otsu foreground of each x (eval mode).
double foreground_cycle_error(TrainState& state, const std::vector<Image>& inputs);

// Checkpoints -------------------------------------------------------------

inline constexpr char kCheckpointMagic[] = "GLYPHCKPT";
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string checkpoint_bytes(TrainState& state);
void save_checkpoint(TrainState& state, const std::filesystem::path& path);
std::unique_ptr<TrainState> load_checkpoint_bytes(const std::string& bytes);
std::unique_ptr<TrainState> load_checkpoint(const std::filesystem::path& path);

}  // namespace glyphforge::training
