#pragma once
// Objectives: signal/noise reconstruction with ratio balancing, warp
// diversity, stroke-weighted cycle consistency and least-squares
// adversarial terms.

#include <cstdint>
#include <vector>

#include "glyphforge/image.hpp"
#include "glyphforge/networks.hpp"
#include "json.hpp"

namespace glyphforge::losses {

using ad::Tensor;

/// Floor applied to each L1 term inside the ratio.
inline constexpr double kRerFloor = 1e-12;

/// mean |a - b|
template <typename T>
Tensor<T> l1(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
struct RerResult {
  Tensor<T> rer;  // log(L1(z, z_rec) / L1(x, x_rec))
  Tensor<T> l1_x;
  Tensor<T> l1_z;
  bool clamped = false;  // an L1 term fell below the floor
};

template <typename T>
RerResult<T> rer(const Tensor<T>& x, const Tensor<T>& x_rec, const Tensor<T>& z,
                 const Tensor<T>& z_rec);

struct SnrConfig {
  double m = 6.0;  // band half-width exp; must exceed 1
  void validate() const;
};

/// +1 above log M, -1 below -log M, 0 inside the band.
int select_alpha(double rer, double m);

template <typename T>
struct SnrResult {
  Tensor<T> loss;  // L1x + L1z + alpha * RER
  double rer = 0.0;
  int alpha = 0;
  bool clamped = false;
};

template <typename T>
SnrResult<T> snr_loss(const Tensor<T>& x, const Tensor<T>& x_rec, const Tensor<T>& z,
                      const Tensor<T>& z_rec, const SnrConfig& cfg);

/// -L1(theta1, theta2)
template <typename T>
Tensor<T> diversity_loss(const Tensor<T>& theta1, const Tensor<T>& theta2);

struct WeightMatrix {
  std::size_t height = 0, width = 0;
  std::vector<double> weights;
  double foreground_weight = 1.0;
  // S_fg = 0 (or S_bg = 0): weights are all ones.
  bool degenerate = false;
};

/// (C / S_fg) * S_bg on foreground pixels, 1 on background.
WeightMatrix stroke_weight(const BinaryMask& mask, double c);

template <typename T>
struct BatchWeights {
  Tensor<T> weights;  // [B, 1, H, W], constant
  std::size_t degenerate = 0;
};

/// Binarizes every image of x_t ([B, 1, H, W]) and stacks the weights.
template <typename T>
BatchWeights<T> stroke_weights(const Tensor<T>& x_t, double c,
                               const BinarizeMethod& method = BinarizeMethod::otsu(),
                               bool invert = false);

/// mean(W * |a - b|), normalized by pixel count.
template <typename T>
Tensor<T> weighted_l1(const Tensor<T>& a, const Tensor<T>& b, const Tensor<T>& w);

/// mean(W * |rec_x - x_t|) + mean|rec_y - y|
template <typename T>
Tensor<T> stroke_aware_cycle_loss(const Tensor<T>& rec_x, const Tensor<T>& x_t,
                                  const Tensor<T>& rec_y, const Tensor<T>& y, const Tensor<T>& w);

/// E[(D - 1)^2]
template <typename T>
Tensor<T> lsgan_generator(const Tensor<T>& score_fake);

/// 1/2 E[D_fake^2] + 1/2 E[(D_real - 1)^2]
template <typename T>
Tensor<T> lsgan_discriminator(const Tensor<T>& score_fake, const Tensor<T>& score_real);

template <typename T>
Tensor<T> gtg_gen_loss(nn::PatchDiscriminator<T>& d_g, const Tensor<T>& x_t);

/// x_t and y_d are detached here.
template <typename T>
Tensor<T> gtg_disc_loss(nn::PatchDiscriminator<T>& d_g, const Tensor<T>& x_t,
                        const Tensor<T>& y_d);

template <typename T>
struct TtgGenResult {
  Tensor<T> total;  // adversarial + lambda * cycle
  Tensor<T> adversarial;
  Tensor<T> cycle;
  Tensor<T> fake_y;  // G_XY(x_t)
  Tensor<T> fake_x;  // G_YX(y)
};

/// fake_x, when given, must be a recorded G_YX(y) with the current weights.
template <typename T>
TtgGenResult<T> ttg_gen_loss(nn::TtgNets<T>& nets, const Tensor<T>& x_t, const Tensor<T>& y,
                             const Tensor<T>& w, double lambda, const Tensor<T>& fake_x = {});

/// D_Y: fake_y vs y. D_X: fake_x vs the source x. Fakes are detached.
template <typename T>
Tensor<T> ttg_disc_loss(nn::TtgNets<T>& nets, const Tensor<T>& x, const Tensor<T>& fake_y,
                        const Tensor<T>& y, const Tensor<T>& fake_x);

/// Convenience form that runs the generators without recording.
template <typename T>
Tensor<T> ttg_disc_loss(nn::TtgNets<T>& nets, const Tensor<T>& x, const Tensor<T>& x_t,
                        const Tensor<T>& y);

struct LossReport {
  std::uint64_t iter = 0;
  double l_gg = 0.0;       // GTG generator objective (adversarial + snr + div)
  double l_dg = 0.0;       // D_g objective
  double l_gxy_gyx = 0.0;  // TTG generator objective
  double l_dy_dx = 0.0;    // TTG discriminator objective
  double l_snr = 0.0;
  double rer = 0.0;
  int alpha = 0;
  double l_div = 0.0;
  double l_sacyc = 0.0;
  bool rer_clamped = false;
  std::size_t weight_degenerate = 0;

  bool all_finite() const;
};

void to_json(nlohmann::json& j, const LossReport& r);
void from_json(const nlohmann::json& j, LossReport& r);

}  // namespace glyphforge::losses
