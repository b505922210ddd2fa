#pragma once
// Glyph-transformation networks (encoder, predictor, reconstructors, glyph
// discriminator) and the texture-transfer generators and discriminators.
//
// Every network owns its parameters as named tensors ("gtg.encoder.conv1.weight")
// plus batch-norm running statistics as named buffers.

#include <cstddef>
#include <string>
#include <vector>

#include "glyphforge/geometry.hpp"
#include "glyphforge/ops.hpp"
#include "glyphforge/rng.hpp"
#include "json.hpp"

namespace glyphforge::nn {

using ad::NamedTensor;
using ad::Tensor;

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct NetConfig {
  std::size_t image_size = 64;
  std::size_t grid_n = 4;
  double channel_mult = 1.0;
  // Max-pools in the encoder; the feature is 16*mult x (size/2^pools)^2.
  std::size_t encoder_pools = 3;
  // Upsampling transposed convs in R_x (the last ones of the four).
  std::size_t decoder_ups = 4;
  std::size_t fc_width = 1024;
  std::size_t ttg_base = 32;
  std::size_t disc_base = 32;
  std::size_t residual_blocks = 2;
  geometry::WarpMode warp_mode = geometry::WarpMode::affine_tps;
  double tps_regularization = 1e-6;

  /// Channel count c scaled by channel_mult, at least 1.
  std::size_t ch(std::size_t c) const;
  std::size_t theta_size() const { return 2 * grid_n * grid_n + 4; }
  std::size_t feature_dim() const;
  std::size_t width() const { return ch(fc_width); }

  /// Throws ConfigError naming the violated constraint.
  void validate() const;

  /// Full-scale layer sizes at 64x64.
  static NetConfig full_scale();
  /// Channel multiplier 1/4 at 64x64.
  static NetConfig desk_scale();
  /// 8x8 images, N=2, multiplier 1/4: for gradient checks.
  static NetConfig tiny();
};

void to_json(nlohmann::json& j, const NetConfig& c);
void from_json(const nlohmann::json& j, NetConfig& c);

template <typename T>
struct Linear {
  Tensor<T> weight, bias;
  Tensor<T> operator()(const Tensor<T>& x) const { return ad::linear(x, weight, bias); }
};

template <typename T>
struct Conv {
  Tensor<T> weight, bias;  // bias undefined when followed by batch norm
  std::size_t stride = 1, pad = 1;
  bool transposed = false;
  Tensor<T> operator()(const Tensor<T>& x) const {
    return transposed ? ad::conv_transpose2d(x, weight, bias, stride, pad)
                      : ad::conv2d(x, weight, bias, stride, pad);
  }
};

template <typename T>
struct BatchNorm {
  Tensor<T> gamma, beta;
  ad::BatchNormStats<T> stats;
  Tensor<T> operator()(const Tensor<T>& x, bool training) {
    return ad::batch_norm(x, gamma, beta, stats, training);
  }
};

template <typename T>
class Module {
 public:
  virtual ~Module() = default;

  const std::vector<NamedTensor<T>>& parameters() const { return params_; }
  /// Batch-norm running means and variances.
  const std::vector<NamedTensor<T>>& buffers() const { return buffers_; }
  std::size_t parameter_count() const;

  void set_training(bool on) { training_ = on; }
  bool training() const { return training_; }
  const std::string& prefix() const { return prefix_; }

 protected:
  Module(std::string prefix) : prefix_(std::move(prefix)) {}

  Linear<T> make_linear(const std::string& name, std::size_t in, std::size_t out, Rng& rng,
                        double gain = 1.0);
  Conv<T> make_conv(const std::string& name, std::size_t in, std::size_t out, std::size_t k,
                    std::size_t stride, std::size_t pad, bool bias, Rng& rng);
  Conv<T> make_conv_transpose(const std::string& name, std::size_t in, std::size_t out,
                              std::size_t k, std::size_t stride, std::size_t pad, bool bias,
                              Rng& rng);
  BatchNorm<T> make_bn(const std::string& name, std::size_t channels);

  std::string prefix_;
  std::vector<NamedTensor<T>> params_;
  std::vector<NamedTensor<T>> buffers_;
  bool training_ = true;

 private:
  Tensor<T> register_param(const std::string& name, ad::Shape shape, std::vector<T> values);
};

/// conv(64,128,64,16)*mult, each BN + ReLU, max-pool after the first
/// encoder_pools blocks; output flattened to [B, feature_dim].
template <typename T>
class Encoder : public Module<T> {
 public:
  Encoder(const NetConfig& cfg, Rng& rng, std::string prefix = "gtg.encoder");
  Tensor<T> forward(const Tensor<T>& x);

 private:
  std::vector<Conv<T>> convs_;
  std::vector<BatchNorm<T>> bns_;
  std::size_t pools_;
};

/// fc(W) x3 with BN + ReLU, then fc(2N^2+4). Output is the raw
/// (unsquashed) parameter vector.
template <typename T>
class Predictor : public Module<T> {
 public:
  Predictor(const NetConfig& cfg, Rng& rng, std::string prefix = "gtg.predictor");
  Tensor<T> forward(const Tensor<T>& mixed);
  Linear<T>& output_layer() { return fcs_.back(); }

 private:
  std::vector<Linear<T>> fcs_;
  std::vector<BatchNorm<T>> bns_;
};

/// theta -> fc chain. R_x continues into transposed convs ending in a
/// sigmoid image; R_z stops at the fc chain with the feature width.
template <typename T>
class ReconX : public Module<T> {
 public:
  ReconX(const NetConfig& cfg, Rng& rng, std::string prefix = "gtg.recon_x");
  Tensor<T> forward(const Tensor<T>& theta);

 private:
  std::vector<Linear<T>> fcs_;
  std::vector<BatchNorm<T>> fc_bns_;
  std::vector<Conv<T>> convs_;
  std::vector<BatchNorm<T>> conv_bns_;
  std::size_t seed_channels_, seed_side_;
};

template <typename T>
class ReconZ : public Module<T> {
 public:
  ReconZ(const NetConfig& cfg, Rng& rng, std::string prefix = "gtg.recon_z");
  Tensor<T> forward(const Tensor<T>& theta);

 private:
  std::vector<Linear<T>> fcs_;
  std::vector<BatchNorm<T>> bns_;
};

/// 4-layer patch discriminator: conv k4 s2 (d, 2d, 4d) with LeakyReLU 0.2
/// (BN on the 2nd and 3rd), then conv k3 to one score map [B,1,s/8,s/8].
template <typename T>
class PatchDiscriminator : public Module<T> {
 public:
  PatchDiscriminator(const NetConfig& cfg, Rng& rng, std::string prefix);
  Tensor<T> forward(const Tensor<T>& x);

 private:
  std::vector<Conv<T>> convs_;
  std::vector<BatchNorm<T>> bns_;
};

/// conv k3 (g), two stride-2 convs (2g, 4g), residual blocks, two stride-2
/// transposed convs back to full size, conv k3 to one channel + sigmoid.
template <typename T>
class TtgGenerator : public Module<T> {
 public:
  TtgGenerator(const NetConfig& cfg, Rng& rng, std::string prefix);
  Tensor<T> forward(const Tensor<T>& x);

 private:
  std::vector<Conv<T>> down_;
  std::vector<BatchNorm<T>> down_bns_;
  std::vector<Conv<T>> res_;
  std::vector<BatchNorm<T>> res_bns_;
  std::vector<Conv<T>> up_;
  std::vector<BatchNorm<T>> up_bns_;
  Conv<T> out_;
};

template <typename T>
struct GtgNets {
  NetConfig config;
  Encoder<T> encoder;
  Predictor<T> predictor;
  ReconX<T> recon_x;
  ReconZ<T> recon_z;
  PatchDiscriminator<T> disc;

  /// Generator side: E, P, R_x, R_z.
  std::vector<NamedTensor<T>> generator_parameters() const;
  std::vector<NamedTensor<T>> parameters() const;
  std::vector<NamedTensor<T>> buffers() const;
  void set_training(bool on);
};

template <typename T>
struct TtgNets {
  TtgGenerator<T> gen_xy;
  TtgGenerator<T> gen_yx;
  PatchDiscriminator<T> disc_x;
  PatchDiscriminator<T> disc_y;

  std::vector<NamedTensor<T>> generator_parameters() const;
  std::vector<NamedTensor<T>> discriminator_parameters() const;
  std::vector<NamedTensor<T>> parameters() const;
  std::vector<NamedTensor<T>> buffers() const;
  void set_training(bool on);
};

template <typename T>
struct Networks {
  GtgNets<T> gtg;
  TtgNets<T> ttg;
};

/// Validates cfg and initializes all seven networks from rng.
template <typename T>
Networks<T> build_default_nets(const NetConfig& cfg, Rng& rng);

template <typename T>
struct GtgOutput {
  Tensor<T> theta;  // squashed, [B, 2N^2+4]
  Tensor<T> x_t;    // warped input
  Tensor<T> x_rec;  // R_x(theta)
  Tensor<T> z_rec;  // R_z(theta)
};

/// E(x) -> [B, feature_dim].
template <typename T>
Tensor<T> encode(GtgNets<T>& nets, const Tensor<T>& x);

/// Squashed theta from E(x) + z. Throws ShapeError when z and the feature
/// differ in shape.
template <typename T>
Tensor<T> predict_theta(GtgNets<T>& nets, const Tensor<T>& feature, const Tensor<T>& z);

/// Resamples x through the affine + TPS grid built from theta.
template <typename T>
Tensor<T> warp(const NetConfig& cfg, const Tensor<T>& x, const Tensor<T>& theta);

template <typename T>
GtgOutput<T> gtg_forward(GtgNets<T>& nets, const Tensor<T>& x, const Tensor<T>& z);

/// Mean over the patch score map per sample -> [B].
template <typename T>
std::vector<T> patch_scores(const Tensor<T>& score_map);

}  // namespace glyphforge::nn
