#include "glyphforge/networks.hpp"

#include <algorithm>
#include <cmath>

namespace glyphforge::nn {

using ad::Shape;

std::size_t NetConfig::ch(std::size_t c) const {
  const long v = std::lround(static_cast<double>(c) * channel_mult);
  return static_cast<std::size_t>(std::max(1L, v));
}

std::size_t NetConfig::feature_dim() const {
  const std::size_t side = image_size >> encoder_pools;
  return ch(16) * side * side;
}

void NetConfig::validate() const {
  if (grid_n < 2) throw ConfigError("grid_n must be >= 2, got " + std::to_string(grid_n));
  if (!(channel_mult > 0.0)) throw ConfigError("channel_mult must be positive");
  if (encoder_pools > 4) throw ConfigError("encoder_pools must be <= 4");
  if (decoder_ups > 4) throw ConfigError("decoder_ups must be <= 4");
  std::size_t need = std::size_t{1} << std::max<std::size_t>({encoder_pools, decoder_ups, 3});
  if (image_size == 0 || image_size % need != 0) {
    throw ConfigError("image size " + std::to_string(image_size) + " must be a multiple of " +
                      std::to_string(need) + " (pooling chain)");
  }
  const std::size_t side = image_size >> decoder_ups;
  if (width() % (side * side) != 0) {
    throw ConfigError("fc width " + std::to_string(width()) + " does not reshape to " +
                      std::to_string(side) + "x" + std::to_string(side) + " maps");
  }
  if (residual_blocks > 16) throw ConfigError("residual_blocks must be <= 16");
}

NetConfig NetConfig::full_scale() { return NetConfig{}; }

NetConfig NetConfig::desk_scale() {
  NetConfig c;
  c.channel_mult = 0.25;
  return c;
}

NetConfig NetConfig::tiny() {
  NetConfig c;
  c.image_size = 8;
  c.grid_n = 2;
  c.channel_mult = 0.25;
  c.encoder_pools = 2;
  c.decoder_ups = 2;
  return c;
}

namespace {
const char* mode_name(geometry::WarpMode m) {
  switch (m) {
    case geometry::WarpMode::affine_only: return "affine_only";
    case geometry::WarpMode::tps_only: return "tps_only";
    default: return "affine_tps";
  }
}

geometry::WarpMode parse_mode(const std::string& s) {
  if (s == "affine_tps") return geometry::WarpMode::affine_tps;
  if (s == "affine_only") return geometry::WarpMode::affine_only;
  if (s == "tps_only") return geometry::WarpMode::tps_only;
  throw ConfigError("unknown warp_mode '" + s + "'");
}
}  // namespace

void to_json(nlohmann::json& j, const NetConfig& c) {
  j = nlohmann::json{{"image_size", c.image_size},
                     {"grid_n", c.grid_n},
                     {"channel_mult", c.channel_mult},
                     {"encoder_pools", c.encoder_pools},
                     {"decoder_ups", c.decoder_ups},
                     {"fc_width", c.fc_width},
                     {"ttg_base", c.ttg_base},
                     {"disc_base", c.disc_base},
                     {"residual_blocks", c.residual_blocks},
                     {"warp_mode", mode_name(c.warp_mode)},
                     {"tps_regularization", c.tps_regularization}};
}

void from_json(const nlohmann::json& j, NetConfig& c) {
  static const char* known[] = {"image_size", "grid_n",    "channel_mult",    "encoder_pools",
                                "decoder_ups", "fc_width", "ttg_base",        "disc_base",
                                "residual_blocks", "warp_mode", "tps_regularization"};
  for (const auto& [k, v] : j.items()) {
    if (std::find_if(std::begin(known), std::end(known), [&](const char* s) { return k == s; }) ==
        std::end(known)) {
      throw ConfigError("unknown network config key '" + k + "'");
    }
  }
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("image_size", c.image_size);
  get("grid_n", c.grid_n);
  get("channel_mult", c.channel_mult);
  get("encoder_pools", c.encoder_pools);
  get("decoder_ups", c.decoder_ups);
  get("fc_width", c.fc_width);
  get("ttg_base", c.ttg_base);
  get("disc_base", c.disc_base);
  get("residual_blocks", c.residual_blocks);
  if (j.contains("warp_mode")) c.warp_mode = parse_mode(j.at("warp_mode").get<std::string>());
  get("tps_regularization", c.tps_regularization);
}

template <typename T>
std::size_t Module<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.size();
  return n;
}

template <typename T>
Tensor<T> Module<T>::register_param(const std::string& name, Shape shape, std::vector<T> values) {
  auto t = Tensor<T>::from(std::move(shape), std::move(values), true);
  t.set_name(prefix_ + "." + name);
  params_.push_back({t.name(), t});
  return t;
}

template <typename T>
Linear<T> Module<T>::make_linear(const std::string& name, std::size_t in, std::size_t out,
                                 Rng& rng, double gain) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::vector<T> w(in * out), b(out);
  for (auto& v : w) v = static_cast<T>(gain * rng.uniform(-bound, bound));
  for (auto& v : b) v = gain == 1.0 ? static_cast<T>(rng.uniform(-bound, bound)) : T(0);
  Linear<T> l;
  l.weight = register_param(name + ".weight", {out, in}, std::move(w));
  l.bias = register_param(name + ".bias", {out}, std::move(b));
  return l;
}

template <typename T>
Conv<T> Module<T>::make_conv(const std::string& name, std::size_t in, std::size_t out,
                             std::size_t k, std::size_t stride, std::size_t pad, bool bias,
                             Rng& rng) {
  std::vector<T> w(out * in * k * k);
  for (auto& v : w) v = static_cast<T>(rng.truncated_normal(0.02));
  Conv<T> c;
  c.weight = register_param(name + ".weight", {out, in, k, k}, std::move(w));
  if (bias) c.bias = register_param(name + ".bias", {out}, std::vector<T>(out, T(0)));
  c.stride = stride;
  c.pad = pad;
  return c;
}

template <typename T>
Conv<T> Module<T>::make_conv_transpose(const std::string& name, std::size_t in, std::size_t out,
                                       std::size_t k, std::size_t stride, std::size_t pad,
                                       bool bias, Rng& rng) {
  std::vector<T> w(in * out * k * k);
  for (auto& v : w) v = static_cast<T>(rng.truncated_normal(0.02));
  Conv<T> c;
  c.weight = register_param(name + ".weight", {in, out, k, k}, std::move(w));
  if (bias) c.bias = register_param(name + ".bias", {out}, std::vector<T>(out, T(0)));
  c.stride = stride;
  c.pad = pad;
  c.transposed = true;
  return c;
}

template <typename T>
BatchNorm<T> Module<T>::make_bn(const std::string& name, std::size_t channels) {
  BatchNorm<T> bn;
  bn.gamma = register_param(name + ".gamma", {channels}, std::vector<T>(channels, T(1)));
  bn.beta = register_param(name + ".beta", {channels}, std::vector<T>(channels, T(0)));
  bn.stats.running_mean = Tensor<T>::zeros({channels});
  bn.stats.running_var = Tensor<T>::full({channels}, T(1));
  bn.stats.running_mean.set_name(prefix_ + "." + name + ".running_mean");
  bn.stats.running_var.set_name(prefix_ + "." + name + ".running_var");
  buffers_.push_back({bn.stats.running_mean.name(), bn.stats.running_mean});
  buffers_.push_back({bn.stats.running_var.name(), bn.stats.running_var});
  return bn;
}

template <typename T>
Encoder<T>::Encoder(const NetConfig& cfg, Rng& rng, std::string prefix)
    : Module<T>(std::move(prefix)), pools_(cfg.encoder_pools) {
  const std::size_t chans[] = {1, cfg.ch(64), cfg.ch(128), cfg.ch(64), cfg.ch(16)};
  for (std::size_t i = 0; i < 4; ++i) {
    const std::string n = std::to_string(i + 1);
    convs_.push_back(this->make_conv("conv" + n, chans[i], chans[i + 1], 3, 1, 1, false, rng));
    bns_.push_back(this->make_bn("bn" + n, chans[i + 1]));
  }
}

template <typename T>
Tensor<T> Encoder<T>::forward(const Tensor<T>& x) {
  Tensor<T> h = x;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    h = ad::relu(bns_[i](convs_[i](h), this->training_));
    if (i < pools_) h = ad::max_pool2d(h);
  }
  const std::size_t batch = h.dim(0);
  return ad::reshape(h, {batch, h.size() / batch});
}

template <typename T>
Predictor<T>::Predictor(const NetConfig& cfg, Rng& rng, std::string prefix)
    : Module<T>(std::move(prefix)) {
  const std::size_t w = cfg.width();
  const std::size_t dims[] = {cfg.feature_dim(), w, w, w};
  for (std::size_t i = 0; i < 3; ++i) {
    const std::string n = std::to_string(i + 1);
    fcs_.push_back(this->make_linear("fc" + n, dims[i], dims[i + 1], rng));
    bns_.push_back(this->make_bn("bn" + n, dims[i + 1]));
  }
  // Small output gain: warps start near the identity.
  fcs_.push_back(this->make_linear("fc4", w, cfg.theta_size(), rng, 0.1));
}

template <typename T>
Tensor<T> Predictor<T>::forward(const Tensor<T>& mixed) {
  Tensor<T> h = mixed;
  for (std::size_t i = 0; i < bns_.size(); ++i) {
    h = ad::relu(bns_[i](fcs_[i](h), this->training_));
  }
  return fcs_.back()(h);
}

template <typename T>
ReconX<T>::ReconX(const NetConfig& cfg, Rng& rng, std::string prefix)
    : Module<T>(std::move(prefix)) {
  const std::size_t p = cfg.theta_size(), w = cfg.width();
  const std::size_t dims[] = {p, p, w, w, w};
  for (std::size_t i = 0; i < 4; ++i) {
    const std::string n = std::to_string(i + 1);
    fcs_.push_back(this->make_linear("fc" + n, dims[i], dims[i + 1], rng));
    if (i < 3) fc_bns_.push_back(this->make_bn("fc_bn" + n, dims[i + 1]));
  }
  seed_side_ = cfg.image_size >> cfg.decoder_ups;
  seed_channels_ = w / (seed_side_ * seed_side_);
  const std::size_t chans[] = {seed_channels_, cfg.ch(64), cfg.ch(128), cfg.ch(64), 1};
  for (std::size_t i = 0; i < 4; ++i) {
    const std::string n = std::to_string(i + 1);
    const bool up = i >= 4 - cfg.decoder_ups;
    const bool last = i == 3;
    convs_.push_back(this->make_conv_transpose("convt" + n, chans[i], chans[i + 1], up ? 4 : 3,
                                               up ? 2 : 1, 1, last, rng));
    if (!last) conv_bns_.push_back(this->make_bn("convt_bn" + n, chans[i + 1]));
  }
}

template <typename T>
Tensor<T> ReconX<T>::forward(const Tensor<T>& theta) {
  Tensor<T> h = theta;
  for (std::size_t i = 0; i < fcs_.size(); ++i) {
    h = fcs_[i](h);
    if (i < fc_bns_.size()) h = ad::relu(fc_bns_[i](h, this->training_));
  }
  h = ad::reshape(h, {h.dim(0), seed_channels_, seed_side_, seed_side_});
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    h = convs_[i](h);
    h = i < conv_bns_.size() ? ad::relu(conv_bns_[i](h, this->training_)) : ad::sigmoid(h);
  }
  return h;
}

template <typename T>
ReconZ<T>::ReconZ(const NetConfig& cfg, Rng& rng, std::string prefix)
    : Module<T>(std::move(prefix)) {
  const std::size_t p = cfg.theta_size(), w = cfg.width();
  const std::size_t dims[] = {p, p, w, w, cfg.feature_dim()};
  for (std::size_t i = 0; i < 4; ++i) {
    const std::string n = std::to_string(i + 1);
    fcs_.push_back(this->make_linear("fc" + n, dims[i], dims[i + 1], rng));
    if (i < 3) bns_.push_back(this->make_bn("bn" + n, dims[i + 1]));
  }
}

template <typename T>
Tensor<T> ReconZ<T>::forward(const Tensor<T>& theta) {
  Tensor<T> h = theta;
  for (std::size_t i = 0; i < fcs_.size(); ++i) {
    h = fcs_[i](h);
    if (i < bns_.size()) h = ad::relu(bns_[i](h, this->training_));
  }
  return h;
}

template <typename T>
PatchDiscriminator<T>::PatchDiscriminator(const NetConfig& cfg, Rng& rng, std::string prefix)
    : Module<T>(std::move(prefix)) {
  const std::size_t d = cfg.ch(cfg.disc_base);
  convs_.push_back(this->make_conv("conv1", 1, d, 4, 2, 1, true, rng));
  convs_.push_back(this->make_conv("conv2", d, 2 * d, 4, 2, 1, false, rng));
  bns_.push_back(this->make_bn("bn2", 2 * d));
  convs_.push_back(this->make_conv("conv3", 2 * d, 4 * d, 4, 2, 1, false, rng));
  bns_.push_back(this->make_bn("bn3", 4 * d));
  convs_.push_back(this->make_conv("conv4", 4 * d, 1, 3, 1, 1, true, rng));
}

template <typename T>
Tensor<T> PatchDiscriminator<T>::forward(const Tensor<T>& x) {
  const T slope = T(0.2);
  Tensor<T> h = ad::leaky_relu(convs_[0](x), slope);
  h = ad::leaky_relu(bns_[0](convs_[1](h), this->training_), slope);
  h = ad::leaky_relu(bns_[1](convs_[2](h), this->training_), slope);
  return convs_[3](h);
}

template <typename T>
TtgGenerator<T>::TtgGenerator(const NetConfig& cfg, Rng& rng, std::string prefix)
    : Module<T>(std::move(prefix)) {
  const std::size_t g = cfg.ch(cfg.ttg_base);
  down_.push_back(this->make_conv("down1", 1, g, 3, 1, 1, false, rng));
  down_bns_.push_back(this->make_bn("down_bn1", g));
  down_.push_back(this->make_conv("down2", g, 2 * g, 3, 2, 1, false, rng));
  down_bns_.push_back(this->make_bn("down_bn2", 2 * g));
  down_.push_back(this->make_conv("down3", 2 * g, 4 * g, 3, 2, 1, false, rng));
  down_bns_.push_back(this->make_bn("down_bn3", 4 * g));
  for (std::size_t b = 0; b < cfg.residual_blocks; ++b) {
    for (std::size_t j = 0; j < 2; ++j) {
      const std::string n = "res" + std::to_string(b + 1) + "_" + std::to_string(j + 1);
      res_.push_back(this->make_conv(n, 4 * g, 4 * g, 3, 1, 1, false, rng));
      res_bns_.push_back(this->make_bn(n + "_bn", 4 * g));
    }
  }
  up_.push_back(this->make_conv_transpose("up1", 4 * g, 2 * g, 4, 2, 1, false, rng));
  up_bns_.push_back(this->make_bn("up_bn1", 2 * g));
  up_.push_back(this->make_conv_transpose("up2", 2 * g, g, 4, 2, 1, false, rng));
  up_bns_.push_back(this->make_bn("up_bn2", g));
  out_ = this->make_conv("out", g, 1, 3, 1, 1, true, rng);
}

template <typename T>
Tensor<T> TtgGenerator<T>::forward(const Tensor<T>& x) {
  const bool tr = this->training_;
  Tensor<T> h = x;
  for (std::size_t i = 0; i < down_.size(); ++i) h = ad::relu(down_bns_[i](down_[i](h), tr));
  for (std::size_t i = 0; i + 1 < res_.size(); i += 2) {
    Tensor<T> r = ad::relu(res_bns_[i](res_[i](h), tr));
    r = res_bns_[i + 1](res_[i + 1](r), tr);
    h = ad::add(h, r);
  }
  for (std::size_t i = 0; i < up_.size(); ++i) h = ad::relu(up_bns_[i](up_[i](h), tr));
  return ad::sigmoid(out_(h));
}

namespace {
template <typename T>
void append(std::vector<NamedTensor<T>>& out, const std::vector<NamedTensor<T>>& in) {
  out.insert(out.end(), in.begin(), in.end());
}
}  // namespace

template <typename T>
std::vector<NamedTensor<T>> GtgNets<T>::generator_parameters() const {
  std::vector<NamedTensor<T>> out;
  append(out, encoder.parameters());
  append(out, predictor.parameters());
  append(out, recon_x.parameters());
  append(out, recon_z.parameters());
  return out;
}

template <typename T>
std::vector<NamedTensor<T>> GtgNets<T>::parameters() const {
  auto out = generator_parameters();
  append(out, disc.parameters());
  return out;
}

template <typename T>
std::vector<NamedTensor<T>> GtgNets<T>::buffers() const {
  std::vector<NamedTensor<T>> out;
  append(out, encoder.buffers());
  append(out, predictor.buffers());
  append(out, recon_x.buffers());
  append(out, recon_z.buffers());
  append(out, disc.buffers());
  return out;
}

template <typename T>
void GtgNets<T>::set_training(bool on) {
  encoder.set_training(on);
  predictor.set_training(on);
  recon_x.set_training(on);
  recon_z.set_training(on);
  disc.set_training(on);
}

template <typename T>
std::vector<NamedTensor<T>> TtgNets<T>::generator_parameters() const {
  std::vector<NamedTensor<T>> out;
  append(out, gen_xy.parameters());
  append(out, gen_yx.parameters());
  return out;
}

template <typename T>
std::vector<NamedTensor<T>> TtgNets<T>::discriminator_parameters() const {
  std::vector<NamedTensor<T>> out;
  append(out, disc_x.parameters());
  append(out, disc_y.parameters());
  return out;
}

template <typename T>
std::vector<NamedTensor<T>> TtgNets<T>::parameters() const {
  auto out = generator_parameters();
  append(out, discriminator_parameters());
  return out;
}

template <typename T>
std::vector<NamedTensor<T>> TtgNets<T>::buffers() const {
  std::vector<NamedTensor<T>> out;
  append(out, gen_xy.buffers());
  append(out, gen_yx.buffers());
  append(out, disc_x.buffers());
  append(out, disc_y.buffers());
  return out;
}

template <typename T>
void TtgNets<T>::set_training(bool on) {
  gen_xy.set_training(on);
  gen_yx.set_training(on);
  disc_x.set_training(on);
  disc_y.set_training(on);
}

template <typename T>
Networks<T> build_default_nets(const NetConfig& cfg, Rng& rng) {
  cfg.validate();
  // Braced member order fixes the initialization (and RNG draw) order.
  GtgNets<T> gtg{cfg,
                 Encoder<T>(cfg, rng),
                 Predictor<T>(cfg, rng),
                 ReconX<T>(cfg, rng),
                 ReconZ<T>(cfg, rng),
                 PatchDiscriminator<T>(cfg, rng, "gtg.disc")};
  TtgNets<T> ttg{TtgGenerator<T>(cfg, rng, "ttg.gen_xy"), TtgGenerator<T>(cfg, rng, "ttg.gen_yx"),
                 PatchDiscriminator<T>(cfg, rng, "ttg.disc_x"),
                 PatchDiscriminator<T>(cfg, rng, "ttg.disc_y")};
  return Networks<T>{std::move(gtg), std::move(ttg)};
}

template <typename T>
Tensor<T> encode(GtgNets<T>& nets, const Tensor<T>& x) {
  const std::size_t s = nets.config.image_size;
  if (x.rank() != 4 || x.dim(1) != 1 || x.dim(2) != s || x.dim(3) != s) {
    throw ad::ShapeError("encode: expected [B, 1, " + std::to_string(s) + ", " +
                         std::to_string(s) + "], got " + ad::shape_str(x.shape()));
  }
  return nets.encoder.forward(x);
}

template <typename T>
Tensor<T> predict_theta(GtgNets<T>& nets, const Tensor<T>& feature, const Tensor<T>& z) {
  if (feature.shape() != z.shape()) {
    throw ad::ShapeError("predict_theta: noise " + ad::shape_str(z.shape()) +
                         " does not match feature " + ad::shape_str(feature.shape()));
  }
  return ad::squash_warp_params(nets.predictor.forward(ad::add(feature, z)), nets.config.grid_n);
}

template <typename T>
Tensor<T> warp(const NetConfig& cfg, const Tensor<T>& x, const Tensor<T>& theta) {
  Tensor<T> grid = ad::warp_grid(theta, cfg.grid_n, x.dim(2), x.dim(3), cfg.warp_mode,
                                 cfg.tps_regularization);
  return ad::grid_sample(x, grid, geometry::BorderPolicy::fill(1.0));
}

template <typename T>
GtgOutput<T> gtg_forward(GtgNets<T>& nets, const Tensor<T>& x, const Tensor<T>& z) {
  GtgOutput<T> out;
  out.theta = predict_theta(nets, encode(nets, x), z);
  out.x_t = warp(nets.config, x, out.theta);
  out.x_rec = nets.recon_x.forward(out.theta);
  out.z_rec = nets.recon_z.forward(out.theta);
  return out;
}

template <typename T>
std::vector<T> patch_scores(const Tensor<T>& score_map) {
  const std::size_t batch = score_map.dim(0);
  const std::size_t per = score_map.size() / batch;
  std::vector<T> out(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    T acc = 0;
    for (std::size_t i = 0; i < per; ++i) acc += score_map.values()[b * per + i];
    out[b] = acc / static_cast<T>(per);
  }
  return out;
}

#define GLYPHFORGE_INSTANTIATE_NETS(T)                                                       \
  template class Module<T>;                                                                  \
  template class Encoder<T>;                                                                 \
  template class Predictor<T>;                                                               \
  template class ReconX<T>;                                                                  \
  template class ReconZ<T>;                                                                  \
  template class PatchDiscriminator<T>;                                                      \
  template class TtgGenerator<T>;                                                            \
  template struct GtgNets<T>;                                                                \
  template struct TtgNets<T>;                                                                \
  template Networks<T> build_default_nets<T>(const NetConfig&, Rng&);                        \
  template Tensor<T> encode(GtgNets<T>&, const Tensor<T>&);                                  \
  template Tensor<T> predict_theta(GtgNets<T>&, const Tensor<T>&, const Tensor<T>&);         \
  template Tensor<T> warp(const NetConfig&, const Tensor<T>&, const Tensor<T>&);             \
  template GtgOutput<T> gtg_forward(GtgNets<T>&, const Tensor<T>&, const Tensor<T>&);        \
  template std::vector<T> patch_scores(const Tensor<T>&);

GLYPHFORGE_INSTANTIATE_NETS(float)
GLYPHFORGE_INSTANTIATE_NETS(double)

#undef GLYPHFORGE_INSTANTIATE_NETS

}  // namespace glyphforge::nn
