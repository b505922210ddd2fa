#include "glyphforge/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace glyphforge::losses {

using ad::NoGradGuard;

template <typename T>
Tensor<T> l1(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ad::ShapeError("l1: shape mismatch " + ad::shape_str(a.shape()) + " vs " +
                         ad::shape_str(b.shape()));
  }
  return ad::mean(ad::abs(ad::sub(a, b)));
}

template <typename T>
RerResult<T> rer(const Tensor<T>& x, const Tensor<T>& x_rec, const Tensor<T>& z,
                 const Tensor<T>& z_rec) {
  RerResult<T> r;
  r.l1_x = l1(x, x_rec);
  r.l1_z = l1(z, z_rec);
  const T floor = static_cast<T>(kRerFloor);
  r.clamped = r.l1_x.item() < floor || r.l1_z.item() < floor;
  r.rer = ad::sub(ad::log(ad::clamp_min(r.l1_z, floor)), ad::log(ad::clamp_min(r.l1_x, floor)));
  return r;
}

void SnrConfig::validate() const {
  if (!(m > 1.0)) throw std::invalid_argument("SNR band parameter M must exceed 1");
}

int select_alpha(double rer, double m) {
  const double band = std::log(m);
  if (rer > band) return 1;
  if (rer < -band) return -1;
  return 0;
}

template <typename T>
SnrResult<T> snr_loss(const Tensor<T>& x, const Tensor<T>& x_rec, const Tensor<T>& z,
                      const Tensor<T>& z_rec, const SnrConfig& cfg) {
  cfg.validate();
  RerResult<T> r = rer(x, x_rec, z, z_rec);
  SnrResult<T> out;
  out.rer = static_cast<double>(r.rer.item());
  out.alpha = select_alpha(out.rer, cfg.m);
  out.clamped = r.clamped;
  out.loss = ad::add(r.l1_x, r.l1_z);
  if (out.alpha != 0) out.loss = ad::add(out.loss, ad::scale(r.rer, static_cast<T>(out.alpha)));
  return out;
}

template <typename T>
Tensor<T> diversity_loss(const Tensor<T>& theta1, const Tensor<T>& theta2) {
  return ad::scale(l1(theta1, theta2), T(-1));
}

WeightMatrix stroke_weight(const BinaryMask& mask, double c) {
  if (!(c >= 1.0)) throw std::invalid_argument("stroke weight constant C must be >= 1");
  WeightMatrix w;
  w.height = mask.height();
  w.width = mask.width();
  w.weights.assign(mask.size(), 1.0);
  const std::size_t fg = mask.foreground_count(), bg = mask.background_count();
  if (fg == 0 || bg == 0) {
    w.degenerate = true;
    return w;
  }
  w.foreground_weight = c / static_cast<double>(fg) * static_cast<double>(bg);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) w.weights[i] = w.foreground_weight;
  }
  return w;
}

template <typename T>
BatchWeights<T> stroke_weights(const Tensor<T>& x_t, double c, const BinarizeMethod& method,
                               bool invert) {
  if (x_t.rank() != 4 || x_t.dim(1) != 1) {
    throw ad::ShapeError("stroke_weights: expected [B, 1, H, W], got " +
                         ad::shape_str(x_t.shape()));
  }
  const std::size_t batch = x_t.dim(0), h = x_t.dim(2), w = x_t.dim(3);
  std::vector<T> out(batch * h * w);
  BatchWeights<T> result;
  for (std::size_t b = 0; b < batch; ++b) {
    std::vector<double> px(h * w);
    for (std::size_t i = 0; i < h * w; ++i) {
      px[i] = std::clamp(static_cast<double>(x_t.values()[b * h * w + i]), 0.0, 1.0);
    }
    const WeightMatrix wm = stroke_weight(binarize(Image(h, w, std::move(px)), method, invert).mask, c);
    if (wm.degenerate) ++result.degenerate;
    for (std::size_t i = 0; i < h * w; ++i) out[b * h * w + i] = static_cast<T>(wm.weights[i]);
  }
  result.weights = Tensor<T>::from(x_t.shape(), std::move(out));
  return result;
}

template <typename T>
Tensor<T> weighted_l1(const Tensor<T>& a, const Tensor<T>& b, const Tensor<T>& w) {
  if (a.shape() != b.shape() || a.shape() != w.shape()) {
    throw ad::ShapeError("weighted_l1: shapes " + ad::shape_str(a.shape()) + ", " +
                         ad::shape_str(b.shape()) + ", weights " + ad::shape_str(w.shape()));
  }
  return ad::mean(ad::mul(w, ad::abs(ad::sub(a, b))));
}

template <typename T>
Tensor<T> stroke_aware_cycle_loss(const Tensor<T>& rec_x, const Tensor<T>& x_t,
                                  const Tensor<T>& rec_y, const Tensor<T>& y,
                                  const Tensor<T>& w) {
  return ad::add(weighted_l1(rec_x, x_t, w), l1(rec_y, y));
}

template <typename T>
Tensor<T> lsgan_generator(const Tensor<T>& score_fake) {
  return ad::mean(ad::square(ad::add_scalar(score_fake, T(-1))));
}

template <typename T>
Tensor<T> lsgan_discriminator(const Tensor<T>& score_fake, const Tensor<T>& score_real) {
  Tensor<T> fake = ad::mean(ad::square(score_fake));
  Tensor<T> real = ad::mean(ad::square(ad::add_scalar(score_real, T(-1))));
  return ad::scale(ad::add(fake, real), T(0.5));
}

template <typename T>
Tensor<T> gtg_gen_loss(nn::PatchDiscriminator<T>& d_g, const Tensor<T>& x_t) {
  return lsgan_generator(d_g.forward(x_t));
}

template <typename T>
Tensor<T> gtg_disc_loss(nn::PatchDiscriminator<T>& d_g, const Tensor<T>& x_t,
                        const Tensor<T>& y_d) {
  return lsgan_discriminator(d_g.forward(ad::detach(x_t)), d_g.forward(ad::detach(y_d)));
}

template <typename T>
TtgGenResult<T> ttg_gen_loss(nn::TtgNets<T>& nets, const Tensor<T>& x_t, const Tensor<T>& y,
                             const Tensor<T>& w, double lambda, const Tensor<T>& fake_x) {
  TtgGenResult<T> r;
  r.fake_y = nets.gen_xy.forward(x_t);
  Tensor<T> rec_x = nets.gen_yx.forward(r.fake_y);
  r.fake_x = fake_x.defined() ? fake_x : nets.gen_yx.forward(y);
  Tensor<T> rec_y = nets.gen_xy.forward(r.fake_x);
  r.adversarial = ad::add(lsgan_generator(nets.disc_y.forward(r.fake_y)),
                          lsgan_generator(nets.disc_x.forward(r.fake_x)));
  r.cycle = stroke_aware_cycle_loss(rec_x, x_t, rec_y, y, w);
  r.total = ad::add(r.adversarial, ad::scale(r.cycle, static_cast<T>(lambda)));
  return r;
}

template <typename T>
Tensor<T> ttg_disc_loss(nn::TtgNets<T>& nets, const Tensor<T>& x, const Tensor<T>& fake_y,
                        const Tensor<T>& y, const Tensor<T>& fake_x) {
  Tensor<T> dy = lsgan_discriminator(nets.disc_y.forward(ad::detach(fake_y)), nets.disc_y.forward(y));
  Tensor<T> dx = lsgan_discriminator(nets.disc_x.forward(ad::detach(fake_x)), nets.disc_x.forward(x));
  return ad::add(dy, dx);
}

template <typename T>
Tensor<T> ttg_disc_loss(nn::TtgNets<T>& nets, const Tensor<T>& x, const Tensor<T>& x_t,
                        const Tensor<T>& y) {
  Tensor<T> fake_y, fake_x;
  {
    NoGradGuard guard;
    fake_y = nets.gen_xy.forward(x_t);
    fake_x = nets.gen_yx.forward(y);
  }
  return ttg_disc_loss(nets, x, fake_y, y, fake_x);
}

bool LossReport::all_finite() const {
  for (double v : {l_gg, l_dg, l_gxy_gyx, l_dy_dx, l_snr, rer, l_div, l_sacyc}) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void to_json(nlohmann::json& j, const LossReport& r) {
  j = nlohmann::json{{"iter", r.iter},       {"L_Gg", r.l_gg},
                     {"L_Dg", r.l_dg},       {"L_GXY_GYX", r.l_gxy_gyx},
                     {"L_DY_DX", r.l_dy_dx}, {"L_snr", r.l_snr},
                     {"RER", r.rer},         {"alpha", r.alpha},
                     {"L_div", r.l_div},     {"L_sacyc", r.l_sacyc},
                     {"rer_clamped", r.rer_clamped}, {"w_degenerate", r.weight_degenerate}};
}

void from_json(const nlohmann::json& j, LossReport& r) {
  j.at("iter").get_to(r.iter);
  j.at("L_Gg").get_to(r.l_gg);
  j.at("L_Dg").get_to(r.l_dg);
  j.at("L_GXY_GYX").get_to(r.l_gxy_gyx);
  j.at("L_DY_DX").get_to(r.l_dy_dx);
  j.at("L_snr").get_to(r.l_snr);
  j.at("RER").get_to(r.rer);
  j.at("alpha").get_to(r.alpha);
  j.at("L_div").get_to(r.l_div);
  j.at("L_sacyc").get_to(r.l_sacyc);
  r.rer_clamped = j.value("rer_clamped", false);
  r.weight_degenerate = j.value("w_degenerate", std::size_t{0});
}

#define GLYPHFORGE_INSTANTIATE_LOSSES(T)                                                       \
  template Tensor<T> l1(const Tensor<T>&, const Tensor<T>&);                                   \
  template RerResult<T> rer(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,              \
                            const Tensor<T>&);                                                 \
  template SnrResult<T> snr_loss(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,         \
                                 const Tensor<T>&, const SnrConfig&);                          \
  template Tensor<T> diversity_loss(const Tensor<T>&, const Tensor<T>&);                       \
  template BatchWeights<T> stroke_weights(const Tensor<T>&, double, const BinarizeMethod&,     \
                                          bool);                                               \
  template Tensor<T> weighted_l1(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);        \
  template Tensor<T> stroke_aware_cycle_loss(const Tensor<T>&, const Tensor<T>&,               \
                                             const Tensor<T>&, const Tensor<T>&,               \
                                             const Tensor<T>&);                                \
  template Tensor<T> lsgan_generator(const Tensor<T>&);                                        \
  template Tensor<T> lsgan_discriminator(const Tensor<T>&, const Tensor<T>&);                  \
  template Tensor<T> gtg_gen_loss(nn::PatchDiscriminator<T>&, const Tensor<T>&);               \
  template Tensor<T> gtg_disc_loss(nn::PatchDiscriminator<T>&, const Tensor<T>&,               \
                                   const Tensor<T>&);                                          \
  template TtgGenResult<T> ttg_gen_loss(nn::TtgNets<T>&, const Tensor<T>&, const Tensor<T>&,   \
                                        const Tensor<T>&, double, const Tensor<T>&);           \
  template Tensor<T> ttg_disc_loss(nn::TtgNets<T>&, const Tensor<T>&, const Tensor<T>&,        \
                                   const Tensor<T>&, const Tensor<T>&);                        \
  template Tensor<T> ttg_disc_loss(nn::TtgNets<T>&, const Tensor<T>&, const Tensor<T>&,        \
                                   const Tensor<T>&);

GLYPHFORGE_INSTANTIATE_LOSSES(float)
GLYPHFORGE_INSTANTIATE_LOSSES(double)

#undef GLYPHFORGE_INSTANTIATE_LOSSES

}  // namespace glyphforge::losses
