#include "glyphforge/gradsuite.hpp"

#include <algorithm>
#include <chrono>
#include <functional>
#include <stdexcept>

#include "glyphforge/losses.hpp"
#include "glyphforge/networks.hpp"
#include "glyphforge/ops.hpp"
#include "glyphforge/rng.hpp"

namespace glyphforge::gradsuite {

namespace {

using ad::NamedTensor;
using ad::Shape;
using D = ad::Tensor<double>;
using Params = std::vector<NamedTensor<double>>;

D random_leaf(Rng& rng, Shape shape, double lo, double hi, const std::string& name) {
  std::vector<double> v(ad::numel(shape));
  for (auto& e : v) e = rng.uniform(lo, hi);
  D t = D::from(std::move(shape), std::move(v), true);
  t.set_name(name);
  return t;
}

D random_const(Rng& rng, Shape shape, double lo, double hi) {
  std::vector<double> v(ad::numel(shape));
  for (auto& e : v) e = rng.uniform(lo, hi);
  return D::from(std::move(shape), std::move(v));
}

D normal_const(Rng& rng, Shape shape) {
  std::vector<double> v(ad::numel(shape));
  for (auto& e : v) e = rng.normal();
  return D::from(std::move(shape), std::move(v));
}

// sum(y * r) with a fixed random r, so every output entry matters.
D project(const D& y, Rng& rng) {
  D r = random_const(rng, y.shape(), -1.0, 1.0);
  return ad::sum(ad::mul(y, r));
}

struct Problem {
  std::function<D()> f;
  Params params;
  bool sampled = false;  // check a seeded subset of entries
};

using Builder = std::function<Problem(Rng&)>;

struct Case {
  std::string suite;
  std::string name;
  Builder build;
};

// Operator cases ---------------------------------------------------------

Problem unary_case(Rng& rng, Shape shape, double lo, double hi,
                   std::function<D(const D&)> op) {
  D x = random_leaf(rng, shape, lo, hi, "x");
  D r = random_const(rng, shape, -1.0, 1.0);
  return {[=] { return ad::sum(ad::mul(op(x), r)); }, {{"x", x}}};
}

Problem binary_case(Rng& rng, std::function<D(const D&, const D&)> op) {
  D a = random_leaf(rng, {3, 4}, -1.0, 1.0, "a");
  D b = random_leaf(rng, {3, 4}, 0.5, 1.5, "b");
  D r = random_const(rng, {3, 4}, -1.0, 1.0);
  return {[=] { return ad::sum(ad::mul(op(a, b), r)); }, {{"a", a}, {"b", b}}};
}

std::vector<Case> op_cases() {
  std::vector<Case> c;
  auto add = [&](std::string name, Builder b) { c.push_back({"ops", std::move(name), std::move(b)}); };
  add("add", [](Rng& r) { return binary_case(r, [](const D& a, const D& b) { return ad::add(a, b); }); });
  add("sub", [](Rng& r) { return binary_case(r, [](const D& a, const D& b) { return ad::sub(a, b); }); });
  add("mul", [](Rng& r) { return binary_case(r, [](const D& a, const D& b) { return ad::mul(a, b); }); });
  add("add_scalar", [](Rng& r) { return unary_case(r, {5}, -1, 1, [](const D& x) { return ad::add_scalar(x, 0.3); }); });
  add("scale", [](Rng& r) { return unary_case(r, {5}, -1, 1, [](const D& x) { return ad::scale(x, -1.7); }); });
  add("relu", [](Rng& r) { return unary_case(r, {2, 6}, -1, 1, [](const D& x) { return ad::relu(x); }); });
  add("leaky_relu", [](Rng& r) { return unary_case(r, {2, 6}, -1, 1, [](const D& x) { return ad::leaky_relu(x, 0.2); }); });
  add("tanh", [](Rng& r) { return unary_case(r, {2, 6}, -2, 2, [](const D& x) { return ad::tanh(x); }); });
  add("sigmoid", [](Rng& r) { return unary_case(r, {2, 6}, -3, 3, [](const D& x) { return ad::sigmoid(x); }); });
  add("exp", [](Rng& r) { return unary_case(r, {2, 6}, -1, 1, [](const D& x) { return ad::exp(x); }); });
  add("log", [](Rng& r) { return unary_case(r, {2, 6}, 0.2, 2, [](const D& x) { return ad::log(x); }); });
  add("abs", [](Rng& r) { return unary_case(r, {2, 6}, -1, 1, [](const D& x) { return ad::abs(x); }); });
  add("square", [](Rng& r) { return unary_case(r, {2, 6}, -1, 1, [](const D& x) { return ad::square(x); }); });
  add("clamp_min", [](Rng& r) { return unary_case(r, {2, 6}, -1, 1, [](const D& x) { return ad::clamp_min(x, 0.1); }); });
  add("sum", [](Rng& r) {
    D x = random_leaf(r, {3, 3}, -1, 1, "x");
    return Problem{[=] { return ad::square(ad::sum(x)); }, {{"x", x}}};
  });
  add("mean", [](Rng& r) {
    D x = random_leaf(r, {3, 3}, -1, 1, "x");
    return Problem{[=] { return ad::square(ad::mean(x)); }, {{"x", x}}};
  });
  add("matmul", [](Rng& r) {
    D a = random_leaf(r, {3, 4}, -1, 1, "a");
    D b = random_leaf(r, {4, 5}, -1, 1, "b");
    D p = random_const(r, {3, 5}, -1, 1);
    return Problem{[=] { return ad::sum(ad::mul(ad::matmul(a, b), p)); }, {{"a", a}, {"b", b}}};
  });
  add("linear", [](Rng& r) {
    D x = random_leaf(r, {3, 4}, -1, 1, "x");
    D w = random_leaf(r, {5, 4}, -1, 1, "weight");
    D b = random_leaf(r, {5}, -1, 1, "bias");
    D p = random_const(r, {3, 5}, -1, 1);
    return Problem{[=] { return ad::sum(ad::mul(ad::linear(x, w, b), p)); },
                   {{"x", x}, {"weight", w}, {"bias", b}}};
  });
  for (std::size_t stride : {1, 2}) {
    add("conv2d_s" + std::to_string(stride), [stride](Rng& r) {
      D x = random_leaf(r, {2, 2, 6, 6}, -1, 1, "x");
      D w = random_leaf(r, {3, 2, 3, 3}, -1, 1, "weight");
      D b = random_leaf(r, {3}, -1, 1, "bias");
      Rng pr(r.below(1u << 30));
      D y = ad::conv2d(x, w, b, stride, 1);
      D p = random_const(pr, y.shape(), -1, 1);
      return Problem{[=] { return ad::sum(ad::mul(ad::conv2d(x, w, b, stride, 1), p)); },
                     {{"x", x}, {"weight", w}, {"bias", b}}};
    });
  }
  add("conv_transpose2d", [](Rng& r) {
    D x = random_leaf(r, {2, 3, 3, 3}, -1, 1, "x");
    D w = random_leaf(r, {3, 2, 4, 4}, -1, 1, "weight");
    D b = random_leaf(r, {2}, -1, 1, "bias");
    D p = random_const(r, {2, 2, 6, 6}, -1, 1);
    return Problem{[=] { return ad::sum(ad::mul(ad::conv_transpose2d(x, w, b, 2, 1), p)); },
                   {{"x", x}, {"weight", w}, {"bias", b}}};
  });
  add("max_pool2d", [](Rng& r) {
    D x = random_leaf(r, {2, 2, 4, 4}, -1, 1, "x");
    D p = random_const(r, {2, 2, 2, 2}, -1, 1);
    return Problem{[=] { return ad::sum(ad::mul(ad::max_pool2d(x), p)); }, {{"x", x}}};
  });
  for (bool training : {true, false}) {
    add(training ? "batch_norm_train" : "batch_norm_eval", [training](Rng& r) {
      D x = random_leaf(r, {4, 3, 2, 2}, -1, 1, "x");
      D g = random_leaf(r, {3}, 0.5, 1.5, "gamma");
      D b = random_leaf(r, {3}, -0.5, 0.5, "beta");
      auto stats = std::make_shared<ad::BatchNormStats<double>>();
      stats->running_mean = random_const(r, {3}, -0.2, 0.2);
      stats->running_var = random_const(r, {3}, 0.5, 1.5);
      D p = random_const(r, {4, 3, 2, 2}, -1, 1);
      return Problem{[=] { return ad::sum(ad::mul(ad::batch_norm(x, g, b, *stats, training), p)); },
                     {{"x", x}, {"gamma", g}, {"beta", b}}};
    });
  }
  add("concat", [](Rng& r) {
    D a = random_leaf(r, {2, 3}, -1, 1, "a");
    D b = random_leaf(r, {2, 2}, -1, 1, "b");
    D p = random_const(r, {2, 5}, -1, 1);
    return Problem{[=] { return ad::sum(ad::mul(ad::concat<double>({a, b}, 1), p)); }, {{"a", a}, {"b", b}}};
  });
  add("reshape", [](Rng& r) {
    D x = random_leaf(r, {2, 6}, -1, 1, "x");
    D p = random_const(r, {3, 4}, -1, 1);
    return Problem{[=] { return ad::sum(ad::mul(ad::reshape(x, {3, 4}), p)); }, {{"x", x}}};
  });
  add("squash_warp_params", [](Rng& r) {
    D x = random_leaf(r, {2, 12}, -1.5, 1.5, "raw");
    D p = random_const(r, {2, 12}, -1, 1);
    return Problem{[=] { return ad::sum(ad::mul(ad::squash_warp_params(x, 2), p)); }, {{"raw", x}}};
  });
  return c;
}

// Geometry cases ---------------------------------------------------------

D random_theta(Rng& rng, std::size_t batch, std::size_t n, const std::string& name) {
  std::vector<double> v(batch * (2 * n * n + 4));
  for (std::size_t b = 0; b < batch; ++b) {
    double* t = v.data() + b * (2 * n * n + 4);
    for (std::size_t i = 0; i < 2 * n * n; ++i) t[i] = rng.uniform(-0.1, 0.1);
    t[2 * n * n] = rng.uniform(-0.3, 0.3);
    t[2 * n * n + 1] = rng.uniform(0.85, 1.15);
    t[2 * n * n + 2] = rng.uniform(-0.1, 0.1);
    t[2 * n * n + 3] = rng.uniform(-0.1, 0.1);
  }
  D t = D::from({batch, 2 * n * n + 4}, std::move(v), true);
  t.set_name(name);
  return t;
}

std::vector<Case> geometry_cases() {
  std::vector<Case> c;
  auto add = [&](std::string name, Builder b) { c.push_back({"geometry", std::move(name), std::move(b)}); };
  for (bool clamp : {false, true}) {
    add(clamp ? "grid_sample_clamp" : "grid_sample_fill", [clamp](Rng& r) {
      D img = random_leaf(r, {2, 1, 5, 5}, 0, 1, "image");
      // Stay off integer pixel positions so the sampler is smooth.
      D grid = random_leaf(r, {2, 4, 4, 2}, -1.1, 1.1, "grid");
      D p = random_const(r, {2, 1, 4, 4}, -1, 1);
      const auto border = clamp ? geometry::BorderPolicy::clamp() : geometry::BorderPolicy::fill(1.0);
      return Problem{[=] { return ad::sum(ad::mul(ad::grid_sample(img, grid, border), p)); },
                     {{"image", img}, {"grid", grid}}};
    });
  }
  const std::pair<const char*, geometry::WarpMode> modes[] = {
      {"affine_tps", geometry::WarpMode::affine_tps},
      {"affine_only", geometry::WarpMode::affine_only},
      {"tps_only", geometry::WarpMode::tps_only}};
  for (const auto& [label, mode] : modes) {
    add(std::string("warp_grid_") + label, [mode = mode](Rng& r) {
      D theta = random_theta(r, 2, 2, "theta");
      D p = random_const(r, {2, 6, 6, 2}, -1, 1);
      return Problem{[=] { return ad::sum(ad::mul(ad::warp_grid(theta, 2, 6, 6, mode, 1e-6), p)); },
                     {{"theta", theta}}};
    });
  }
  add("warp_composite", [](Rng& r) {
    D theta = random_theta(r, 2, 2, "theta");
    D img = random_leaf(r, {2, 1, 6, 6}, 0, 1, "image");
    D p = random_const(r, {2, 1, 6, 6}, -1, 1);
    return Problem{[=] {
                     D grid = ad::warp_grid(theta, 2, 6, 6, geometry::WarpMode::affine_tps, 1e-6);
                     return ad::sum(ad::mul(ad::grid_sample(img, grid, geometry::BorderPolicy::fill(1.0)), p));
                   },
                   {{"theta", theta}, {"image", img}}};
  });
  return c;
}

// Loss cases on tiny networks --------------------------------------------

struct Tiny {
  nn::NetConfig cfg = nn::NetConfig::tiny();
  std::shared_ptr<nn::Networks<double>> nets;
  D x, y, z1, z2;
};

// Glyph-like 8x8 sources: white background with a dark bar, plus noise.
D glyph_batch(Rng& rng, std::size_t batch, std::size_t size) {
  std::vector<double> v(batch * size * size);
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t col = 2 + rng.below(size - 4);
    for (std::size_t i = 0; i < size; ++i) {
      for (std::size_t j = 0; j < size; ++j) {
        const bool ink = j == col || j == col + 1 || (i == size / 2 && j > 1 && j + 2 < size);
        v[(b * size + i) * size + j] = ink ? rng.uniform(0.0, 0.2) : rng.uniform(0.8, 1.0);
      }
    }
  }
  return D::from({batch, 1, size, size}, std::move(v));
}

Tiny make_tiny(Rng& rng) {
  Tiny t;
  t.nets = std::make_shared<nn::Networks<double>>(nn::build_default_nets<double>(t.cfg, rng));
  const std::size_t s = t.cfg.image_size, batch = 4;
  t.x = glyph_batch(rng, batch, s);
  t.y = random_const(rng, {batch, 1, s, s}, 0.0, 1.0);
  t.z1 = normal_const(rng, {batch, t.cfg.feature_dim()});
  t.z2 = normal_const(rng, {batch, t.cfg.feature_dim()});
  return t;
}

Params concat_params(std::initializer_list<Params> lists) {
  Params out;
  for (const auto& l : lists) out.insert(out.end(), l.begin(), l.end());
  return out;
}

std::vector<Case> loss_cases() {
  std::vector<Case> c;
  auto add = [&](std::string name, Builder b) { c.push_back({"losses", std::move(name), std::move(b)}); };

  add("signal_reconstruction", [](Rng& r) {
    Tiny t = make_tiny(r);
    auto n = t.nets;
    return Problem{[=] {
                     auto& g = n->gtg;
                     D theta = nn::predict_theta(g, nn::encode(g, t.x), t.z1);
                     return losses::l1(t.x, g.recon_x.forward(theta));
                   },
                   n->gtg.generator_parameters(), true};
  });
  add("reconstruction_error_ratio", [](Rng& r) {
    Tiny t = make_tiny(r);
    auto n = t.nets;
    return Problem{[=] {
                     auto& g = n->gtg;
                     D theta = nn::predict_theta(g, nn::encode(g, t.x), t.z1);
                     return losses::rer(t.x, g.recon_x.forward(theta), t.z1, g.recon_z.forward(theta)).rer;
                   },
                   n->gtg.generator_parameters(), true};
  });
  for (double m : {6.0, 1.0001}) {
    add(m > 2 ? "snr_in_band" : "snr_out_of_band", [m](Rng& r) {
      Tiny t = make_tiny(r);
      auto n = t.nets;
      return Problem{[=] {
                       auto& g = n->gtg;
                       D theta = nn::predict_theta(g, nn::encode(g, t.x), t.z1);
                       return losses::snr_loss(t.x, g.recon_x.forward(theta), t.z1,
                                               g.recon_z.forward(theta), losses::SnrConfig{m})
                           .loss;
                     },
                     n->gtg.generator_parameters(), true};
    });
  }
  add("diversity", [](Rng& r) {
    Tiny t = make_tiny(r);
    auto n = t.nets;
    return Problem{[=] {
                     auto& g = n->gtg;
                     D f = nn::encode(g, t.x);
                     return losses::diversity_loss(nn::predict_theta(g, f, t.z1), nn::predict_theta(g, f, t.z2));
                   },
                   concat_params({n->gtg.encoder.parameters(), n->gtg.predictor.parameters()}), true};
  });
  add("stroke_aware_cycle", [](Rng& r) {
    Tiny t = make_tiny(r);
    auto n = t.nets;
    D w = losses::stroke_weights(t.x, 2.0).weights;
    return Problem{[=] {
                     auto& tt = n->ttg;
                     D rec_x = tt.gen_yx.forward(tt.gen_xy.forward(t.x));
                     D rec_y = tt.gen_xy.forward(tt.gen_yx.forward(t.y));
                     return losses::stroke_aware_cycle_loss(rec_x, t.x, rec_y, t.y, w);
                   },
                   n->ttg.generator_parameters(), true};
  });
  add("weighted_l1", [](Rng& r) {
    Tiny t = make_tiny(r);
    D w = losses::stroke_weights(t.x, 2.0).weights;
    D a = random_leaf(r, t.x.shape(), 0.0, 1.0, "reconstruction");
    return Problem{[=] { return losses::weighted_l1(a, t.x, w); }, {{"reconstruction", a}}};
  });
  add("gtg_generator", [](Rng& r) {
    Tiny t = make_tiny(r);
    auto n = t.nets;
    return Problem{[=] {
                     auto& g = n->gtg;
                     D f = nn::encode(g, t.x);
                     D theta1 = nn::predict_theta(g, f, t.z1);
                     D theta2 = nn::predict_theta(g, f, t.z2);
                     D x_t = nn::warp(t.cfg, t.x, theta1);
                     auto snr = losses::snr_loss(t.x, g.recon_x.forward(theta1), t.z1,
                                                 g.recon_z.forward(theta1), losses::SnrConfig{6.0});
                     return ad::add(ad::add(losses::gtg_gen_loss(g.disc, x_t), snr.loss),
                                    losses::diversity_loss(theta1, theta2));
                   },
                   n->gtg.generator_parameters(), true};
  });
  add("gtg_discriminator", [](Rng& r) {
    Tiny t = make_tiny(r);
    auto n = t.nets;
    D x_t, y_d;
    {
      ad::NoGradGuard guard;
      x_t = nn::warp(t.cfg, t.x, nn::predict_theta(n->gtg, nn::encode(n->gtg, t.x), t.z1));
      y_d = n->ttg.gen_yx.forward(t.y);
    }
    return Problem{[=] { return losses::gtg_disc_loss(n->gtg.disc, x_t, y_d); },
                   n->gtg.disc.parameters(), true};
  });
  add("ttg_generator", [](Rng& r) {
    Tiny t = make_tiny(r);
    auto n = t.nets;
    D w = losses::stroke_weights(t.x, 2.0).weights;
    return Problem{[=] { return losses::ttg_gen_loss(n->ttg, t.x, t.y, w, 10.0).total; },
                   n->ttg.generator_parameters(), true};
  });
  add("ttg_discriminator", [](Rng& r) {
    Tiny t = make_tiny(r);
    auto n = t.nets;
    D fake_y, fake_x;
    {
      ad::NoGradGuard guard;
      fake_y = n->ttg.gen_xy.forward(t.x);
      fake_x = n->ttg.gen_yx.forward(t.y);
    }
    return Problem{[=] { return losses::ttg_disc_loss(n->ttg, t.x, fake_y, t.y, fake_x); },
                   n->ttg.discriminator_parameters(), true};
  });
  return c;
}

const std::vector<Case>& registry() {
  static const std::vector<Case> all = [] {
    std::vector<Case> out;
    for (auto&& group : {op_cases(), geometry_cases(), loss_cases()}) {
      out.insert(out.end(), group.begin(), group.end());
    }
    return out;
  }();
  return all;
}

bool in_suite(const Case& c, const std::string& suite) { return suite == "all" || c.suite == suite; }

void check_suite_name(const std::string& suite) {
  if (suite != "all" && suite != "ops" && suite != "geometry" && suite != "losses") {
    throw std::invalid_argument("unknown grad-check suite '" + suite +
                                "' (expected all, ops, geometry or losses)");
  }
}

CaseResult execute(const Case& c, const SuiteOptions& options, std::size_t index) {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(options.seed * 1000003ULL + index);
  Problem p = c.build(rng);
  ad::GradCheckOptions check = options.check;
  if (p.sampled) {
    check.max_entries_per_param = options.entries_per_param;
    check.step = options.network_step;
    check.floor = std::max(check.floor, options.network_floor);
  }
  check.seed = options.seed + index;
  CaseResult r{c.suite, c.name, ad::grad_check(p.f, p.params, check), 0.0};
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

}  // namespace

std::vector<std::string> case_names(const std::string& suite) {
  check_suite_name(suite);
  std::vector<std::string> out;
  for (const auto& c : registry()) {
    if (in_suite(c, suite)) out.push_back(c.name);
  }
  return out;
}

std::vector<CaseResult> run(const std::string& suite, const SuiteOptions& options) {
  check_suite_name(suite);
  std::vector<CaseResult> out;
  const auto& cases = registry();
  for (std::size_t i = 0; i < cases.size(); ++i) {
    if (in_suite(cases[i], suite)) out.push_back(execute(cases[i], options, i));
  }
  return out;
}

CaseResult run_case(const std::string& suite, const std::string& name, const SuiteOptions& options) {
  check_suite_name(suite);
  const auto& cases = registry();
  for (std::size_t i = 0; i < cases.size(); ++i) {
    if (in_suite(cases[i], suite) && cases[i].name == name) return execute(cases[i], options, i);
  }
  throw std::invalid_argument("unknown grad-check case '" + name + "'");
}

}  // namespace glyphforge::gradsuite
