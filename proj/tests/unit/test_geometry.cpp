#include <doctest.h>

#include <cmath>
#include <numbers>

#include "glyphforge/geometry.hpp"
#include "glyphforge/gradcheck.hpp"
#include "glyphforge/ops.hpp"
#include "helpers.hpp"

using namespace glyphforge;
using namespace glyphforge::geometry;

namespace {

WarpParams random_params(Rng& rng, std::size_t n, double offset, bool with_affine) {
  WarpParams p = identity_params(n);
  for (auto& o : p.tps_offsets) o = {rng.uniform(-offset, offset), rng.uniform(-offset, offset)};
  if (with_affine) p.affine = {rng.uniform(-0.4, 0.4), rng.uniform(0.8, 1.2), rng.uniform(-0.2, 0.2),
                               rng.uniform(-0.2, 0.2)};
  return p;
}

double max_grid_diff(const SamplingGrid& a, const SamplingGrid& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.coords.size(); ++i) {
    worst = std::max({worst, std::abs(a.coords[i].u - b.coords[i].u), std::abs(a.coords[i].v - b.coords[i].v)});
  }
  return worst;
}

}  // namespace

TEST_SUITE("geometry") {

TEST_CASE("identity params layout") {
  const auto p = identity_params(4);
  const auto flat = p.flatten();
  REQUIRE(flat.size() == 36);
  for (std::size_t i = 0; i < 32; ++i) CHECK(flat[i] == 0.0);
  CHECK(flat[32] == 0.0);
  CHECK(flat[33] == 1.0);
  CHECK(flat[34] == 0.0);
  CHECK(flat[35] == 0.0);
  CHECK_THROWS(identity_params(1));
}

TEST_CASE("flatten and unflatten are inverse") {
  Rng rng(1);
  for (std::size_t n : {2, 3, 4, 5}) {
    const auto p = random_params(rng, n, 0.2, true);
    const auto flat = p.flatten();
    REQUIRE(flat.size() == 2 * n * n + 4);
    CHECK(WarpParams::unflatten(flat, n).flatten() == flat);
  }
  std::vector<double> short_flat(10, 0.0);
  CHECK_THROWS_AS(WarpParams::unflatten(short_flat, 4), std::invalid_argument);
  auto bad = identity_params(2).flatten();
  bad[3] = std::nan("");
  CHECK_THROWS_AS(WarpParams::unflatten(bad, 2), std::invalid_argument);
}

TEST_CASE("TPS fit of the identity has zero bending weights") {
  const auto src = control_grid(4);
  const auto c = solve_tps(src, src, 0.0);
  for (double w : c.weights_u) CHECK(std::abs(w) <= 1e-10);
  for (double w : c.weights_v) CHECK(std::abs(w) <= 1e-10);
  CHECK(c.affine_u[0] == doctest::Approx(0.0).epsilon(1e-10));
  CHECK(c.affine_u[1] == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(std::abs(c.affine_u[2]) <= 1e-10);
  CHECK(std::abs(c.affine_v[0]) <= 1e-10);
  CHECK(std::abs(c.affine_v[1]) <= 1e-10);
  CHECK(c.affine_v[2] == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("uniform translation lands in the affine part") {
  const auto src = control_grid(4);
  std::vector<Point> dst = src;
  for (auto& p : dst) p.u += 0.1;
  const auto c = solve_tps(src, dst, 0.0);
  for (double w : c.weights_u) CHECK(std::abs(w) <= 1e-8);
  for (double w : c.weights_v) CHECK(std::abs(w) <= 1e-8);
  CHECK(c.affine_u[0] == doctest::Approx(0.1).epsilon(1e-10));
}

TEST_CASE("TPS interpolates random control targets exactly") {
  Rng rng(2);
  const auto src = control_grid(4);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    std::vector<Point> dst = src;
    for (auto& p : dst) {
      p.u += rng.uniform(-0.1, 0.1);
      p.v += rng.uniform(-0.1, 0.1);
    }
    const auto c = solve_tps(src, dst, 0.0);
    for (std::size_t i = 0; i < src.size(); ++i) {
      const Point q = c.evaluate(src[i]);
      worst = std::max({worst, std::abs(q.u - dst[i].u), std::abs(q.v - dst[i].v)});
    }
  }
  CHECK(worst <= 1e-6);
}

TEST_CASE("degenerate control layouts are rejected") {
  std::vector<Point> line{{0, 0}, {0.5, 0}, {1, 0}, {-1, 0}};
  CHECK_THROWS_AS(solve_tps(line, line, 0.0), TpsSolveError);
  CHECK_THROWS_AS(solve_tps(std::vector<Point>{{0, 0}, {1, 1}}, std::vector<Point>{{0, 0}, {1, 1}}, 0.0),
                  std::invalid_argument);
}

TEST_CASE("identity params give the base grid exactly") {
  const auto g = build_grid(identity_params(4), 9, 13);
  const auto base = base_grid(9, 13);
  CHECK(max_grid_diff(g, base) == 0.0);
  CHECK_FALSE(g.tps_failed);
}

TEST_CASE("pure shift translates every coordinate") {
  auto p = identity_params(4);
  p.affine = {0.0, 1.0, 0.5, 0.0};
  const auto g = build_grid(p, 8, 8);
  const auto base = base_grid(8, 8);
  for (std::size_t i = 0; i < g.coords.size(); ++i) {
    CHECK(g.coords[i].u == doctest::Approx(base.coords[i].u + 0.5).epsilon(1e-12));
    CHECK(g.coords[i].v == doctest::Approx(base.coords[i].v).epsilon(1e-12));
  }
}

TEST_CASE("quarter turn rotates the base grid") {
  auto p = identity_params(4);
  p.affine.rotation = std::numbers::pi / 2;
  const auto g = build_grid(p, 6, 6);
  const auto base = base_grid(6, 6);
  for (std::size_t i = 0; i < g.coords.size(); ++i) {
    // (u, v) -> (-v, u) for a counter-clockwise quarter turn.
    CHECK(std::abs(g.coords[i].u - (-base.coords[i].v)) <= 1e-6);
    CHECK(std::abs(g.coords[i].v - base.coords[i].u) <= 1e-6);
  }
}

TEST_CASE("mode composition matches the single-stage grids") {
  Rng rng(5);
  for (int t = 0; t < 10; ++t) {
    const auto full = random_params(rng, 4, 0.15, true);
    auto affine_part = full;
    for (auto& o : affine_part.tps_offsets) o = {0.0, 0.0};
    auto tps_part = full;
    tps_part.affine = AffineParams{};
    CHECK(max_grid_diff(build_grid(affine_part, 10, 10, WarpMode::affine_tps),
                        build_grid(full, 10, 10, WarpMode::affine_only)) <= 1e-9);
    CHECK(max_grid_diff(build_grid(tps_part, 10, 10, WarpMode::affine_tps),
                        build_grid(full, 10, 10, WarpMode::tps_only)) <= 1e-9);
  }
}

TEST_CASE("sampling at pixel centers returns the pixels") {
  Rng rng(6);
  const Image img = testutil::random_image(rng, 7, 5);
  const Image out = bilinear_sample(img, base_grid(7, 5));
  for (std::size_t p = 0; p < img.size(); ++p) CHECK(std::abs(out.data()[p] - img.data()[p]) <= 1e-12);
}

TEST_CASE("identity warp is a no-op on random images") {
  Rng rng(7);
  const auto grid = build_grid(identity_params(4), 64, 64);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const Image img = testutil::random_image(rng, 64, 64);
    const Image out = bilinear_sample(img, grid);
    for (std::size_t p = 0; p < img.size(); ++p) worst = std::max(worst, std::abs(out.data()[p] - img.data()[p]));
  }
  CHECK(worst <= 1e-6);
}

TEST_CASE("midpoint between two pixels averages them") {
  const Image img(1, 2, std::vector<double>{0.0, 1.0});
  SamplingGrid g;
  g.height = 1;
  g.width = 1;
  g.coords = {{0.0, 0.0}};  // halfway between the centers at u = -0.5 and 0.5
  CHECK(bilinear_sample(img, g).data()[0] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("border policies") {
  const Image img(2, 2, 0.2);
  SamplingGrid g;
  g.height = 1;
  g.width = 2;
  g.coords = {{5.0, 5.0}, {-3.0, 0.0}};
  const Image filled = bilinear_sample(img, g, BorderPolicy::fill(1.0));
  CHECK(filled.data()[0] == 1.0);
  CHECK(filled.data()[1] == 1.0);
  const Image clamped = bilinear_sample(img, g, BorderPolicy::clamp());
  CHECK(clamped.data()[0] == doctest::Approx(0.2));
  CHECK(clamped.data()[1] == doctest::Approx(0.2));
}

TEST_CASE("sampler Jacobian matches finite differences at non-integer points") {
  Rng rng(9);
  auto img = testutil::random_tensor<double>(rng, {1, 1, 6, 6}, 0.0, 1.0, true);
  std::vector<double> coords;
  for (int i = 0; i < 2 * 5 * 5; ++i) {
    // s = (u + 1) * 6 / 2 - 0.5 is integral at pixel centers; stay between.
    const double s = static_cast<double>(rng.below(6)) - 1.0 + rng.uniform(0.1, 0.9);
    coords.push_back((s + 0.5) * 2.0 / 6.0 - 1.0);
  }
  auto grid = ad::Tensor<double>::from({1, 5, 5, 2}, coords, true);
  auto weights = testutil::random_tensor<double>(rng, {1, 1, 5, 5}, -1.0, 1.0);
  const auto report = ad::grad_check(
      [&] { return ad::sum(ad::mul(ad::grid_sample(img, grid, BorderPolicy::fill(1.0)), weights)); },
      {{"image", img}, {"grid", grid}});
  CHECK(report.passed);
  CHECK(report.max_rel_error <= 1e-3);
  CHECK(report.kinks == 0);
}

TEST_CASE("warp grid gradient in every mode") {
  Rng rng(10);
  for (auto mode : {WarpMode::affine_tps, WarpMode::affine_only, WarpMode::tps_only}) {
    auto flat = random_params(rng, 3, 0.1, true).flatten();
    auto theta = ad::Tensor<double>::from({1, flat.size()}, flat, true);
    auto weights = testutil::random_tensor<double>(rng, {1, 7, 7, 2}, -1.0, 1.0);
    const auto report = ad::grad_check(
        [&] { return ad::sum(ad::mul(ad::warp_grid(theta, 3, 7, 7, mode, 1e-6), weights)); },
        {{"theta", theta}});
    CHECK(report.passed);
  }
}

}  // TEST_SUITE
