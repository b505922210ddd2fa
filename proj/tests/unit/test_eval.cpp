#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "glyphforge/eval.hpp"
#include "helpers.hpp"

using namespace glyphforge;
using namespace glyphforge::eval;

namespace {

std::vector<Image> constants(const std::vector<double>& levels, std::size_t side = 4) {
  std::vector<Image> out;
  for (double v : levels) out.emplace_back(side, side, v);
  return out;
}

// Straight from the definition: 1/2 KL(p||m) + 1/2 KL(q||m), base 2.
double jsd_oracle(const std::vector<double>& p, const std::vector<double>& q) {
  double out = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    if (p[i] > 0) out += 0.5 * p[i] * std::log2(p[i] / m);
    if (q[i] > 0) out += 0.5 * q[i] * std::log2(q[i] / m);
  }
  return out;
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("k-means recovers two constant clusters") {
  Rng rng(1);
  std::vector<Image> real;
  for (int i = 0; i < 20; ++i) real.emplace_back(5, 5, i % 2 ? 0.9 : 0.1);
  const auto m = fit_bins(real, 2, 3);
  REQUIRE(m.k() == 2);
  std::vector<double> c{m.centroids[0][0], m.centroids[1][0]};
  std::sort(c.begin(), c.end());
  CHECK(std::abs(c[0] - 0.1) <= 1e-6);
  CHECK(std::abs(c[1] - 0.9) <= 1e-6);
  for (double v : m.centroids[0]) CHECK(v == doctest::Approx(m.centroids[0][0]));
  CHECK(m.proportions[0] + m.proportions[1] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("one image per cluster has zero inertia") {
  Rng rng(2);
  std::vector<Image> real;
  for (int i = 0; i < 6; ++i) real.push_back(testutil::random_image(rng, 4, 4));
  const auto m = fit_bins(real, 6, 1);
  REQUIRE_FALSE(m.inertia_history.empty());
  CHECK(m.inertia_history.back() == doctest::Approx(0.0));
  CHECK_THROWS_AS(fit_bins(real, 7, 1), EvalError);
}

TEST_CASE("fit is deterministic and inertia never increases") {
  Rng rng(3);
  std::vector<Image> real;
  for (int i = 0; i < 120; ++i) real.push_back(testutil::random_image(rng, 6, 6));
  const auto a = fit_bins(real, 8, 5), b = fit_bins(real, 8, 5);
  CHECK(a.centroids == b.centroids);
  for (std::size_t i = 1; i < a.inertia_history.size(); ++i)
    CHECK(a.inertia_history[i] <= a.inertia_history[i - 1] * (1 + 1e-12));
  double total = 0.0;
  for (double p : a.proportions) total += p;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("the real set against itself") {
  Rng rng(4);
  std::vector<Image> real;
  for (int i = 0; i < 200; ++i) real.push_back(testutil::random_image(rng, 5, 5));
  const auto m = fit_bins(real, 10, 2);
  const auto r = ndb_jsd(m, real);
  CHECK(r.ndb == 0);
  CHECK(r.jsd <= 1e-9);
}

TEST_CASE("everything in one bin against a uniform real set") {
  std::vector<double> levels;
  for (int i = 0; i < 50; ++i) levels.push_back(i / 49.0);
  const auto real = constants(levels);
  const auto m = fit_bins(real, 50, 7);
  for (double p : m.proportions) CHECK(p == doctest::Approx(1.0 / 50));
  const auto gen = constants(std::vector<double>(30, 0.0));
  const auto r = ndb_jsd(m, gen);

  std::vector<double> p(50, 1.0 / 50), q(50, 0.0);
  q[m.assign(std::vector<double>(gen[0].data().begin(), gen[0].data().end()))] = 1.0;
  const double oracle = jsd_oracle(p, q);
  CHECK(oracle >= 0.9);
  CHECK(r.jsd == doctest::Approx(oracle).epsilon(1e-9));
  CHECK(r.ndb >= 1);
  CHECK(r.ndb <= 50);
}

TEST_CASE("Jensen-Shannon bounds") {
  CHECK(jensen_shannon({1.0, 0.0}, {0.0, 1.0}) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(jensen_shannon({0.3, 0.7}, {0.3, 0.7}) <= 1e-12);
  Rng rng(5);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> p(6), q(6);
    double sp = 0, sq = 0;
    for (auto& v : p) sp += (v = rng.uniform());
    for (auto& v : q) sq += (v = rng.uniform());
    for (auto& v : p) v /= sp;
    for (auto& v : q) v /= sq;
    const double j = jensen_shannon(p, q);
    CHECK(j >= 0.0);
    CHECK(j <= 1.0);
    CHECK(j == doctest::Approx(jsd_oracle(p, q)).epsilon(1e-9));
  }
}

TEST_CASE("NDB flags bins that clearly differ") {
  std::vector<double> levels;
  for (int i = 0; i < 40; ++i) levels.push_back(i % 2 ? 0.8 : 0.2);
  const auto m = fit_bins(constants(levels), 2, 1);
  const auto r = ndb_jsd(m, constants(std::vector<double>(40, 0.2)));
  CHECK(r.ndb == 2);
  CHECK(normal_critical_value(0.05) == doctest::Approx(1.959964).epsilon(1e-6));
  CHECK(normal_critical_value(0.01) == doctest::Approx(2.575829).epsilon(1e-6));
}

TEST_CASE("ndb_jsd is permutation invariant") {
  Rng rng(6);
  std::vector<Image> real, gen;
  for (int i = 0; i < 80; ++i) real.push_back(testutil::random_image(rng, 4, 4));
  for (int i = 0; i < 60; ++i) gen.push_back(testutil::random_image(rng, 4, 4));
  const auto m = fit_bins(real, 5, 9);
  const auto a = ndb_jsd(m, gen);
  std::reverse(gen.begin(), gen.end());
  std::rotate(gen.begin(), gen.begin() + 17, gen.end());
  const auto b = ndb_jsd(m, gen);
  CHECK(a.ndb == b.ndb);
  CHECK(a.jsd == doctest::Approx(b.jsd).epsilon(1e-12));

  // Reordering the real set changes seeding but not the bins it can reach
  // on well-separated data.
  auto shuffled = constants({0.1, 0.9, 0.1, 0.9, 0.5, 0.5});
  const auto m1 = fit_bins(shuffled, 3, 2);
  std::reverse(shuffled.begin(), shuffled.end());
  const auto m2 = fit_bins(shuffled, 3, 2);
  const auto probe = constants({0.1, 0.1, 0.5, 0.9});
  const auto r1 = ndb_jsd(m1, probe), r2 = ndb_jsd(m2, probe);
  CHECK(r1.ndb == r2.ndb);
  CHECK(r1.jsd == doctest::Approx(r2.jsd).epsilon(1e-12));
}

TEST_CASE("pairwise diversity examples") {
  Rng rng(7);
  const Image a = testutil::random_image(rng, 5, 5);
  CHECK(pairwise_diversity({a, a, a}) == 0.0);
  CHECK(pairwise_diversity({Image(3, 3, 0.0), Image(3, 3, 1.0)}) == 1.0);
  const Image b = testutil::random_image(rng, 5, 5), c = testutil::random_image(rng, 5, 5);
  auto mad = [](const Image& x, const Image& y) {
    double s = 0.0;
    for (std::size_t p = 0; p < x.size(); ++p) s += std::abs(x.data()[p] - y.data()[p]);
    return s / x.size();
  };
  const double brute = (mad(a, b) + mad(a, c) + mad(b, c)) / 3.0;
  CHECK(std::abs(pairwise_diversity({a, b, c}) - brute) <= 1e-12);
  CHECK_THROWS_AS(pairwise_diversity({a}), EvalError);
  CHECK_THROWS_AS(pairwise_diversity({a, Image(2, 2, 0.0)}), EvalError);
}

TEST_CASE("result JSON keys") {
  EvalResult r;
  r.ndb = 3;
  r.k = 50;
  nlohmann::json j = r;
  for (const char* k : {"ndb", "K", "jsd", "diversity", "n_real", "n_gen"}) CHECK(j.contains(k));
}

}  // TEST_SUITE
