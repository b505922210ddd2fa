#include "glyphforge/eval.hpp"

#include <cmath>
#include <limits>

#include "glyphforge/kernels.hpp"
#include "glyphforge/parallel.hpp"
#include "glyphforge/rng.hpp"

namespace glyphforge::eval {

namespace {

std::vector<std::vector<double>> flatten(const std::vector<Image>& images, std::size_t dim) {
  std::vector<std::vector<double>> out;
  out.reserve(images.size());
  for (const auto& img : images) {
    if (img.size() != dim) {
      throw EvalError("image size mismatch: expected " + std::to_string(dim) + " pixels, got " +
                      std::to_string(img.size()));
    }
    out.emplace_back(img.data().begin(), img.data().end());
  }
  return out;
}

struct Nearest {
  std::size_t index;
  double distance;
};

Nearest nearest(const std::vector<std::vector<double>>& centroids, const double* x,
                std::size_t dim) {
  Nearest best{0, std::numeric_limits<double>::infinity()};
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double d = kernels::squared_distance(dim, centroids[c].data(), x);
    if (d < best.distance) best = {c, d};
  }
  return best;
}

}  // namespace

std::size_t BinModel::assign(const std::vector<double>& pixels) const {
  if (pixels.size() != dim) throw EvalError("assign: pixel count mismatch");
  return nearest(centroids, pixels.data(), dim).index;
}

BinModel fit_bins(const std::vector<Image>& real, std::size_t k, std::uint64_t seed,
                  const KMeansOptions& options) {
  if (k < 2) throw EvalError("bin count must be >= 2");
  if (real.size() < k) {
    throw EvalError("need at least " + std::to_string(k) + " images, got " +
                    std::to_string(real.size()));
  }
  BinModel model;
  model.dim = real.front().size();
  const auto xs = flatten(real, model.dim);
  const std::size_t n = xs.size(), dim = model.dim;
  Rng rng(seed);

  // k-means++ seeding.
  model.centroids.push_back(xs[rng.below(n)]);
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = kernels::squared_distance(dim, xs[i].data(), model.centroids[0].data());
  while (model.centroids.size() < k) {
    double total = 0.0;
    for (double v : d2) total += v;
    std::size_t pick = 0;
    if (total > 0.0) {
      const double r = rng.uniform() * total;
      double acc = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc > r && d2[i] > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = rng.below(n);
    }
    model.centroids.push_back(xs[pick]);
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], kernels::squared_distance(dim, xs[i].data(), model.centroids.back().data()));
    }
  }

  std::vector<std::size_t> labels(n);
  std::vector<double> dist(n);
  auto assign_all = [&] {
    parallel_for(n, 16, [&](std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i) {
        const Nearest nb = nearest(model.centroids, xs[i].data(), dim);
        labels[i] = nb.index;
        dist[i] = nb.distance;
      }
    });
    double inertia = 0.0;
    for (double v : dist) inertia += v;
    return inertia;
  };

  double inertia = assign_all();
  for (std::size_t it = 0; it < options.max_iters; ++it) {
    std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      kernels::axpy(dim, 1.0, xs[i].data(), sums[labels[i]].data());
      ++counts[labels[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;  // empty cluster keeps its centroid
      for (std::size_t p = 0; p < dim; ++p) model.centroids[c][p] = sums[c][p] / counts[c];
    }
    const double next = assign_all();
    model.inertia_history.push_back(next);
    const double change = inertia > 0.0 ? (inertia - next) / inertia : 0.0;
    inertia = next;
    if (std::abs(change) < options.tolerance) break;
  }

  model.counts.assign(k, 0);
  for (std::size_t l : labels) ++model.counts[l];
  model.proportions.resize(k);
  for (std::size_t c = 0; c < k; ++c) model.proportions[c] = static_cast<double>(model.counts[c]) / n;
  model.n_real = n;
  return model;
}

double normal_critical_value(double significance) {
  if (!(significance > 0.0 && significance < 1.0)) {
    throw EvalError("significance must lie in (0, 1)");
  }
  // Solve erfc(z / sqrt 2) = significance; erfc is decreasing.
  double lo = 0.0, hi = 40.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (std::erfc(mid / std::sqrt(2.0)) > significance) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

double jensen_shannon(const std::vector<double>& p, const std::vector<double>& q, double eps) {
  if (p.size() != q.size() || p.empty()) throw EvalError("histogram size mismatch");
  auto smooth = [&](const std::vector<double>& h) {
    std::vector<double> s(h.size());
    double total = 0.0;
    for (std::size_t i = 0; i < h.size(); ++i) total += (s[i] = h[i] + eps);
    for (auto& v : s) v /= total;
    return s;
  };
  const auto ps = smooth(p), qs = smooth(q);
  double js = 0.0;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const double m = 0.5 * (ps[i] + qs[i]);
    js += 0.5 * ps[i] * std::log2(ps[i] / m) + 0.5 * qs[i] * std::log2(qs[i] / m);
  }
  return std::clamp(js, 0.0, 1.0);
}

NdbResult ndb_jsd(const BinModel& model, const std::vector<Image>& generated,
                  double significance) {
  if (generated.empty()) throw EvalError("generated set is empty");
  const auto xs = flatten(generated, model.dim);
  const std::size_t k = model.k(), n_gen = xs.size();
  std::vector<std::size_t> labels(n_gen);
  parallel_for(n_gen, 16, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) labels[i] = nearest(model.centroids, xs[i].data(), model.dim).index;
  });
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t l : labels) ++counts[l];

  NdbResult r;
  r.gen_proportions.resize(k);
  r.different.assign(k, false);
  const double z_crit = normal_critical_value(significance);
  const double n1 = static_cast<double>(model.n_real), n2 = static_cast<double>(n_gen);
  for (std::size_t c = 0; c < k; ++c) {
    const double p1 = model.proportions[c];
    const double p2 = static_cast<double>(counts[c]) / n2;
    r.gen_proportions[c] = p2;
    const double pooled = (static_cast<double>(model.counts[c]) + counts[c]) / (n1 + n2);
    const double se = std::sqrt(pooled * (1.0 - pooled) * (1.0 / n1 + 1.0 / n2));
    if (se > 0.0 && std::abs(p1 - p2) / se > z_crit) {
      r.different[c] = true;
      ++r.ndb;
    }
  }
  r.jsd = jensen_shannon(model.proportions, r.gen_proportions);
  return r;
}

double pairwise_diversity(const std::vector<Image>& images) {
  if (images.size() < 2) throw EvalError("pairwise diversity needs at least 2 images");
  const std::size_t dim = images.front().size();
  for (const auto& img : images) {
    if (img.height() != images.front().height() || img.width() != images.front().width()) {
      throw EvalError("pairwise diversity needs equal image dimensions");
    }
  }
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t a = 0; a < images.size(); ++a) {
    for (std::size_t b = a + 1; b < images.size(); ++b) {
      const auto& da = images[a].data();
      const auto& db = images[b].data();
      double s = 0.0;
      for (std::size_t p = 0; p < dim; ++p) s += std::abs(da[p] - db[p]);
      total += s / dim;
      ++pairs;
    }
  }
  return total / pairs;
}

void to_json(nlohmann::json& j, const EvalResult& r) {
  j = nlohmann::json{{"ndb", r.ndb},         {"K", r.k},         {"jsd", r.jsd},
                     {"diversity", r.diversity}, {"n_real", r.n_real}, {"n_gen", r.n_gen}};
}

}  // namespace glyphforge::eval
