#pragma once
// Pixel-space authenticity (NDB, JSD) and diversity measures.

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "glyphforge/image.hpp"
#include "json.hpp"

namespace glyphforge::eval {

class EvalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct BinModel {
  std::size_t dim = 0;                          // pixels per image
  std::vector<std::vector<double>> centroids;   // K x dim
  std::vector<double> proportions;              // real-set share per bin
  std::vector<std::size_t> counts;              // real-set count per bin
  std::size_t n_real = 0;
  std::vector<double> inertia_history;          // after each Lloyd step

  std::size_t k() const { return centroids.size(); }
  /// Index of the nearest centroid (lowest index on ties).
  std::size_t assign(const std::vector<double>& pixels) const;
};

struct KMeansOptions {
  std::size_t max_iters = 100;
  double tolerance = 1e-6;  // relative inertia change
};

/// Lloyd's k-means over flattened pixels, k-means++ seeding.
BinModel fit_bins(const std::vector<Image>& real, std::size_t k, std::uint64_t seed,
                  const KMeansOptions& options = {});

struct NdbResult {
  std::size_t ndb = 0;
  double jsd = 0.0;  // bits
  std::vector<double> gen_proportions;
  std::vector<bool> different;
};

/// Two-sided critical value of the standard normal at the given level.
double normal_critical_value(double significance);

/// Base-2 Jensen-Shannon divergence with add-eps smoothing.
double jensen_shannon(const std::vector<double>& p, const std::vector<double>& q,
                      double eps = 1e-12);

NdbResult ndb_jsd(const BinModel& model, const std::vector<Image>& generated,
                  double significance = 0.05);

/// Mean over unordered pairs of the mean absolute pixel difference.
double pairwise_diversity(const std::vector<Image>& images);

struct EvalResult {
  std::size_t ndb = 0;
  std::size_t k = 0;
  double jsd = 0.0;
  double diversity = 0.0;
  std::size_t n_real = 0;
  std::size_t n_gen = 0;
};

void to_json(nlohmann::json& j, const EvalResult& r);

}  // namespace glyphforge::eval
