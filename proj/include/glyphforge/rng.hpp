#pragma once
// Seeded random source. Normal draws use Box-Muller without caching the
// second variate, so the engine state alone captures the full stream
// position (checkpoint-safe).

#include <cstdint>
#include <random>
#include <string>

namespace glyphforge {

class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  /// Normal(0, sigma) redrawn until |x| <= 2 sigma.
  double truncated_normal(double sigma);
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  std::string state() const;
  void set_state(const std::string& s);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace glyphforge
