#pragma once
// Adam with bias correction and a constant-then-linear-decay schedule.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "glyphforge/tensor.hpp"

namespace glyphforge::ad {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// rate(t) = initial for t < constant_iters, then linear to 0 over
/// decay_iters, 0 afterward.
struct LrSchedule {
  double initial_rate = 1e-4;
  std::size_t constant_iters = 0;
  std::size_t decay_iters = 0;

  double rate(std::size_t t) const;
};

template <typename T>
class Adam {
 public:
  explicit Adam(std::vector<NamedTensor<T>> params, AdamConfig config = {});

  /// Applies one update from the parameters' accumulated gradients.
  /// Throws NonFiniteError naming the first parameter with a non-finite
  /// gradient; no parameter is modified in that case.
  void step(double lr);

  void zero_grad();

  std::uint64_t step_count() const { return step_; }
  const AdamConfig& config() const { return config_; }
  const std::vector<NamedTensor<T>>& params() const { return params_; }
  const std::vector<std::vector<T>>& first_moments() const { return m_; }
  const std::vector<std::vector<T>>& second_moments() const { return v_; }

  /// Restores optimizer slots (checkpoint load). Sizes must match.
  void restore(std::uint64_t step, std::vector<std::vector<T>> m, std::vector<std::vector<T>> v);

 private:
  std::vector<NamedTensor<T>> params_;
  AdamConfig config_;
  std::uint64_t step_ = 0;
  std::vector<std::vector<T>> m_;
  std::vector<std::vector<T>> v_;
};

}  // namespace glyphforge::ad
