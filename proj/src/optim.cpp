#include "glyphforge/optim.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace glyphforge::ad {

double LrSchedule::rate(std::size_t t) const {
  if (t < constant_iters) return initial_rate;
  if (t >= constant_iters + decay_iters) return 0.0;
  const double frac = static_cast<double>(t - constant_iters) / static_cast<double>(decay_iters);
  return initial_rate * (1.0 - frac);
}

template <typename T>
Adam<T>::Adam(std::vector<NamedTensor<T>> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.size(), T(0));
    v_.emplace_back(p.tensor.size(), T(0));
  }
}

template <typename T>
void Adam<T>::step(double lr) {
  for (const auto& p : params_) {
    if (!p.tensor.has_grad()) continue;
    for (T g : p.tensor.node()->grad) {
      if (!std::isfinite(g)) throw NonFiniteError("non-finite gradient for parameter '" + p.name + "'");
    }
  }
  ++step_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& node = *params_[i].tensor.node();
    const bool has = node.grad.size() == node.value.size();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < node.value.size(); ++j) {
      const double g = has ? static_cast<double>(node.grad[j]) : 0.0;
      const double mj = b1 * m[j] + (1.0 - b1) * g;
      const double vj = b2 * v[j] + (1.0 - b2) * g * g;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double update = lr * (mj / c1) / (std::sqrt(vj / c2) + config_.eps);
      node.value[j] = static_cast<T>(node.value[j] - update);
    }
  }
}

template <typename T>
void Adam<T>::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

template <typename T>
void Adam<T>::restore(std::uint64_t step, std::vector<std::vector<T>> m,
                      std::vector<std::vector<T>> v) {
  if (m.size() != params_.size() || v.size() != params_.size()) {
    throw std::invalid_argument("Adam::restore: slot count mismatch");
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (m[i].size() != params_[i].tensor.size() || v[i].size() != params_[i].tensor.size()) {
      throw std::invalid_argument("Adam::restore: slot size mismatch for '" + params_[i].name + "'");
    }
  }
  step_ = step;
  m_ = std::move(m);
  v_ = std::move(v);
}

template class Adam<float>;
template class Adam<double>;

}  // namespace glyphforge::ad
