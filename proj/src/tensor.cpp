#include "glyphforge/tensor.hpp"

#include <bit>
#include <cstdint>
#include <unordered_set>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace glyphforge::ad {

namespace {

// Graph buffers of a few MB are allocated and freed many times per step.
// glibc hands such blocks back to the kernel on free, and the page faults
// on reuse cost more than the arithmetic. Keep them in the heap instead.
[[maybe_unused]] const bool kAllocatorTuned = [] {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 32 * 1024 * 1024);
  mallopt(M_TRIM_THRESHOLD, 512 * 1024 * 1024);
  mallopt(M_TOP_PAD, 64 * 1024 * 1024);
#endif
  return true;
}();

}  // namespace

namespace {
thread_local bool g_grad_enabled = true;

// Exponent-all-ones test on the raw bits; vectorizes, unlike isfinite.
bool all_finite(const std::vector<float>& v) {
  std::uint32_t bad = 0;
  for (float x : v) {
    const auto bits = std::bit_cast<std::uint32_t>(x);
    bad |= static_cast<std::uint32_t>((bits & 0x7f800000u) == 0x7f800000u);
  }
  return bad == 0;
}

bool all_finite(const std::vector<double>& v) {
  std::uint64_t bad = 0;
  for (double x : v) {
    const auto bits = std::bit_cast<std::uint64_t>(x);
    bad |= static_cast<std::uint64_t>((bits & 0x7ff0000000000000ull) == 0x7ff0000000000000ull);
  }
  return bad == 0;
}
}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T fill, bool requires_grad) {
  auto node = std::make_shared<Node<T>>();
  node->value.assign(numel(shape), fill);
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return Tensor(node);
}

template <typename T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> values, bool requires_grad) {
  if (numel(shape) != values.size()) {
    throw ShapeError("Tensor::from: shape " + shape_str(shape) + " needs " +
                     std::to_string(numel(shape)) + " values, got " +
                     std::to_string(values.size()));
  }
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(node);
}

template <typename T>
T Tensor<T>::item() const {
  if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

template <typename T>
void Tensor<T>::backward() const {
  if (size() != 1) throw ShapeError("backward() needs a scalar, got " + shape_str(shape()));
  if (!node_->requires_grad) return;

  // Iterative post-order DFS yields a topological order (parents first).
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node<T>* p = n->parents[next++].get();
      if (p && p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->grad_data()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = *it;
    if (!n->backward_fn || n->grad.empty()) continue;
    if (!all_finite(n->grad)) {
      throw NonFiniteError(std::string("non-finite gradient reaching op '") + n->op + "'");
    }
    n->backward_fn(*n);
  }
  for (Node<T>* n : order) {
    if (!n->backward_fn && !n->grad.empty() && !all_finite(n->grad)) {
      throw NonFiniteError("non-finite gradient in leaf '" + n->name + "'");
    }
  }
}

namespace detail {

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> value, const char* op,
                      std::vector<const Tensor<T>*> inputs,
                      std::function<void(Node<T>&)> backward) {
  if (!all_finite(value)) {
    throw NonFiniteError(std::string("non-finite value produced by op '") + op + "'");
  }
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->op = op;
  if (g_grad_enabled) {
    bool any = false;
    for (const Tensor<T>* in : inputs) any = any || wants_grad(*in);
    if (any) {
      node->requires_grad = true;
      for (const Tensor<T>* in : inputs) {
        node->parents.push_back(in->defined() ? in->node_ptr() : nullptr);
      }
      // Undefined optional inputs are dropped from traversal but keep
      // their slot so closures can index parents positionally.
      node->backward_fn = std::move(backward);
    }
  }
  return Tensor<T>(node);
}

template Tensor<float> make_result(Shape, std::vector<float>, const char*,
                                   std::vector<const Tensor<float>*>,
                                   std::function<void(Node<float>&)>);
template Tensor<double> make_result(Shape, std::vector<double>, const char*,
                                    std::vector<const Tensor<double>*>,
                                    std::function<void(Node<double>&)>);

}  // namespace detail

template class Tensor<float>;
template class Tensor<double>;

}  // namespace glyphforge::ad
