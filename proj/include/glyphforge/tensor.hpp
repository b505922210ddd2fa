#pragma once
// Reverse-mode differentiable tensors.
//
// A Tensor is a handle to a graph node. Ops record their inputs and a
// backward closure when gradients are enabled and any input requires them;
// Tensor::backward() walks the graph in reverse topological order and
// accumulates into every reachable node's grad buffer.

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace glyphforge::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until something accumulates into it
  bool requires_grad = false;
  const char* op = "leaf";
  std::string name;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  /// Grad buffer, zero-initialized on first use.
  T* grad_data() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    return grad.data();
  }
};

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T fill, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false);
  static Tensor scalar(T v) { return from({}, {v}); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }

  std::span<T> values() { return node_->value; }
  std::span<const T> values() const { return node_->value; }
  std::vector<T>& storage() const { return node_->value; }

  /// Gradient buffer (allocated on demand). Empty span semantics are never
  /// exposed: an untouched gradient reads as zeros.
  std::span<T> grad() const { return {node_->grad_data(), node_->value.size()}; }
  bool has_grad() const { return node_->grad.size() == node_->value.size(); }
  void zero_grad() const { node_->grad.clear(); }

  T item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  const std::string& name() const { return node_->name; }
  void set_name(std::string n) { node_->name = std::move(n); }
  const char* op() const { return node_->op; }

  /// Seeds d(self)/d(self) = 1 and propagates. Self must hold one element.
  void backward() const;

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
};

bool grad_enabled();

/// Disables graph recording for its lifetime (per thread).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

namespace detail {

/// Creates an op result. Checks the forward values are finite and, when
/// recording, links parents and the backward closure.
template <typename T>
Tensor<T> make_result(Shape shape, std::vector<T> value, const char* op,
                      std::vector<const Tensor<T>*> inputs, std::function<void(Node<T>&)> backward);

template <typename T>
inline bool wants_grad(const Tensor<T>& t) {
  return t.defined() && t.requires_grad();
}

}  // namespace detail

}  // namespace glyphforge::ad
