#pragma once
// Differentiable operator set. All ops are instantiated for float and double.
//
// Layout conventions: images are [B, C, H, W]; fully connected activations
// are [B, F]; sampling grids are [B, H, W, 2] holding (u, v).

#include <vector>

#include "glyphforge/geometry.hpp"
#include "glyphforge/tensor.hpp"

namespace glyphforge::ad {

// Elementwise, identical shapes.
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T> Tensor<T> add_scalar(const Tensor<T>& a, T s);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T s);

template <typename T> Tensor<T> relu(const Tensor<T>& x);
template <typename T> Tensor<T> leaky_relu(const Tensor<T>& x, T slope);
template <typename T> Tensor<T> tanh(const Tensor<T>& x);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T> Tensor<T> exp(const Tensor<T>& x);
template <typename T> Tensor<T> log(const Tensor<T>& x);
template <typename T> Tensor<T> abs(const Tensor<T>& x);
template <typename T> Tensor<T> square(const Tensor<T>& x);
/// max(x, floor); gradient passes only where x > floor.
template <typename T> Tensor<T> clamp_min(const Tensor<T>& x, T floor);

// Reductions to a scalar (shape []).
template <typename T> Tensor<T> sum(const Tensor<T>& x);
template <typename T> Tensor<T> mean(const Tensor<T>& x);

template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
/// x [B, in], weight [out, in], bias [out] (may be undefined) -> [B, out].
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

/// x [B, C, H, W], weight [O, C, k, k], bias [O] or undefined.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 std::size_t stride, std::size_t pad);

/// x [B, C, H, W], weight [C, O, k, k]; output side (H-1)*stride - 2*pad + k.
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                           std::size_t stride, std::size_t pad);

/// 2x2 window, stride 2.
template <typename T> Tensor<T> max_pool2d(const Tensor<T>& x);

/// Running statistics for batch norm; not differentiated.
template <typename T>
struct BatchNormStats {
  Tensor<T> running_mean;
  Tensor<T> running_var;
  T momentum = T(0.9);  // running = momentum * running + (1 - momentum) * batch
  T eps = T(1e-5);
};

/// x [B, C] or [B, C, H, W]; per-channel normalization.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     BatchNormStats<T>& stats, bool training);

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis);
template <typename T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);

/// Same values, no history: gradients stop here.
template <typename T> Tensor<T> detach(const Tensor<T>& x);

/// Raw predictor output [B, 2N^2+4] -> bounded warp parameters:
/// offsets 0.2 tanh, rotation (pi/6) tanh, scale exp(0.3 tanh), shifts 0.3 tanh.
template <typename T> Tensor<T> squash_warp_params(const Tensor<T>& raw, std::size_t grid_n);

/// theta [B, 2N^2+4] -> sampling grid [B, H, W, 2].
template <typename T>
Tensor<T> warp_grid(const Tensor<T>& theta, std::size_t grid_n, std::size_t height,
                    std::size_t width, geometry::WarpMode mode, double regularization);

/// img [B, C, H, W], grid [B, Ho, Wo, 2] -> [B, C, Ho, Wo].
template <typename T>
Tensor<T> grid_sample(const Tensor<T>& img, const Tensor<T>& grid, geometry::BorderPolicy border);

}  // namespace glyphforge::ad
