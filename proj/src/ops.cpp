#include "glyphforge/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>

#include "glyphforge/kernels.hpp"

namespace glyphforge::ad {

using detail::make_result;
using kernels::Trans;

namespace {

template <typename T>
T* parent_grad(Node<T>& self, std::size_t i) {
  auto& p = self.parents[i];
  return (p && p->requires_grad) ? p->grad_data() : nullptr;
}

template <typename T>
const std::vector<T>& parent_value(const Node<T>& self, std::size_t i) {
  return self.parents[i]->value;
}

template <typename T>
void require_same(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

template <typename T>
void require_rank(const Tensor<T>& t, std::size_t rank, const char* op, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) +
                     ", got " + shape_str(t.shape()));
  }
}

// Elementwise op with derivative expressed through input x and output y.
template <typename T, typename F, typename D>
Tensor<T> unary(const Tensor<T>& x, const char* op, F f, D dfdx) {
  std::vector<T> out(x.size());
  auto xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
  return make_result<T>(x.shape(), std::move(out), op, {&x}, [dfdx](Node<T>& self) {
    T* __restrict gx = parent_grad(self, 0);
    if (!gx) return;
    const T* __restrict xv = parent_value(self, 0).data();
    const T* __restrict yv = self.value.data();
    const T* __restrict g = self.grad.data();
    const std::size_t n = self.value.size();
    for (std::size_t i = 0; i < n; ++i) {
      // Local temporary lets the compiler if-convert piecewise derivatives.
      const T d = dfdx(xv[i], yv[i]);
      gx[i] = gx[i] + g[i] * d;
    }
  });
}

// cols[(c*k + ki)*k + kj][col_offset + oh*Wo + ow], row stride ld.
// Output columns o in [lo, hi) read input index o * stride + offset inside [0, size).
struct ValidRange {
  std::size_t lo, hi;
};

inline ValidRange valid_range(std::size_t out, std::size_t stride, long offset, std::size_t size) {
  const long s = static_cast<long>(stride);
  long lo = offset >= 0 ? 0 : (-offset + s - 1) / s;
  long hi = static_cast<long>(size) - 1 - offset < 0 ? 0 : (static_cast<long>(size) - 1 - offset) / s + 1;
  lo = std::min<long>(lo, static_cast<long>(out));
  hi = std::clamp<long>(hi, lo, static_cast<long>(out));
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

template <typename T>
void im2col(const T* img, std::size_t channels, std::size_t h, std::size_t w, std::size_t k,
            std::size_t stride, std::size_t pad, std::size_t out_h, std::size_t out_w, T* cols,
            std::size_t ld) {
  const long p = static_cast<long>(pad);
  for (std::size_t c = 0; c < channels; ++c) {
    const T* plane = img + c * h * w;
    for (std::size_t ki = 0; ki < k; ++ki) {
      const ValidRange ry = valid_range(out_h, stride, static_cast<long>(ki) - p, h);
      for (std::size_t kj = 0; kj < k; ++kj) {
        T* row = cols + ((c * k + ki) * k + kj) * ld;
        const long ox = static_cast<long>(kj) - p;
        const ValidRange rx = valid_range(out_w, stride, ox, w);
        for (std::size_t oh = 0; oh < out_h; ++oh) {
          T* dst = row + oh * out_w;
          if (oh < ry.lo || oh >= ry.hi) {
            std::fill(dst, dst + out_w, T(0));
            continue;
          }
          const T* src = plane + (oh * stride + ki - pad) * w;
          std::fill(dst, dst + rx.lo, T(0));
          if (stride == 1) {
            std::copy(src + rx.lo + ox, src + rx.hi + ox, dst + rx.lo);
          } else {
            const T* s = src + static_cast<long>(rx.lo * stride) + ox;
            for (std::size_t ow = rx.lo; ow < rx.hi; ++ow, s += stride) dst[ow] = *s;
          }
          std::fill(dst + rx.hi, dst + out_w, T(0));
        }
      }
    }
  }
}

// Adjoint of im2col: accumulates cols back into img.
template <typename T>
void col2im(const T* cols, std::size_t ld, std::size_t channels, std::size_t h, std::size_t w,
            std::size_t k, std::size_t stride, std::size_t pad, std::size_t out_h,
            std::size_t out_w, T* img) {
  const long p = static_cast<long>(pad);
  for (std::size_t c = 0; c < channels; ++c) {
    T* plane = img + c * h * w;
    for (std::size_t ki = 0; ki < k; ++ki) {
      const ValidRange ry = valid_range(out_h, stride, static_cast<long>(ki) - p, h);
      for (std::size_t kj = 0; kj < k; ++kj) {
        const T* row = cols + ((c * k + ki) * k + kj) * ld;
        const long ox = static_cast<long>(kj) - p;
        const ValidRange rx = valid_range(out_w, stride, ox, w);
        for (std::size_t oh = ry.lo; oh < ry.hi; ++oh) {
          T* __restrict dst = plane + (oh * stride + ki - pad) * w;
          const T* __restrict src = row + oh * out_w;
          if (stride == 1) {
            T* d = dst + (static_cast<long>(rx.lo) + ox);
            const T* g = src + rx.lo;
            for (std::size_t i = 0; i < rx.hi - rx.lo; ++i) d[i] = d[i] + g[i];
          } else {
            T* d = dst + static_cast<long>(rx.lo * stride) + ox;
            for (std::size_t ow = rx.lo; ow < rx.hi; ++ow, d += stride) *d += src[ow];
          }
        }
      }
    }
  }
}

// [B, C, P] <-> [C, B*P]
template <typename T>
void batch_to_channel_major(const T* src, std::size_t b, std::size_t c, std::size_t p, T* dst) {
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      std::copy_n(src + (i * c + j) * p, p, dst + j * b * p + i * p);
    }
  }
}

template <typename T>
void channel_major_to_batch(const T* src, std::size_t b, std::size_t c, std::size_t p, T* dst,
                            bool accumulate) {
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      const T* s = src + j * b * p + i * p;
      T* d = dst + (i * c + j) * p;
      if (accumulate) {
        for (std::size_t q = 0; q < p; ++q) d[q] += s[q];
      } else {
        std::copy_n(s, p, d);
      }
    }
  }
}

template <typename T>
void check_bias(const Tensor<T>& bias, std::size_t n, const char* op) {
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != n)) {
    throw ShapeError(std::string(op) + ": bias shape " + shape_str(bias.shape()) + " != [" +
                     std::to_string(n) + "]");
  }
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same(a, b, "add");
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
  return make_result<T>(a.shape(), std::move(out), "add", {&a, &b}, [](Node<T>& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (T* g = parent_grad(self, p)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
      }
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same(a, b, "sub");
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
  return make_result<T>(a.shape(), std::move(out), "sub", {&a, &b}, [](Node<T>& self) {
    if (T* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
    if (T* g = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same(a, b, "mul");
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  return make_result<T>(a.shape(), std::move(out), "mul", {&a, &b}, [](Node<T>& self) {
    const auto& av = parent_value(self, 0);
    const auto& bv = parent_value(self, 1);
    if (T* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * bv[i];
    }
    if (T* g = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * av[i];
    }
  });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T s) {
  return unary(a, "add_scalar", [s](T x) { return x + s; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  return unary(a, "scale", [s](T x) { return x * s; }, [s](T, T) { return s; });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return unary(
      x, "relu", [](T v) { return v > T(0) ? v : T(0); },
      [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope) {
  return unary(
      x, "leaky_relu", [slope](T v) { return v > T(0) ? v : slope * v; },
      [slope](T v, T) { return v > T(0) ? T(1) : slope; });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
  return unary(
      x, "tanh", [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return unary(
      x, "sigmoid",
      [](T v) {
        return v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& x) {
  return unary(
      x, "exp", [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <typename T>
Tensor<T> log(const Tensor<T>& x) {
  return unary(
      x, "log", [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; });
}

template <typename T>
Tensor<T> abs(const Tensor<T>& x) {
  return unary(
      x, "abs", [](T v) { return std::abs(v); },
      [](T v, T) { return (v > T(0) ? T(1) : T(0)) - (v < T(0) ? T(1) : T(0)); });
}

template <typename T>
Tensor<T> square(const Tensor<T>& x) {
  return unary(
      x, "square", [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <typename T>
Tensor<T> clamp_min(const Tensor<T>& x, T floor) {
  return unary(
      x, "clamp_min", [floor](T v) { return v > floor ? v : floor; },
      [floor](T v, T) { return v > floor ? T(1) : T(0); });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = 0;
  for (T v : x.values()) acc += v;
  return make_result<T>({}, {acc}, "sum", {&x}, [](Node<T>& self) {
    if (T* g = parent_grad(self, 0)) {
      const std::size_t n = self.parents[0]->value.size();
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[0];
    }
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  if (x.size() == 0) throw ShapeError("mean of empty tensor");
  T acc = 0;
  for (T v : x.values()) acc += v;
  const T n = static_cast<T>(x.size());
  return make_result<T>({}, {acc / n}, "mean", {&x}, [n](Node<T>& self) {
    if (T* g = parent_grad(self, 0)) {
      const std::size_t count = self.parents[0]->value.size();
      const T share = self.grad[0] / n;
      for (std::size_t i = 0; i < count; ++i) g[i] += share;
    }
  });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a, 2, "matmul", "lhs");
  require_rank(b, 2, "matmul", "rhs");
  if (a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: inner dims differ " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<T> out(m * n);
  kernels::gemm(Trans::no, Trans::no, m, n, k, T(1), a.values().data(), k, b.values().data(), n,
                T(0), out.data(), n);
  return make_result<T>({m, n}, std::move(out), "matmul", {&a, &b}, [m, k, n](Node<T>& self) {
    const auto& av = parent_value(self, 0);
    const auto& bv = parent_value(self, 1);
    if (T* ga = parent_grad(self, 0)) {
      kernels::gemm(Trans::no, Trans::yes, m, k, n, T(1), self.grad.data(), n, bv.data(), n,
                    T(1), ga, k);
    }
    if (T* gb = parent_grad(self, 1)) {
      kernels::gemm(Trans::yes, Trans::no, k, n, m, T(1), av.data(), k, self.grad.data(), n,
                    T(1), gb, n);
    }
  });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  require_rank(x, 2, "linear", "input");
  require_rank(weight, 2, "linear", "weight");
  if (x.dim(1) != weight.dim(1)) {
    throw ShapeError("linear: input " + shape_str(x.shape()) + " incompatible with weight " +
                     shape_str(weight.shape()));
  }
  const std::size_t batch = x.dim(0), in = x.dim(1), out_f = weight.dim(0);
  check_bias(bias, out_f, "linear");
  std::vector<T> out(batch * out_f);
  kernels::gemm(Trans::no, Trans::yes, batch, out_f, in, T(1), x.values().data(), in,
                weight.values().data(), in, T(0), out.data(), out_f);
  if (bias.defined()) {
    for (std::size_t r = 0; r < batch; ++r) {
      for (std::size_t c = 0; c < out_f; ++c) out[r * out_f + c] += bias.values()[c];
    }
  }
  return make_result<T>(
      {batch, out_f}, std::move(out), "linear", {&x, &weight, &bias},
      [batch, in, out_f](Node<T>& self) {
        const T* g = self.grad.data();
        if (T* gx = parent_grad(self, 0)) {
          kernels::gemm(Trans::no, Trans::no, batch, in, out_f, T(1), g, out_f,
                        parent_value(self, 1).data(), in, T(1), gx, in);
        }
        if (T* gw = parent_grad(self, 1)) {
          kernels::gemm(Trans::yes, Trans::no, out_f, in, batch, T(1), g, out_f,
                        parent_value(self, 0).data(), in, T(1), gw, in);
        }
        if (T* gb = parent_grad(self, 2)) {
          for (std::size_t r = 0; r < batch; ++r) {
            for (std::size_t c = 0; c < out_f; ++c) gb[c] += g[r * out_f + c];
          }
        }
      });
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 std::size_t stride, std::size_t pad) {
  require_rank(x, 4, "conv2d", "input");
  require_rank(weight, 4, "conv2d", "weight");
  const std::size_t batch = x.dim(0), c_in = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t c_out = weight.dim(0), k = weight.dim(2);
  if (weight.dim(1) != c_in || weight.dim(3) != k) {
    throw ShapeError("conv2d: weight " + shape_str(weight.shape()) + " incompatible with input " +
                     shape_str(x.shape()));
  }
  if (stride == 0 || h + 2 * pad < k || w + 2 * pad < k) {
    throw ShapeError("conv2d: kernel " + std::to_string(k) + " does not fit input " +
                     shape_str(x.shape()) + " with pad " + std::to_string(pad));
  }
  check_bias(bias, c_out, "conv2d");
  const std::size_t out_h = (h + 2 * pad - k) / stride + 1;
  const std::size_t out_w = (w + 2 * pad - k) / stride + 1;
  const std::size_t pix = out_h * out_w, cols_w = batch * pix, kdim = c_in * k * k;

  auto cols = std::make_shared<std::vector<T>>(kdim * cols_w);
  for (std::size_t b = 0; b < batch; ++b) {
    im2col(x.values().data() + b * c_in * h * w, c_in, h, w, k, stride, pad, out_h, out_w,
           cols->data() + b * pix, cols_w);
  }
  std::vector<T> tmp(c_out * cols_w);
  kernels::gemm(Trans::no, Trans::no, c_out, cols_w, kdim, T(1), weight.values().data(), kdim,
                cols->data(), cols_w, T(0), tmp.data(), cols_w);
  std::vector<T> out(batch * c_out * pix);
  channel_major_to_batch(tmp.data(), batch, c_out, pix, out.data(), false);
  if (bias.defined()) {
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t o = 0; o < c_out; ++o) {
        T* p = out.data() + (b * c_out + o) * pix;
        const T bv = bias.values()[o];
        for (std::size_t i = 0; i < pix; ++i) p[i] += bv;
      }
    }
  }
  return make_result<T>(
      {batch, c_out, out_h, out_w}, std::move(out), "conv2d", {&x, &weight, &bias},
      [=](Node<T>& self) {
        std::vector<T> g(c_out * cols_w);
        batch_to_channel_major(self.grad.data(), batch, c_out, pix, g.data());
        if (T* gw = parent_grad(self, 1)) {
          kernels::gemm(Trans::no, Trans::yes, c_out, kdim, cols_w, T(1), g.data(), cols_w,
                        cols->data(), cols_w, T(1), gw, kdim);
        }
        if (T* gb = parent_grad(self, 2)) {
          for (std::size_t o = 0; o < c_out; ++o) {
            T acc = 0;
            for (std::size_t i = 0; i < cols_w; ++i) acc += g[o * cols_w + i];
            gb[o] += acc;
          }
        }
        if (T* gx = parent_grad(self, 0)) {
          std::vector<T> dcols(kdim * cols_w);
          kernels::gemm(Trans::yes, Trans::no, kdim, cols_w, c_out, T(1),
                        parent_value(self, 1).data(), kdim, g.data(), cols_w, T(0), dcols.data(),
                        cols_w);
          for (std::size_t b = 0; b < batch; ++b) {
            col2im(dcols.data() + b * pix, cols_w, c_in, h, w, k, stride, pad, out_h, out_w,
                   gx + b * c_in * h * w);
          }
        }
      });
}

template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                           std::size_t stride, std::size_t pad) {
  require_rank(x, 4, "conv_transpose2d", "input");
  require_rank(weight, 4, "conv_transpose2d", "weight");
  const std::size_t batch = x.dim(0), c_in = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t c_out = weight.dim(1), k = weight.dim(2);
  if (weight.dim(0) != c_in || weight.dim(3) != k) {
    throw ShapeError("conv_transpose2d: weight " + shape_str(weight.shape()) +
                     " incompatible with input " + shape_str(x.shape()));
  }
  if (stride == 0 || (h - 1) * stride + k <= 2 * pad || (w - 1) * stride + k <= 2 * pad) {
    throw ShapeError("conv_transpose2d: empty output for input " + shape_str(x.shape()));
  }
  check_bias(bias, c_out, "conv_transpose2d");
  const std::size_t out_h = (h - 1) * stride + k - 2 * pad;
  const std::size_t out_w = (w - 1) * stride + k - 2 * pad;
  const std::size_t pix = h * w, cols_w = batch * pix, kdim = c_out * k * k;
  const std::size_t out_pix = out_h * out_w;

  std::vector<T> xcm(c_in * cols_w);
  batch_to_channel_major(x.values().data(), batch, c_in, pix, xcm.data());
  std::vector<T> cols(kdim * cols_w);
  kernels::gemm(Trans::yes, Trans::no, kdim, cols_w, c_in, T(1), weight.values().data(), kdim,
                xcm.data(), cols_w, T(0), cols.data(), cols_w);
  std::vector<T> out(batch * c_out * out_pix, T(0));
  for (std::size_t b = 0; b < batch; ++b) {
    col2im(cols.data() + b * pix, cols_w, c_out, out_h, out_w, k, stride, pad, h, w,
           out.data() + b * c_out * out_pix);
  }
  if (bias.defined()) {
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t o = 0; o < c_out; ++o) {
        T* p = out.data() + (b * c_out + o) * out_pix;
        const T bv = bias.values()[o];
        for (std::size_t i = 0; i < out_pix; ++i) p[i] += bv;
      }
    }
  }
  return make_result<T>(
      {batch, c_out, out_h, out_w}, std::move(out), "conv_transpose2d", {&x, &weight, &bias},
      [=](Node<T>& self) {
        const T* g = self.grad.data();
        if (T* gb = parent_grad(self, 2)) {
          for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t o = 0; o < c_out; ++o) {
              const T* p = g + (b * c_out + o) * out_pix;
              T acc = 0;
              for (std::size_t i = 0; i < out_pix; ++i) acc += p[i];
              gb[o] += acc;
            }
          }
        }
        T* gx = parent_grad(self, 0);
        T* gw = parent_grad(self, 1);
        if (!gx && !gw) return;
        std::vector<T> gcols(kdim * cols_w);
        for (std::size_t b = 0; b < batch; ++b) {
          im2col(g + b * c_out * out_pix, c_out, out_h, out_w, k, stride, pad, h, w,
                 gcols.data() + b * pix, cols_w);
        }
        if (gx) {
          std::vector<T> gxcm(c_in * cols_w);
          kernels::gemm(Trans::no, Trans::no, c_in, cols_w, kdim, T(1),
                        parent_value(self, 1).data(), kdim, gcols.data(), cols_w, T(0),
                        gxcm.data(), cols_w);
          channel_major_to_batch(gxcm.data(), batch, c_in, pix, gx, true);
        }
        if (gw) {
          std::vector<T> xcm(c_in * cols_w);
          batch_to_channel_major(parent_value(self, 0).data(), batch, c_in, pix, xcm.data());
          kernels::gemm(Trans::no, Trans::yes, c_in, kdim, cols_w, T(1), xcm.data(), cols_w,
                        gcols.data(), cols_w, T(1), gw, kdim);
        }
      });
}

template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& x) {
  require_rank(x, 4, "max_pool2d", "input");
  const std::size_t batch = x.dim(0), ch = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h < 2 || w < 2) throw ShapeError("max_pool2d: input too small " + shape_str(x.shape()));
  const std::size_t oh = h / 2, ow = w / 2;
  std::vector<T> out(batch * ch * oh * ow);
  auto arg = std::make_shared<std::vector<std::uint32_t>>(out.size());
  const T* xv = x.values().data();
  for (std::size_t p = 0; p < batch * ch; ++p) {
    for (std::size_t i = 0; i < oh; ++i) {
      for (std::size_t j = 0; j < ow; ++j) {
        std::size_t best = p * h * w + (2 * i) * w + 2 * j;
        for (std::size_t di = 0; di < 2; ++di) {
          for (std::size_t dj = 0; dj < 2; ++dj) {
            std::size_t idx = p * h * w + (2 * i + di) * w + 2 * j + dj;
            if (xv[idx] > xv[best]) best = idx;
          }
        }
        std::size_t o = (p * oh + i) * ow + j;
        out[o] = xv[best];
        (*arg)[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return make_result<T>({batch, ch, oh, ow}, std::move(out), "max_pool2d", {&x},
                        [arg](Node<T>& self) {
                          if (T* gx = parent_grad(self, 0)) {
                            for (std::size_t o = 0; o < arg->size(); ++o) {
                              gx[(*arg)[o]] += self.grad[o];
                            }
                          }
                        });
}

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     BatchNormStats<T>& stats, bool training) {
  if (x.rank() != 2 && x.rank() != 4) {
    throw ShapeError("batch_norm: input must be [B,C] or [B,C,H,W], got " + shape_str(x.shape()));
  }
  const std::size_t batch = x.dim(0), ch = x.dim(1);
  const std::size_t inner = x.rank() == 4 ? x.dim(2) * x.dim(3) : 1;
  if (gamma.size() != ch || beta.size() != ch || stats.running_mean.size() != ch ||
      stats.running_var.size() != ch) {
    throw ShapeError("batch_norm: parameter length != channels " + std::to_string(ch));
  }
  const std::size_t count = batch * inner;
  const T* xv = x.values().data();
  auto xhat = std::make_shared<std::vector<T>>(x.size());
  auto invstd = std::make_shared<std::vector<T>>(ch);
  std::vector<T> out(x.size());
  for (std::size_t c = 0; c < ch; ++c) {
    T mu, var;
    if (training) {
      double acc = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        const T* p = xv + (b * ch + c) * inner;
        for (std::size_t i = 0; i < inner; ++i) acc += p[i];
      }
      mu = static_cast<T>(acc / count);
      double sq = 0.0;
      for (std::size_t b = 0; b < batch; ++b) {
        const T* p = xv + (b * ch + c) * inner;
        for (std::size_t i = 0; i < inner; ++i) sq += (p[i] - mu) * (p[i] - mu);
      }
      var = static_cast<T>(sq / count);
      T unbiased = count > 1 ? static_cast<T>(sq / (count - 1)) : var;
      T& rm = stats.running_mean.values()[c];
      T& rv = stats.running_var.values()[c];
      rm = stats.momentum * rm + (T(1) - stats.momentum) * mu;
      rv = stats.momentum * rv + (T(1) - stats.momentum) * unbiased;
    } else {
      mu = stats.running_mean.values()[c];
      var = stats.running_var.values()[c];
    }
    const T is = T(1) / std::sqrt(var + stats.eps);
    (*invstd)[c] = is;
    const T gm = gamma.values()[c], bt = beta.values()[c];
    for (std::size_t b = 0; b < batch; ++b) {
      std::size_t off = (b * ch + c) * inner;
      for (std::size_t i = 0; i < inner; ++i) {
        T xh = (xv[off + i] - mu) * is;
        (*xhat)[off + i] = xh;
        out[off + i] = gm * xh + bt;
      }
    }
  }
  return make_result<T>(
      x.shape(), std::move(out), "batch_norm", {&x, &gamma, &beta},
      [=](Node<T>& self) {
        const T* g = self.grad.data();
        const auto& gmv = parent_value(self, 1);
        T* gx = parent_grad(self, 0);
        T* gg = parent_grad(self, 1);
        T* gbt = parent_grad(self, 2);
        for (std::size_t c = 0; c < ch; ++c) {
          T sum_g = 0, sum_gx = 0;
          for (std::size_t b = 0; b < batch; ++b) {
            std::size_t off = (b * ch + c) * inner;
            for (std::size_t i = 0; i < inner; ++i) {
              sum_g += g[off + i];
              sum_gx += g[off + i] * (*xhat)[off + i];
            }
          }
          if (gg) gg[c] += sum_gx;
          if (gbt) gbt[c] += sum_g;
          if (!gx) continue;
          const T is = (*invstd)[c];
          const T gm = gmv[c];
          for (std::size_t b = 0; b < batch; ++b) {
            std::size_t off = (b * ch + c) * inner;
            for (std::size_t i = 0; i < inner; ++i) {
              if (training) {
                const T n = static_cast<T>(count);
                gx[off + i] +=
                    gm * is / n * (n * g[off + i] - sum_g - (*xhat)[off + i] * sum_gx);
              } else {
                gx[off + i] += g[off + i] * gm * is;
              }
            }
          }
        }
      });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) throw ShapeError("concat: axis out of range for " + shape_str(first));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];
  std::vector<std::size_t> extents;
  std::size_t total = 0;
  for (const auto& p : parts) {
    Shape s = p.shape();
    if (s.size() != first.size()) throw ShapeError("concat: rank mismatch " + shape_str(s));
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != axis && s[i] != first[i]) {
        throw ShapeError("concat: shape mismatch " + shape_str(first) + " vs " + shape_str(s));
      }
    }
    extents.push_back(s[axis]);
    total += s[axis];
  }
  Shape out_shape = first;
  out_shape[axis] = total;
  std::vector<T> out(numel(out_shape));
  for (std::size_t o = 0; o < outer; ++o) {
    std::size_t col = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
      const std::size_t chunk = extents[p] * inner;
      std::copy_n(parts[p].values().data() + o * chunk, chunk,
                  out.data() + o * total * inner + col);
      col += chunk;
    }
  }
  std::vector<const Tensor<T>*> inputs;
  for (const auto& p : parts) inputs.push_back(&p);
  return make_result<T>(out_shape, std::move(out), "concat", inputs,
                        [extents, outer, inner, total](Node<T>& self) {
                          std::size_t col = 0;
                          for (std::size_t p = 0; p < extents.size(); ++p) {
                            const std::size_t chunk = extents[p] * inner;
                            if (T* g = parent_grad(self, p)) {
                              for (std::size_t o = 0; o < outer; ++o) {
                                const T* src = self.grad.data() + o * total * inner + col;
                                for (std::size_t i = 0; i < chunk; ++i) g[o * chunk + i] += src[i];
                              }
                            }
                            col += chunk;
                          }
                        });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  std::vector<T> out(x.values().begin(), x.values().end());
  return make_result<T>(std::move(shape), std::move(out), "reshape", {&x}, [](Node<T>& self) {
    if (T* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> detach(const Tensor<T>& x) {
  return Tensor<T>::from(x.shape(), std::vector<T>(x.values().begin(), x.values().end()));
}

template <typename T>
Tensor<T> squash_warp_params(const Tensor<T>& raw, std::size_t grid_n) {
  require_rank(raw, 2, "squash_warp_params", "input");
  const std::size_t p = geometry::WarpParams::flat_size_for(grid_n);
  if (raw.dim(1) != p) {
    throw ShapeError("squash_warp_params: expected width " + std::to_string(p) + ", got " +
                     shape_str(raw.shape()));
  }
  const std::size_t n_off = 2 * grid_n * grid_n;
  constexpr double kRot = std::numbers::pi / 6.0;
  auto gain = [n_off](std::size_t j) -> T {
    if (j < n_off) return T(0.2);
    if (j == n_off) return static_cast<T>(kRot);
    if (j == n_off + 1) return T(0.3);
    return T(0.3);
  };
  std::vector<T> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    std::size_t j = i % p;
    T t = std::tanh(raw.values()[i]);
    out[i] = j == n_off + 1 ? std::exp(gain(j) * t) : gain(j) * t;
  }
  return make_result<T>(raw.shape(), std::move(out), "squash_warp_params", {&raw},
                        [p, n_off, gain](Node<T>& self) {
                          T* g = parent_grad(self, 0);
                          if (!g) return;
                          const auto& rv = parent_value(self, 0);
                          for (std::size_t i = 0; i < rv.size(); ++i) {
                            std::size_t j = i % p;
                            T t = std::tanh(rv[i]);
                            T d = gain(j) * (T(1) - t * t);
                            if (j == n_off + 1) d *= self.value[i];
                            g[i] += self.grad[i] * d;
                          }
                        });
}

template <typename T>
Tensor<T> warp_grid(const Tensor<T>& theta, std::size_t grid_n, std::size_t height,
                    std::size_t width, geometry::WarpMode mode, double regularization) {
  require_rank(theta, 2, "warp_grid", "theta");
  const std::size_t p = geometry::WarpParams::flat_size_for(grid_n);
  if (theta.dim(1) != p) {
    throw ShapeError("warp_grid: theta width must be 2N^2+4 = " + std::to_string(p) + ", got " +
                     shape_str(theta.shape()));
  }
  const std::size_t batch = theta.dim(0), cells = height * width * 2;
  std::vector<T> out(batch * cells);
  std::vector<double> th(p), grid(cells);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t j = 0; j < p; ++j) th[j] = theta.values()[b * p + j];
    geometry::detail::warp_grid_forward(th, grid_n, height, width, mode, regularization, grid);
    for (std::size_t i = 0; i < cells; ++i) out[b * cells + i] = static_cast<T>(grid[i]);
  }
  return make_result<T>(
      {batch, height, width, 2}, std::move(out), "warp_grid", {&theta},
      [=](Node<T>& self) {
        T* g = parent_grad(self, 0);
        if (!g) return;
        const auto& tv = parent_value(self, 0);
        std::vector<double> th(p), gg(cells), gt(p);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t j = 0; j < p; ++j) th[j] = tv[b * p + j];
          for (std::size_t i = 0; i < cells; ++i) gg[i] = self.grad[b * cells + i];
          std::fill(gt.begin(), gt.end(), 0.0);
          geometry::detail::warp_grid_backward(th, grid_n, height, width, mode, regularization,
                                               gg, gt);
          for (std::size_t j = 0; j < p; ++j) g[b * p + j] += static_cast<T>(gt[j]);
        }
      });
}

template <typename T>
Tensor<T> grid_sample(const Tensor<T>& img, const Tensor<T>& grid,
                      geometry::BorderPolicy border) {
  require_rank(img, 4, "grid_sample", "image");
  require_rank(grid, 4, "grid_sample", "grid");
  if (grid.dim(0) != img.dim(0) || grid.dim(3) != 2) {
    throw ShapeError("grid_sample: grid " + shape_str(grid.shape()) + " incompatible with image " +
                     shape_str(img.shape()));
  }
  const std::size_t batch = img.dim(0), ch = img.dim(1), h = img.dim(2), w = img.dim(3);
  const std::size_t oh = grid.dim(1), ow = grid.dim(2);
  std::vector<T> out(batch * ch * oh * ow);
  for (std::size_t b = 0; b < batch; ++b) {
    const T* gp = grid.values().data() + b * oh * ow * 2;
    for (std::size_t c = 0; c < ch; ++c) {
      geometry::detail::sample_plane(img.values().data() + (b * ch + c) * h * w, h, w, gp, oh, ow,
                                     border, out.data() + (b * ch + c) * oh * ow);
    }
  }
  return make_result<T>(
      {batch, ch, oh, ow}, std::move(out), "grid_sample", {&img, &grid},
      [=](Node<T>& self) {
        T* gi = parent_grad(self, 0);
        T* gg = parent_grad(self, 1);
        if (!gi && !gg) return;
        const auto& iv = parent_value(self, 0);
        const auto& gv = parent_value(self, 1);
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t c = 0; c < ch; ++c) {
            geometry::detail::sample_plane_backward(
                iv.data() + (b * ch + c) * h * w, h, w, gv.data() + b * oh * ow * 2, oh, ow,
                border, self.grad.data() + (b * ch + c) * oh * ow,
                gi ? gi + (b * ch + c) * h * w : nullptr, gg ? gg + b * oh * ow * 2 : nullptr);
          }
        }
      });
}

#define GLYPHFORGE_INSTANTIATE_OPS(T)                                                          \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                                         \
  template Tensor<T> scale(const Tensor<T>&, T);                                              \
  template Tensor<T> relu(const Tensor<T>&);                                                  \
  template Tensor<T> leaky_relu(const Tensor<T>&, T);                                         \
  template Tensor<T> tanh(const Tensor<T>&);                                                  \
  template Tensor<T> sigmoid(const Tensor<T>&);                                               \
  template Tensor<T> exp(const Tensor<T>&);                                                   \
  template Tensor<T> log(const Tensor<T>&);                                                   \
  template Tensor<T> abs(const Tensor<T>&);                                                   \
  template Tensor<T> square(const Tensor<T>&);                                                \
  template Tensor<T> clamp_min(const Tensor<T>&, T);                                          \
  template Tensor<T> sum(const Tensor<T>&);                                                   \
  template Tensor<T> mean(const Tensor<T>&);                                                  \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);            \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t, \
                            std::size_t);                                                     \
  template Tensor<T> conv_transpose2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,   \
                                      std::size_t, std::size_t);                              \
  template Tensor<T> max_pool2d(const Tensor<T>&);                                            \
  template Tensor<T> batch_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,         \
                                BatchNormStats<T>&, bool);                                    \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, std::size_t);                      \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                        \
  template Tensor<T> detach(const Tensor<T>&);                                                \
  template Tensor<T> squash_warp_params(const Tensor<T>&, std::size_t);                       \
  template Tensor<T> warp_grid(const Tensor<T>&, std::size_t, std::size_t, std::size_t,       \
                               geometry::WarpMode, double);                                   \
  template Tensor<T> grid_sample(const Tensor<T>&, const Tensor<T>&, geometry::BorderPolicy);

GLYPHFORGE_INSTANTIATE_OPS(float)
GLYPHFORGE_INSTANTIATE_OPS(double)

#undef GLYPHFORGE_INSTANTIATE_OPS

}  // namespace glyphforge::ad
