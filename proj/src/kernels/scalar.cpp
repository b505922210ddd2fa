// Reference kernels. Plain loops, no intrinsics; every SIMD variant is
// checked against these.

#include <algorithm>

#include "glyphforge/kernels.hpp"
#include "glyphforge/parallel.hpp"

namespace glyphforge::kernels::scalar {

namespace {

template <typename T>
void gemm_impl(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, T alpha,
               const T* a, std::size_t lda, const T* b, std::size_t ldb, T beta, T* c,
               std::size_t ldc) {
  auto a_at = [&](std::size_t i, std::size_t p) {
    return ta == Trans::no ? a[i * lda + p] : a[p * lda + i];
  };
  std::size_t min_rows = std::max<std::size_t>(1, 65536 / std::max<std::size_t>(1, n * k));
  parallel_for(m, min_rows, [&](std::size_t i0, std::size_t i1) {
    for (std::size_t i = i0; i < i1; ++i) {
      T* crow = c + i * ldc;
      if (beta == T(0)) {
        std::fill(crow, crow + n, T(0));
      } else if (beta != T(1)) {
        for (std::size_t j = 0; j < n; ++j) crow[j] *= beta;
      }
      if (tb == Trans::no) {
        for (std::size_t p = 0; p < k; ++p) {
          const T av = alpha * a_at(i, p);
          const T* brow = b + p * ldb;
          for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
      } else {
        for (std::size_t j = 0; j < n; ++j) {
          const T* bcol = b + j * ldb;
          T acc = 0;
          for (std::size_t p = 0; p < k; ++p) acc += a_at(i, p) * bcol[p];
          crow[j] += alpha * acc;
        }
      }
    }
  });
}

}  // namespace

void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, float alpha,
          const float* a, std::size_t lda, const float* b, std::size_t ldb, float beta, float* c,
          std::size_t ldc) {
  gemm_impl(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, double alpha,
          const double* a, std::size_t lda, const double* b, std::size_t ldb, double beta,
          double* c, std::size_t ldc) {
  gemm_impl(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

void axpy(std::size_t n, float alpha, const float* x, float* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void axpy(std::size_t n, double alpha, const double* x, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

double squared_distance(std::size_t n, const double* a, const double* b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

}  // namespace glyphforge::kernels::scalar
