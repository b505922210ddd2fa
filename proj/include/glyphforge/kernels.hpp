#pragma once
// Dense arithmetic kernels with scalar reference implementations and
// SIMD variants chosen at runtime.
//
// Every dispatched entry point has a `scalar::` twin that is the
// reference; the SIMD variants are tested for equivalence against it.

#include <cstddef>
#include <string_view>

namespace glyphforge::kernels {

enum class Trans { no, yes };

enum class Isa { scalar, avx2 };

/// Best instruction set this binary and CPU both support.
Isa detected_isa();

/// Instruction set the dispatcher currently routes to.
Isa active_isa();

/// Force a variant (clamped to what the CPU supports). Used by tests and
/// by GLYPHFORGE_SIMD=scalar.
void set_isa(Isa isa);

std::string_view isa_name(Isa isa);

// C[M,N] = alpha * op(A) * op(B) + beta * C, row-major.
// op(A) is M x K; op(B) is K x N. lda/ldb/ldc are row strides of the
// stored matrices.
void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, float alpha,
          const float* a, std::size_t lda, const float* b, std::size_t ldb, float beta, float* c,
          std::size_t ldc);
void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, double alpha,
          const double* a, std::size_t lda, const double* b, std::size_t ldb, double beta,
          double* c, std::size_t ldc);

// y += alpha * x
void axpy(std::size_t n, float alpha, const float* x, float* y);
void axpy(std::size_t n, double alpha, const double* x, double* y);

// sum_i (a_i - b_i)^2
double squared_distance(std::size_t n, const double* a, const double* b);

namespace scalar {
void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, float alpha,
          const float* a, std::size_t lda, const float* b, std::size_t ldb, float beta, float* c,
          std::size_t ldc);
void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, double alpha,
          const double* a, std::size_t lda, const double* b, std::size_t ldb, double beta,
          double* c, std::size_t ldc);
void axpy(std::size_t n, float alpha, const float* x, float* y);
void axpy(std::size_t n, double alpha, const double* x, double* y);
double squared_distance(std::size_t n, const double* a, const double* b);
}  // namespace scalar

#if defined(GLYPHFORGE_HAVE_AVX2)
namespace avx2 {
void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, float alpha,
          const float* a, std::size_t lda, const float* b, std::size_t ldb, float beta, float* c,
          std::size_t ldc);
void axpy(std::size_t n, float alpha, const float* x, float* y);
double squared_distance(std::size_t n, const double* a, const double* b);
}  // namespace avx2
#endif

}  // namespace glyphforge::kernels
