#include <atomic>
#include <cstdlib>
#include <string>

#include "glyphforge/kernels.hpp"

namespace glyphforge::kernels {

namespace {

bool cpu_has_avx2() {
#if defined(GLYPHFORGE_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa initial_isa() {
  Isa best = detected_isa();
  if (const char* env = std::getenv("GLYPHFORGE_SIMD")) {
    if (std::string(env) == "scalar") return Isa::scalar;
  }
  return best;
}

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{initial_isa()};
  return isa;
}

}  // namespace

Isa detected_isa() {
  static const Isa isa = cpu_has_avx2() ? Isa::avx2 : Isa::scalar;
  return isa;
}

Isa active_isa() { return current().load(std::memory_order_relaxed); }

void set_isa(Isa isa) {
  if (isa == Isa::avx2 && detected_isa() != Isa::avx2) isa = Isa::scalar;
  current().store(isa);
}

std::string_view isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, float alpha,
          const float* a, std::size_t lda, const float* b, std::size_t ldb, float beta, float* c,
          std::size_t ldc) {
#if defined(GLYPHFORGE_HAVE_AVX2)
  if (active_isa() == Isa::avx2) {
    avx2::gemm(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
    return;
  }
#endif
  scalar::gemm(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

// Double precision is used for gradient checks on tiny shapes; the
// reference loop is sufficient there.
void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, double alpha,
          const double* a, std::size_t lda, const double* b, std::size_t ldb, double beta,
          double* c, std::size_t ldc) {
  scalar::gemm(ta, tb, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

void axpy(std::size_t n, float alpha, const float* x, float* y) {
#if defined(GLYPHFORGE_HAVE_AVX2)
  if (active_isa() == Isa::avx2) {
    avx2::axpy(n, alpha, x, y);
    return;
  }
#endif
  scalar::axpy(n, alpha, x, y);
}

void axpy(std::size_t n, double alpha, const double* x, double* y) {
  scalar::axpy(n, alpha, x, y);
}

double squared_distance(std::size_t n, const double* a, const double* b) {
#if defined(GLYPHFORGE_HAVE_AVX2)
  if (active_isa() == Isa::avx2) return avx2::squared_distance(n, a, b);
#endif
  return scalar::squared_distance(n, a, b);
}

}  // namespace glyphforge::kernels
