// AVX2 + FMA variants. This translation unit is compiled with -mavx2 -mfma
// and only entered after the dispatcher has confirmed CPU support.

#include <immintrin.h>

#include <algorithm>
#include <vector>

#include "glyphforge/kernels.hpp"
#include "glyphforge/parallel.hpp"

namespace glyphforge::kernels::avx2 {

namespace {

constexpr std::size_t kMr = 6;
constexpr std::size_t kNr = 16;
constexpr std::size_t kKc = 256;
constexpr std::size_t kMc = 96;
constexpr std::size_t kNc = 2048;

// Packs op(A)[i0:i0+mc, p0:p0+kc] into row panels of kMr, layout [panel][p][r].
void pack_a(Trans ta, const float* a, std::size_t lda, std::size_t i0, std::size_t mc,
            std::size_t p0, std::size_t kc, float* out) {
  for (std::size_t ir = 0; ir < mc; ir += kMr) {
    std::size_t rows = std::min(kMr, mc - ir);
    for (std::size_t p = 0; p < kc; ++p) {
      for (std::size_t r = 0; r < kMr; ++r) {
        float v = 0.0f;
        if (r < rows) {
          std::size_t i = i0 + ir + r;
          std::size_t q = p0 + p;
          v = ta == Trans::no ? a[i * lda + q] : a[q * lda + i];
        }
        *out++ = v;
      }
    }
  }
}

inline void transpose8(__m256& r0, __m256& r1, __m256& r2, __m256& r3, __m256& r4, __m256& r5,
                       __m256& r6, __m256& r7) {
  __m256 t0 = _mm256_unpacklo_ps(r0, r1), t1 = _mm256_unpackhi_ps(r0, r1);
  __m256 t2 = _mm256_unpacklo_ps(r2, r3), t3 = _mm256_unpackhi_ps(r2, r3);
  __m256 t4 = _mm256_unpacklo_ps(r4, r5), t5 = _mm256_unpackhi_ps(r4, r5);
  __m256 t6 = _mm256_unpacklo_ps(r6, r7), t7 = _mm256_unpackhi_ps(r6, r7);
  __m256 s0 = _mm256_shuffle_ps(t0, t2, 0x44), s1 = _mm256_shuffle_ps(t0, t2, 0xEE);
  __m256 s2 = _mm256_shuffle_ps(t1, t3, 0x44), s3 = _mm256_shuffle_ps(t1, t3, 0xEE);
  __m256 s4 = _mm256_shuffle_ps(t4, t6, 0x44), s5 = _mm256_shuffle_ps(t4, t6, 0xEE);
  __m256 s6 = _mm256_shuffle_ps(t5, t7, 0x44), s7 = _mm256_shuffle_ps(t5, t7, 0xEE);
  r0 = _mm256_permute2f128_ps(s0, s4, 0x20);
  r1 = _mm256_permute2f128_ps(s1, s5, 0x20);
  r2 = _mm256_permute2f128_ps(s2, s6, 0x20);
  r3 = _mm256_permute2f128_ps(s3, s7, 0x20);
  r4 = _mm256_permute2f128_ps(s0, s4, 0x31);
  r5 = _mm256_permute2f128_ps(s1, s5, 0x31);
  r6 = _mm256_permute2f128_ps(s2, s6, 0x31);
  r7 = _mm256_permute2f128_ps(s3, s7, 0x31);
}

// Full-width panel of B^T: rows j of b are contiguous in p.
void pack_bt_panel(const float* b, std::size_t ldb, std::size_t p0, std::size_t kc,
                   std::size_t j0, float* out) {
  std::size_t p = 0;
  for (; p + 8 <= kc; p += 8) {
    for (std::size_t half = 0; half < 2; ++half) {
      const float* src = b + (j0 + half * 8) * ldb + p0 + p;
      __m256 r0 = _mm256_loadu_ps(src), r1 = _mm256_loadu_ps(src + ldb);
      __m256 r2 = _mm256_loadu_ps(src + 2 * ldb), r3 = _mm256_loadu_ps(src + 3 * ldb);
      __m256 r4 = _mm256_loadu_ps(src + 4 * ldb), r5 = _mm256_loadu_ps(src + 5 * ldb);
      __m256 r6 = _mm256_loadu_ps(src + 6 * ldb), r7 = _mm256_loadu_ps(src + 7 * ldb);
      transpose8(r0, r1, r2, r3, r4, r5, r6, r7);
      float* dst = out + p * kNr + half * 8;
      _mm256_storeu_ps(dst, r0);
      _mm256_storeu_ps(dst + kNr, r1);
      _mm256_storeu_ps(dst + 2 * kNr, r2);
      _mm256_storeu_ps(dst + 3 * kNr, r3);
      _mm256_storeu_ps(dst + 4 * kNr, r4);
      _mm256_storeu_ps(dst + 5 * kNr, r5);
      _mm256_storeu_ps(dst + 6 * kNr, r6);
      _mm256_storeu_ps(dst + 7 * kNr, r7);
    }
  }
  for (; p < kc; ++p) {
    for (std::size_t c = 0; c < kNr; ++c) out[p * kNr + c] = b[(j0 + c) * ldb + p0 + p];
  }
}

// Packs op(B)[p0:p0+kc, j0:j0+nc] into column panels of kNr, layout [panel][p][c].
void pack_b(Trans tb, const float* b, std::size_t ldb, std::size_t p0, std::size_t kc,
            std::size_t j0, std::size_t nc, float* out) {
  for (std::size_t jr = 0; jr < nc; jr += kNr) {
    std::size_t cols = std::min(kNr, nc - jr);
    if (tb == Trans::yes && cols == kNr) {
      pack_bt_panel(b, ldb, p0, kc, j0 + jr, out);
      out += kc * kNr;
      continue;
    }
    for (std::size_t p = 0; p < kc; ++p) {
      std::size_t q = p0 + p;
      if (tb == Trans::no && cols == kNr) {
        const float* src = b + q * ldb + j0 + jr;
        _mm256_storeu_ps(out, _mm256_loadu_ps(src));
        _mm256_storeu_ps(out + 8, _mm256_loadu_ps(src + 8));
        out += kNr;
        continue;
      }
      for (std::size_t c = 0; c < kNr; ++c) {
        float v = 0.0f;
        if (c < cols) {
          std::size_t j = j0 + jr + c;
          v = tb == Trans::no ? b[q * ldb + j] : b[j * ldb + q];
        }
        *out++ = v;
      }
    }
  }
}

// 6x16 register tile: acc = Apanel * Bpanel over kc.
inline void micro_kernel(std::size_t kc, const float* ap, const float* bp, std::size_t bstride,
                         float* tile) {
  __m256 c00 = _mm256_setzero_ps(), c01 = _mm256_setzero_ps();
  __m256 c10 = _mm256_setzero_ps(), c11 = _mm256_setzero_ps();
  __m256 c20 = _mm256_setzero_ps(), c21 = _mm256_setzero_ps();
  __m256 c30 = _mm256_setzero_ps(), c31 = _mm256_setzero_ps();
  __m256 c40 = _mm256_setzero_ps(), c41 = _mm256_setzero_ps();
  __m256 c50 = _mm256_setzero_ps(), c51 = _mm256_setzero_ps();
  for (std::size_t p = 0; p < kc; ++p) {
    __m256 b0 = _mm256_loadu_ps(bp);
    __m256 b1 = _mm256_loadu_ps(bp + 8);
    __m256 a;
    a = _mm256_broadcast_ss(ap + 0);
    c00 = _mm256_fmadd_ps(a, b0, c00);
    c01 = _mm256_fmadd_ps(a, b1, c01);
    a = _mm256_broadcast_ss(ap + 1);
    c10 = _mm256_fmadd_ps(a, b0, c10);
    c11 = _mm256_fmadd_ps(a, b1, c11);
    a = _mm256_broadcast_ss(ap + 2);
    c20 = _mm256_fmadd_ps(a, b0, c20);
    c21 = _mm256_fmadd_ps(a, b1, c21);
    a = _mm256_broadcast_ss(ap + 3);
    c30 = _mm256_fmadd_ps(a, b0, c30);
    c31 = _mm256_fmadd_ps(a, b1, c31);
    a = _mm256_broadcast_ss(ap + 4);
    c40 = _mm256_fmadd_ps(a, b0, c40);
    c41 = _mm256_fmadd_ps(a, b1, c41);
    a = _mm256_broadcast_ss(ap + 5);
    c50 = _mm256_fmadd_ps(a, b0, c50);
    c51 = _mm256_fmadd_ps(a, b1, c51);
    ap += kMr;
    bp += bstride;
  }
  _mm256_storeu_ps(tile + 0 * kNr, c00);
  _mm256_storeu_ps(tile + 0 * kNr + 8, c01);
  _mm256_storeu_ps(tile + 1 * kNr, c10);
  _mm256_storeu_ps(tile + 1 * kNr + 8, c11);
  _mm256_storeu_ps(tile + 2 * kNr, c20);
  _mm256_storeu_ps(tile + 2 * kNr + 8, c21);
  _mm256_storeu_ps(tile + 3 * kNr, c30);
  _mm256_storeu_ps(tile + 3 * kNr + 8, c31);
  _mm256_storeu_ps(tile + 4 * kNr, c40);
  _mm256_storeu_ps(tile + 4 * kNr + 8, c41);
  _mm256_storeu_ps(tile + 5 * kNr, c50);
  _mm256_storeu_ps(tile + 5 * kNr + 8, c51);
}

void store_tile(const float* tile, std::size_t rows, std::size_t cols, float alpha, float beta,
                bool first, float* c, std::size_t ldc) {
  const __m256 va = _mm256_set1_ps(alpha);
  const __m256 vb = _mm256_set1_ps(beta);
  for (std::size_t r = 0; r < rows; ++r) {
    float* crow = c + r * ldc;
    const float* trow = tile + r * kNr;
    if (cols == kNr) {
      for (std::size_t h = 0; h < kNr; h += 8) {
        __m256 acc = _mm256_mul_ps(va, _mm256_loadu_ps(trow + h));
        if (!first) {
          acc = _mm256_add_ps(acc, _mm256_loadu_ps(crow + h));
        } else if (beta != 0.0f) {
          acc = _mm256_fmadd_ps(vb, _mm256_loadu_ps(crow + h), acc);
        }
        _mm256_storeu_ps(crow + h, acc);
      }
    } else {
      for (std::size_t j = 0; j < cols; ++j) {
        float v = alpha * trow[j];
        if (!first) {
          v += crow[j];
        } else if (beta != 0.0f) {
          v += beta * crow[j];
        }
        crow[j] = v;
      }
    }
  }
}

void gemm_columns(Trans ta, Trans tb, std::size_t m, std::size_t j_begin, std::size_t j_end,
                  std::size_t k, float alpha, const float* a, std::size_t lda, const float* b,
                  std::size_t ldb, float beta, float* c, std::size_t ldc) {
  thread_local std::vector<float> apack;
  thread_local std::vector<float> bpack;
  alignas(32) float tile[kMr * kNr];
  for (std::size_t jc = j_begin; jc < j_end; jc += kNc) {
    std::size_t nc = std::min(kNc, j_end - jc);
    std::size_t nc_pad = (nc + kNr - 1) / kNr * kNr;
    if (k == 0) {
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < nc; ++j) {
          float& v = c[i * ldc + jc + j];
          v = beta == 0.0f ? 0.0f : beta * v;
        }
      }
      continue;
    }
    for (std::size_t pc = 0; pc < k; pc += kKc) {
      std::size_t kc = std::min(kKc, k - pc);
      // Row-major B is streamed in place; only the ragged edge panel is packed.
      const bool direct = tb == Trans::no;
      if (!direct) {
        bpack.resize(nc_pad * kc);
        pack_b(tb, b, ldb, pc, kc, jc, nc, bpack.data());
      } else if (nc % kNr != 0) {
        bpack.resize(kNr * kc);
        pack_b(tb, b, ldb, pc, kc, jc + nc / kNr * kNr, nc % kNr, bpack.data());
      }
      for (std::size_t ic = 0; ic < m; ic += kMc) {
        std::size_t mc = std::min(kMc, m - ic);
        std::size_t mc_pad = (mc + kMr - 1) / kMr * kMr;
        apack.resize(mc_pad * kc);
        pack_a(ta, a, lda, ic, mc, pc, kc, apack.data());
        for (std::size_t jr = 0; jr < nc; jr += kNr) {
          std::size_t cols = std::min(kNr, nc - jr);
          const float* bp;
          std::size_t bstride = kNr;
          if (!direct) {
            bp = bpack.data() + (jr / kNr) * kc * kNr;
          } else if (cols == kNr) {
            bp = b + pc * ldb + jc + jr;
            bstride = ldb;
          } else {
            bp = bpack.data();
          }
          for (std::size_t ir = 0; ir < mc; ir += kMr) {
            std::size_t rows = std::min(kMr, mc - ir);
            const float* ap = apack.data() + (ir / kMr) * kc * kMr;
            micro_kernel(kc, ap, bp, bstride, tile);
            store_tile(tile, rows, cols, alpha, beta, pc == 0, c + (ic + ir) * ldc + jc + jr, ldc);
          }
        }
      }
    }
  }
}

// C = alpha * op(A) * B + beta * C one row at a time. Used when op(A) has
// too few rows or columns to fill the register tile.
void gemm_rows(Trans ta, std::size_t m, std::size_t j_begin, std::size_t j_end, std::size_t k,
               float alpha, const float* a, std::size_t lda, const float* b, std::size_t ldb,
               float beta, float* c, std::size_t ldc) {
  constexpr std::size_t kBlock = 1024;
  for (std::size_t jb = j_begin; jb < j_end; jb += kBlock) {
    const std::size_t je = std::min(j_end, jb + kBlock);
    for (std::size_t i = 0; i < m; ++i) {
      float* crow = c + i * ldc;
      if (beta == 0.0f) {
        std::fill(crow + jb, crow + je, 0.0f);
      } else if (beta != 1.0f) {
        for (std::size_t j = jb; j < je; ++j) crow[j] *= beta;
      }
      for (std::size_t p = 0; p < k; ++p) {
        const float av = alpha * (ta == Trans::no ? a[i * lda + p] : a[p * lda + i]);
        const float* brow = b + p * ldb;
        const __m256 va = _mm256_set1_ps(av);
        std::size_t j = jb;
        for (; j + 8 <= je; j += 8) {
          _mm256_storeu_ps(crow + j, _mm256_fmadd_ps(va, _mm256_loadu_ps(brow + j),
                                                     _mm256_loadu_ps(crow + j)));
        }
        for (; j < je; ++j) crow[j] += av * brow[j];
      }
    }
  }
}

inline float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  lo = _mm_hadd_ps(lo, lo);
  lo = _mm_hadd_ps(lo, lo);
  return _mm_cvtss_f32(lo);
}

// C = alpha * A * B^T + beta * C as contiguous dot products. Used when A
// has few rows and the shared dimension is long.
void gemm_dots(std::size_t m, std::size_t j_begin, std::size_t j_end, std::size_t k, float alpha,
               const float* a, std::size_t lda, const float* b, std::size_t ldb, float beta,
               float* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    const float* arow = a + i * lda;
    std::size_t j = j_begin;
    for (; j + 4 <= j_end; j += 4) {
      const float* b0 = b + j * ldb;
      const float* b1 = b0 + ldb;
      const float* b2 = b1 + ldb;
      const float* b3 = b2 + ldb;
      __m256 s0 = _mm256_setzero_ps(), s1 = _mm256_setzero_ps();
      __m256 s2 = _mm256_setzero_ps(), s3 = _mm256_setzero_ps();
      std::size_t p = 0;
      for (; p + 8 <= k; p += 8) {
        const __m256 av = _mm256_loadu_ps(arow + p);
        s0 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b0 + p), s0);
        s1 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b1 + p), s1);
        s2 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b2 + p), s2);
        s3 = _mm256_fmadd_ps(av, _mm256_loadu_ps(b3 + p), s3);
      }
      float d[4] = {hsum(s0), hsum(s1), hsum(s2), hsum(s3)};
      for (; p < k; ++p) {
        d[0] += arow[p] * b0[p];
        d[1] += arow[p] * b1[p];
        d[2] += arow[p] * b2[p];
        d[3] += arow[p] * b3[p];
      }
      for (std::size_t q = 0; q < 4; ++q) {
        float& out = c[i * ldc + j + q];
        out = alpha * d[q] + (beta == 0.0f ? 0.0f : beta * out);
      }
    }
    for (; j < j_end; ++j) {
      const float* bj = b + j * ldb;
      __m256 s = _mm256_setzero_ps();
      std::size_t p = 0;
      for (; p + 8 <= k; p += 8) s = _mm256_fmadd_ps(_mm256_loadu_ps(arow + p), _mm256_loadu_ps(bj + p), s);
      float d = hsum(s);
      for (; p < k; ++p) d += arow[p] * bj[p];
      float& out = c[i * ldc + j];
      out = alpha * d + (beta == 0.0f ? 0.0f : beta * out);
    }
  }
}

}  // namespace

void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, float alpha,
          const float* a, std::size_t lda, const float* b, std::size_t ldb, float beta, float* c,
          std::size_t ldc) {
  if (m == 0 || n == 0) return;
  if (tb == Trans::no && (m < kMr || k < 4)) {
    const std::size_t min_cols = std::max<std::size_t>(64, (1u << 16) / std::max<std::size_t>(1, m * k));
    parallel_for(n, min_cols, [&](std::size_t j0, std::size_t j1) {
      gemm_rows(ta, m, j0, j1, k, alpha, a, lda, b, ldb, beta, c, ldc);
    });
    return;
  }
  if (ta == Trans::no && tb == Trans::yes && m < kMr && k >= 64) {
    const std::size_t min_cols = std::max<std::size_t>(4, (1u << 16) / std::max<std::size_t>(1, m * k));
    parallel_for(n, min_cols, [&](std::size_t j0, std::size_t j1) {
      gemm_dots(m, j0, j1, k, alpha, a, lda, b, ldb, beta, c, ldc);
    });
    return;
  }
  std::size_t panels = (n + kNr - 1) / kNr;
  std::size_t work_per_panel = std::max<std::size_t>(1, m * k * kNr);
  std::size_t min_panels = std::max<std::size_t>(1, (1u << 18) / work_per_panel);
  parallel_for(panels, min_panels, [&](std::size_t p0, std::size_t p1) {
    gemm_columns(ta, tb, m, p0 * kNr, std::min(n, p1 * kNr), k, alpha, a, lda, b, ldb, beta, c,
                 ldc);
  });
}

void axpy(std::size_t n, float alpha, const float* x, float* y) {
  const __m256 va = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

double squared_distance(std::size_t n, const double* a, const double* b) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256d d0 = _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
    __m256d d1 = _mm256_sub_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4));
    acc0 = _mm256_fmadd_pd(d0, d0, acc0);
    acc1 = _mm256_fmadd_pd(d1, d1, acc1);
  }
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, _mm256_add_pd(acc0, acc1));
  double acc = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
  for (; i < n; ++i) {
    double d = a[i] - b[i];
    acc += d * d;
  }
  return acc;
}

}  // namespace glyphforge::kernels::avx2
