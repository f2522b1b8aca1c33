// SPDX-License-Identifier: Apache-2.0
// Compiled with -mavx2 -mfma. Only reached after a CPUID check.
#include <immintrin.h>

#include "lmtc/simd/kernels.hpp"

namespace lmtc::simd {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4),
                           _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4)
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vy = _mm256_loadu_pd(y + i);
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), vy));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void axpby_avx2(double alpha, const double* x, double beta, double* y,
                std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  const __m256d vb = _mm256_set1_pd(beta);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vy = _mm256_mul_pd(vb, _mm256_loadu_pd(y + i));
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), vy));
  }
  for (; i < n; ++i) y[i] = alpha * x[i] + beta * y[i];
}

double gather_dot_f32_avx2(const std::uint32_t* idx, const float* val,
                           std::size_t n, const double* dense) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m128i vi = _mm_loadu_si128(reinterpret_cast<const __m128i*>(idx + i));
    __m256d vd = _mm256_i32gather_pd(dense, vi, 8);
    __m256d vv = _mm256_cvtps_pd(_mm_loadu_ps(val + i));
    acc = _mm256_fmadd_pd(vv, vd, acc);
  }
  double s = hsum(acc);
  for (; i < n; ++i) s += static_cast<double>(val[i]) * dense[idx[i]];
  return s;
}

double gather_dot_f64_avx2(const std::uint32_t* idx, const double* val,
                           std::size_t n, const double* dense) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m128i vi = _mm_loadu_si128(reinterpret_cast<const __m128i*>(idx + i));
    __m256d vd = _mm256_i32gather_pd(dense, vi, 8);
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(val + i), vd, acc);
  }
  double s = hsum(acc);
  for (; i < n; ++i) s += val[i] * dense[idx[i]];
  return s;
}

}  // namespace

const KernelTable& avx2_kernels() {
  static const KernelTable t{dot_avx2, axpy_avx2, gather_dot_f32_avx2,
                             gather_dot_f64_avx2, axpby_avx2};
  return t;
}

}  // namespace lmtc::simd
