#include "riskspan/kernels.hpp"

#if RISKSPAN_HAVE_AVX2_KERNELS

#include <immintrin.h>

#define RISKSPAN_AVX2 __attribute__((target("avx2,fma")))

namespace riskspan::kernels::avx2 {

namespace {

RISKSPAN_AVX2 inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

}  // namespace

RISKSPAN_AVX2 double dot(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

RISKSPAN_AVX2 void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

RISKSPAN_AVX2 void gemv_t(const double* w, const double* x, double* y, std::size_t rows, std::size_t cols) {
  for (std::size_t j = 0; j < cols; ++j) y[j] = 0.0;
  for (std::size_t i = 0; i < rows; ++i) axpy(x[i], w + i * cols, y, cols);
}

RISKSPAN_AVX2 void gemv(const double* w, const double* x, double* y, std::size_t rows, std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i) y[i] = dot(w + i * cols, x, cols);
}

RISKSPAN_AVX2 void ger(const double* x, const double* y, double* w, std::size_t rows, std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i) axpy(x[i], y, w + i * cols, cols);
}

RISKSPAN_AVX2 double sum_squares(const double* a, std::size_t n) { return dot(a, a, n); }

}  // namespace riskspan::kernels::avx2

#endif
