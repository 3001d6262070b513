// AVX2 (256-bit, 4 doubles per lane) kernel variants. Tail elements fall
// back to scalar code. This translation unit is compiled with -mavx2; it
// is only entered after the runtime dispatcher has confirmed AVX2 support.

#ifdef PFP_HAVE_AVX2

#include <immintrin.h>

#include <cmath>
#include <cstddef>

#include "pfp/kernels.hpp"

namespace pfp::kernels::detail {

namespace {

constexpr std::size_t kLane = 4;

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d swapped = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, swapped));
}

}  // namespace

double sum_avx2(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + kLane <= n; i += kLane)
    acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
  double res = hsum(acc);
  for (; i < n; ++i) res += x[i];
  return res;
}

double dot_avx2(const double* x, const double* y, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + kLane <= n; i += kLane) {
    __m256d vx = _mm256_loadu_pd(x + i);
    __m256d vy = _mm256_loadu_pd(y + i);
    acc = _mm256_add_pd(acc, _mm256_mul_pd(vx, vy));
  }
  double res = hsum(acc);
  for (; i < n; ++i) res += x[i] * y[i];
  return res;
}

void scale_avx2(double* out, const double* x, double a, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + kLane <= n; i += kLane)
    _mm256_storeu_pd(out + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) out[i] = a * x[i];
}

void axpy_avx2(double* y, const double* x, double a, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + kLane <= n; i += kLane) {
    __m256d vy = _mm256_loadu_pd(y + i);
    vy = _mm256_add_pd(vy, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
    _mm256_storeu_pd(y + i, vy);
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void recip_scale_avx2(double* out, const double* x, double a, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + kLane <= n; i += kLane)
    _mm256_storeu_pd(out + i, _mm256_div_pd(va, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) out[i] = a / x[i];
}

double l1_residual_avx2(const double* u, const double* d, double r,
                        std::size_t n) {
  const __m256d vr = _mm256_set1_pd(r);
  const __m256d sign_mask = _mm256_set1_pd(-0.0);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + kLane <= n; i += kLane) {
    __m256d prod = _mm256_mul_pd(_mm256_loadu_pd(u + i), _mm256_loadu_pd(d + i));
    __m256d diff = _mm256_sub_pd(prod, vr);
    acc = _mm256_add_pd(acc, _mm256_andnot_pd(sign_mask, diff));
  }
  double res = hsum(acc);
  for (; i < n; ++i) res += std::fabs(u[i] * d[i] - r);
  return res;
}

extern const Ops kAvx2Ops;
const Ops kAvx2Ops = {
    sum_avx2,  dot_avx2,         scale_avx2,
    axpy_avx2, recip_scale_avx2, l1_residual_avx2,
};

}  // namespace pfp::kernels::detail

#endif  // PFP_HAVE_AVX2
