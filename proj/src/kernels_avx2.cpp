// AVX2+FMA variants of the exceedance reductions. Compiled only when the
// compiler supports -mavx2 -mfma; selected at runtime behind a CPU check.

#include "evtmem/kernels.hpp"

#ifdef EVTMEM_BUILD_AVX2

#include <immintrin.h>

#include <cmath>
#include <cstdint>

namespace evtmem {
namespace {

// Vector exp for 4 doubles, Cephes-style: range reduction against ln 2 in
// two parts, rational approximation in the reduced argument, then scaling by
// 2^n through the exponent bits. Accurate to a couple of ulp on the range
// where the scalar exp is finite and normal.
inline __m256d exp_pd(__m256d x) {
  const __m256d log2e = _mm256_set1_pd(1.4426950408889634073599);
  const __m256d c1 = _mm256_set1_pd(6.93145751953125e-1);
  const __m256d c2 = _mm256_set1_pd(1.42860682030941723212e-6);
  const __m256d p0 = _mm256_set1_pd(1.26177193074810590878e-4);
  const __m256d p1 = _mm256_set1_pd(3.02994407707441961300e-2);
  const __m256d p2 = _mm256_set1_pd(9.99999999999999999910e-1);
  const __m256d q0 = _mm256_set1_pd(3.00198505138664455042e-6);
  const __m256d q1 = _mm256_set1_pd(2.52448340349684104192e-3);
  const __m256d q2 = _mm256_set1_pd(2.27265548208155028766e-1);
  const __m256d q3 = _mm256_set1_pd(2.00000000000000000005e0);
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d two = _mm256_set1_pd(2.0);
  const __m256d lo = _mm256_set1_pd(-708.39641853226408);
  const __m256d hi = _mm256_set1_pd(709.78271289338397);

  const __m256d too_lo = _mm256_cmp_pd(x, lo, _CMP_LT_OQ);
  const __m256d too_hi = _mm256_cmp_pd(x, hi, _CMP_GT_OQ);
  x = _mm256_min_pd(_mm256_max_pd(x, lo), hi);

  // n = round(x * log2(e))
  __m256d n = _mm256_round_pd(_mm256_mul_pd(x, log2e),
                              _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  x = _mm256_fnmadd_pd(n, c1, x);
  x = _mm256_fnmadd_pd(n, c2, x);

  const __m256d xx = _mm256_mul_pd(x, x);
  __m256d px = _mm256_fmadd_pd(p0, xx, p1);
  px = _mm256_fmadd_pd(px, xx, p2);
  px = _mm256_mul_pd(px, x);
  __m256d qx = _mm256_fmadd_pd(q0, xx, q1);
  qx = _mm256_fmadd_pd(qx, xx, q2);
  qx = _mm256_fmadd_pd(qx, xx, q3);
  __m256d r = _mm256_div_pd(px, _mm256_sub_pd(qx, px));
  r = _mm256_fmadd_pd(two, r, one);

  // 2^n via the exponent field; n is within [-1023, 1024] after clamping.
  const __m128i ni = _mm256_cvtpd_epi32(n);
  const __m256i nl = _mm256_cvtepi32_epi64(ni);
  const __m256i pow2 =
      _mm256_slli_epi64(_mm256_add_epi64(nl, _mm256_set1_epi64x(1023)), 52);
  r = _mm256_mul_pd(r, _mm256_castsi256_pd(pow2));

  r = _mm256_blendv_pd(r, _mm256_setzero_pd(), too_lo);
  r = _mm256_blendv_pd(r, _mm256_set1_pd(HUGE_VAL), too_hi);
  return r;
}

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

PotSums pot_sums_avx2(const double* a, const double* z, std::size_t n) {
  __m256d sa = _mm256_setzero_pd();
  __m256d sez = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d av = _mm256_loadu_pd(a + i);
    const __m256d zv = _mm256_loadu_pd(z + i);
    sa = _mm256_add_pd(sa, av);
    const __m256d ev = exp_pd(_mm256_sub_pd(_mm256_setzero_pd(), av));
    sez = _mm256_fmadd_pd(zv, ev, sez);
  }
  double out_a = hsum(sa);
  double out_ez = hsum(sez);
  for (; i < n; ++i) {
    out_a += a[i];
    out_ez += z[i] * std::exp(-a[i]);
  }
  return {out_a, out_ez};
}

void exp_neg_avx2(const double* x, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d xv = _mm256_loadu_pd(x + i);
    _mm256_storeu_pd(out + i, exp_pd(_mm256_sub_pd(_mm256_setzero_pd(), xv)));
  }
  for (; i < n; ++i) out[i] = std::exp(-x[i]);
}

void axpy_avx2(double c, const double* x, double* a, std::size_t n) {
  const __m256d cv = _mm256_set1_pd(c);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d av = _mm256_loadu_pd(a + i);
    const __m256d xv = _mm256_loadu_pd(x + i);
    _mm256_storeu_pd(a + i, _mm256_fmadd_pd(cv, xv, av));
  }
  for (; i < n; ++i) a[i] += c * x[i];
}

}  // namespace

const Kernels* avx2_kernels_impl() {
  static const Kernels k{pot_sums_avx2, exp_neg_avx2, axpy_avx2, "avx2"};
  return &k;
}

}  // namespace evtmem

#endif  // EVTMEM_BUILD_AVX2
