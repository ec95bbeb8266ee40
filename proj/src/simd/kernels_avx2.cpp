// Compiled with -mavx2 (and without -mfma); only reached after a runtime
// CPU check in dispatch.cpp.

#include <immintrin.h>

#include "driftlab/simd/kernels.hpp"
#include "scalar_ops.hpp"

namespace driftlab::simd {
namespace {

inline double combine_lanes(__m256d acc) {
  alignas(32) double s[4];
  _mm256_store_pd(s, acc);
  return (s[0] + s[1]) + (s[2] + s[3]);
}

inline __m256d abs_pd(__m256d v) {
  return _mm256_andnot_pd(_mm256_set1_pd(-0.0), v);
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  double total = combine_lanes(acc);
  for (; i < n; ++i) total += a[i] * b[i];
  return total;
}

void vecmat_avx2(const double* row, const double* m, std::size_t n, double* out) {
  for (std::size_t j = 0; j < n; ++j) out[j] = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = row[i];
    if (r == 0.0) continue;
    const __m256d rv = _mm256_set1_pd(r);
    const double* mi = m + i * n;
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
      const __m256d o = _mm256_loadu_pd(out + j);
      _mm256_storeu_pd(out + j, _mm256_add_pd(o, _mm256_mul_pd(rv, _mm256_loadu_pd(mi + j))));
    }
    for (; j < n; ++j) out[j] += r * mi[j];
  }
}

void matvec_avx2(const double* m, const double* v, std::size_t n, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = dot_avx2(m + i * n, v, n);
}

double weighted_abs_diff_avx2(const double* w, const double* a, const double* b,
                              std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d d = abs_pd(_mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    acc = _mm256_add_pd(acc, w ? _mm256_mul_pd(_mm256_loadu_pd(w + i), d) : d);
  }
  double total = combine_lanes(acc);
  for (; i < n; ++i) {
    const double d = std::fabs(a[i] - b[i]);
    total += w ? w[i] * d : d;
  }
  return total;
}

void sum_sumsq_avx2(const double* x, std::size_t n, double* sum, double* sumsq) {
  __m256d s = _mm256_setzero_pd();
  __m256d q = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_loadu_pd(x + i);
    s = _mm256_add_pd(s, v);
    q = _mm256_add_pd(q, _mm256_mul_pd(v, v));
  }
  double ts = combine_lanes(s);
  double tq = combine_lanes(q);
  for (; i < n; ++i) {
    ts += x[i];
    tq += x[i] * x[i];
  }
  *sum = ts;
  *sumsq = tq;
}

// Four lanes of detail::quantize_one. Returns the quantized values and the
// 0-based bin (as double, -1 on overflow).
inline void quantize4(__m256d x, __m256d delta, __m256d half_k, __m256d k_max, __m256d& value,
                      __m256d& bin) {
  const __m256d zero = _mm256_setzero_pd();
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d hi = _mm256_mul_pd(half_k, delta);
  const __m256d lo = _mm256_sub_pd(zero, hi);
  const __m256d granular = _mm256_and_pd(_mm256_cmp_pd(x, lo, _CMP_GE_OQ),
                                         _mm256_cmp_pd(x, hi, _CMP_LE_OQ));
  __m256d j = _mm256_floor_pd(_mm256_add_pd(_mm256_div_pd(x, delta), half_k));
  const __m256d below =
      _mm256_cmp_pd(x, _mm256_mul_pd(_mm256_sub_pd(j, half_k), delta), _CMP_LT_OQ);
  const __m256d above = _mm256_andnot_pd(
      below, _mm256_cmp_pd(x, _mm256_mul_pd(_mm256_sub_pd(_mm256_add_pd(j, one), half_k), delta),
                           _CMP_GE_OQ));
  j = _mm256_blendv_pd(j, _mm256_sub_pd(j, one), below);
  j = _mm256_blendv_pd(j, _mm256_add_pd(j, one), above);
  j = _mm256_blendv_pd(j, k_max, _mm256_cmp_pd(j, k_max, _CMP_GT_OQ));
  j = _mm256_blendv_pd(j, zero, _mm256_cmp_pd(j, zero, _CMP_LT_OQ));
  const __m256d v =
      _mm256_mul_pd(_mm256_add_pd(_mm256_sub_pd(j, half_k), _mm256_set1_pd(0.5)), delta);
  value = _mm256_blendv_pd(zero, v, granular);
  bin = _mm256_blendv_pd(_mm256_set1_pd(-1.0), j, granular);
}

void quantize_avx2(const double* x, const double* delta, std::size_t n, double half_k,
                   double k_minus_one, double* value, std::int32_t* bin) {
  const __m256d hk = _mm256_set1_pd(half_k);
  const __m256d km = _mm256_set1_pd(k_minus_one);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d v, b;
    quantize4(_mm256_loadu_pd(x + i), _mm256_loadu_pd(delta + i), hk, km, v, b);
    _mm256_storeu_pd(value + i, v);
    _mm_storeu_si128(reinterpret_cast<__m128i*>(bin + i), _mm256_cvttpd_epi32(b));
  }
  for (; i < n; ++i) detail::quantize_one(x[i], delta[i], half_k, k_minus_one, value[i], bin[i]);
}

void net_step_avx2(const NetStepConstants& c, const NetStepLanes& l) {
  const __m256d hk = _mm256_set1_pd(c.half_k);
  const __m256d km = _mm256_set1_pd(c.k_minus_one);
  const __m256d av = _mm256_set1_pd(c.a);
  const __m256d bv = _mm256_set1_pd(c.b);
  const __m256d gain = _mm256_set1_pd(c.neg_a_over_b);
  const __m256d floor_l = _mm256_set1_pd(c.zoom_floor);
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= l.n; i += 4) {
    const __m256d x = _mm256_loadu_pd(l.x + i);
    const __m256d delta = _mm256_loadu_pd(l.delta + i);
    const __m256d ups = _mm256_loadu_pd(l.upsilon + i);
    __m256d q, bin;
    quantize4(x, delta, hk, km, q, bin);
    const __m256d xhat = _mm256_mul_pd(ups, q);
    const __m256d u = _mm256_mul_pd(gain, xhat);
    const __m256d xn = _mm256_add_pd(_mm256_add_pd(_mm256_mul_pd(av, x), _mm256_mul_pd(bv, u)),
                                     _mm256_loadu_pd(l.noise + i));
    _mm256_storeu_pd(l.xhat + i, xhat);
    _mm256_storeu_pd(l.u + i, u);
    _mm256_storeu_pd(l.x_next + i, xn);
    const int over = _mm256_movemask_pd(_mm256_cmp_pd(bin, zero, _CMP_LT_OQ));
    const int erased = _mm256_movemask_pd(_mm256_cmp_pd(ups, zero, _CMP_EQ_OQ));
    const int large = _mm256_movemask_pd(_mm256_cmp_pd(delta, floor_l, _CMP_GT_OQ));
    for (int k = 0; k < 4; ++k) {
      const bool o = (over >> k) & 1;
      l.overflow[i + k] = o ? 1 : 0;
      l.factor_code[i + k] = (o || ((erased >> k) & 1)) ? 2 : (((large >> k) & 1) ? 1 : 0);
    }
  }
  for (; i < l.n; ++i) {
    detail::net_step_one(c, l.x[i], l.delta[i], l.upsilon[i], l.noise[i], l.x_next[i],
                         l.xhat[i], l.u[i], l.overflow[i], l.factor_code[i]);
  }
}

}  // namespace

const KernelTable& avx2_kernels() {
  static const KernelTable table{Isa::avx2,     dot_avx2,       vecmat_avx2,
                                 matvec_avx2,   weighted_abs_diff_avx2,
                                 sum_sumsq_avx2, quantize_avx2, net_step_avx2};
  return table;
}

}  // namespace driftlab::simd
