// aarch64 variant. Two float64x2 accumulators stand in for the four
// interleaved lanes of the reference reductions.

#include <arm_neon.h>

#include "driftlab/simd/kernels.hpp"
#include "scalar_ops.hpp"

namespace driftlab::simd {
namespace {

inline double combine(float64x2_t lo, float64x2_t hi) {
  return (vgetq_lane_f64(lo, 0) + vgetq_lane_f64(lo, 1)) +
         (vgetq_lane_f64(hi, 0) + vgetq_lane_f64(hi, 1));
}

double dot_neon(const double* a, const double* b, std::size_t n) {
  float64x2_t lo = vdupq_n_f64(0.0);
  float64x2_t hi = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    lo = vaddq_f64(lo, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    hi = vaddq_f64(hi, vmulq_f64(vld1q_f64(a + i + 2), vld1q_f64(b + i + 2)));
  }
  double total = combine(lo, hi);
  for (; i < n; ++i) total += a[i] * b[i];
  return total;
}

void vecmat_neon(const double* row, const double* m, std::size_t n, double* out) {
  for (std::size_t j = 0; j < n; ++j) out[j] = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = row[i];
    if (r == 0.0) continue;
    const float64x2_t rv = vdupq_n_f64(r);
    const double* mi = m + i * n;
    std::size_t j = 0;
    for (; j + 2 <= n; j += 2) {
      vst1q_f64(out + j, vaddq_f64(vld1q_f64(out + j), vmulq_f64(rv, vld1q_f64(mi + j))));
    }
    for (; j < n; ++j) out[j] += r * mi[j];
  }
}

void matvec_neon(const double* m, const double* v, std::size_t n, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = dot_neon(m + i * n, v, n);
}

double weighted_abs_diff_neon(const double* w, const double* a, const double* b,
                              std::size_t n) {
  float64x2_t lo = vdupq_n_f64(0.0);
  float64x2_t hi = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    float64x2_t d0 = vabsq_f64(vsubq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    float64x2_t d1 = vabsq_f64(vsubq_f64(vld1q_f64(a + i + 2), vld1q_f64(b + i + 2)));
    if (w) {
      d0 = vmulq_f64(vld1q_f64(w + i), d0);
      d1 = vmulq_f64(vld1q_f64(w + i + 2), d1);
    }
    lo = vaddq_f64(lo, d0);
    hi = vaddq_f64(hi, d1);
  }
  double total = combine(lo, hi);
  for (; i < n; ++i) {
    const double d = std::fabs(a[i] - b[i]);
    total += w ? w[i] * d : d;
  }
  return total;
}

void sum_sumsq_neon(const double* x, std::size_t n, double* sum, double* sumsq) {
  float64x2_t s0 = vdupq_n_f64(0.0), s1 = vdupq_n_f64(0.0);
  float64x2_t q0 = vdupq_n_f64(0.0), q1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const float64x2_t v0 = vld1q_f64(x + i);
    const float64x2_t v1 = vld1q_f64(x + i + 2);
    s0 = vaddq_f64(s0, v0);
    s1 = vaddq_f64(s1, v1);
    q0 = vaddq_f64(q0, vmulq_f64(v0, v0));
    q1 = vaddq_f64(q1, vmulq_f64(v1, v1));
  }
  double ts = combine(s0, s1);
  double tq = combine(q0, q1);
  for (; i < n; ++i) {
    ts += x[i];
    tq += x[i] * x[i];
  }
  *sum = ts;
  *sumsq = tq;
}

// The quantizer and the plant step are branchy per lane and short; the
// NEON table reuses the reference loops for them.
void quantize_neon(const double* x, const double* delta, std::size_t n, double half_k,
                   double k_minus_one, double* value, std::int32_t* bin) {
  for (std::size_t i = 0; i < n; ++i) {
    detail::quantize_one(x[i], delta[i], half_k, k_minus_one, value[i], bin[i]);
  }
}

void net_step_neon(const NetStepConstants& c, const NetStepLanes& l) {
  for (std::size_t i = 0; i < l.n; ++i) {
    detail::net_step_one(c, l.x[i], l.delta[i], l.upsilon[i], l.noise[i], l.x_next[i],
                         l.xhat[i], l.u[i], l.overflow[i], l.factor_code[i]);
  }
}

}  // namespace

const KernelTable& neon_kernels() {
  static const KernelTable table{Isa::neon,     dot_neon,       vecmat_neon,
                                 matvec_neon,   weighted_abs_diff_neon,
                                 sum_sumsq_neon, quantize_neon, net_step_neon};
  return table;
}

}  // namespace driftlab::simd
