#include <cmath>

#include "driftlab/simd/kernels.hpp"
#include "scalar_ops.hpp"

namespace driftlab::simd {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double s[4] = {0.0, 0.0, 0.0, 0.0};
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    for (int l = 0; l < 4; ++l) s[l] += a[i + l] * b[i + l];
  }
  double total = (s[0] + s[1]) + (s[2] + s[3]);
  for (; i < n; ++i) total += a[i] * b[i];
  return total;
}

void vecmat_scalar(const double* row, const double* m, std::size_t n, double* out) {
  for (std::size_t j = 0; j < n; ++j) out[j] = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = row[i];
    if (r == 0.0) continue;
    const double* mi = m + i * n;
    for (std::size_t j = 0; j < n; ++j) out[j] += r * mi[j];
  }
}

void matvec_scalar(const double* m, const double* v, std::size_t n, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = dot_scalar(m + i * n, v, n);
}

double weighted_abs_diff_scalar(const double* w, const double* a, const double* b,
                                std::size_t n) {
  double s[4] = {0.0, 0.0, 0.0, 0.0};
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    for (int l = 0; l < 4; ++l) {
      const double d = std::fabs(a[i + l] - b[i + l]);
      s[l] += w ? w[i + l] * d : d;
    }
  }
  double total = (s[0] + s[1]) + (s[2] + s[3]);
  for (; i < n; ++i) {
    const double d = std::fabs(a[i] - b[i]);
    total += w ? w[i] * d : d;
  }
  return total;
}

void sum_sumsq_scalar(const double* x, std::size_t n, double* sum, double* sumsq) {
  double s[4] = {0.0, 0.0, 0.0, 0.0};
  double q[4] = {0.0, 0.0, 0.0, 0.0};
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    for (int l = 0; l < 4; ++l) {
      s[l] += x[i + l];
      q[l] += x[i + l] * x[i + l];
    }
  }
  double ts = (s[0] + s[1]) + (s[2] + s[3]);
  double tq = (q[0] + q[1]) + (q[2] + q[3]);
  for (; i < n; ++i) {
    ts += x[i];
    tq += x[i] * x[i];
  }
  *sum = ts;
  *sumsq = tq;
}

void quantize_scalar(const double* x, const double* delta, std::size_t n, double half_k,
                     double k_minus_one, double* value, std::int32_t* bin) {
  for (std::size_t i = 0; i < n; ++i) {
    detail::quantize_one(x[i], delta[i], half_k, k_minus_one, value[i], bin[i]);
  }
}

void net_step_scalar(const NetStepConstants& c, const NetStepLanes& l) {
  for (std::size_t i = 0; i < l.n; ++i) {
    detail::net_step_one(c, l.x[i], l.delta[i], l.upsilon[i], l.noise[i], l.x_next[i],
                         l.xhat[i], l.u[i], l.overflow[i], l.factor_code[i]);
  }
}

}  // namespace

const KernelTable& scalar_kernels() {
  static const KernelTable table{Isa::scalar,     dot_scalar,       vecmat_scalar,
                                 matvec_scalar,   weighted_abs_diff_scalar,
                                 sum_sumsq_scalar, quantize_scalar, net_step_scalar};
  return table;
}

}  // namespace driftlab::simd
