#pragma once

// Element-wise reference operations. The SIMD variants call these for
// their tails so that every lane sees exactly the same arithmetic.

#include <cmath>
#include <cstdint>

#include "driftlab/simd/kernels.hpp"

namespace driftlab::simd::detail {

inline void quantize_one(double x, double delta, double half_k, double k_max, double& value,
                         std::int32_t& bin) {
  const double hi = half_k * delta;
  const double lo = -hi;
  if (!(x >= lo && x <= hi)) {
    value = 0.0;
    bin = -1;
    return;
  }
  double j = std::floor(x / delta + half_k);
  // The floor can land one bin off when x sits on an edge; edges are
  // defined as (j - K/2) * delta evaluated in floating point.
  if (x < (j - half_k) * delta) {
    j -= 1.0;
  } else if (x >= ((j + 1.0) - half_k) * delta) {
    j += 1.0;
  }
  j = j > k_max ? k_max : j;
  j = j < 0.0 ? 0.0 : j;
  value = ((j - half_k) + 0.5) * delta;
  bin = static_cast<std::int32_t>(j);
}

inline void net_step_one(const NetStepConstants& c, double x, double delta, double upsilon,
                         double w, double& x_next, double& xhat, double& u,
                         std::uint8_t& overflow, std::uint8_t& code) {
  double q = 0.0;
  std::int32_t bin = 0;
  quantize_one(x, delta, c.half_k, c.k_minus_one, q, bin);
  const bool over = bin < 0;
  xhat = upsilon * q;
  u = c.neg_a_over_b * xhat;
  x_next = (c.a * x + c.b * u) + w;
  overflow = over ? 1 : 0;
  code = (over || upsilon == 0.0) ? 2 : (delta > c.zoom_floor ? 1 : 0);
}

}  // namespace driftlab::simd::detail
