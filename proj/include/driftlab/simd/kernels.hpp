#pragma once

// Data-parallel inner loops shared by the finite-chain oracle, the
// estimators and the netctl batch simulator.
//
// Every kernel has a scalar reference implementation and, where the target
// supports it, an AVX2 (x86-64) or NEON (aarch64) variant selected at
// runtime. Reductions use four interleaved partial sums combined as
// (s0 + s1) + (s2 + s3), then the tail in order; the scalar reference
// follows the same order, so all variants agree bit for bit. The build
// disables FMA contraction for the same reason.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

namespace driftlab::simd {

enum class Isa { scalar, avx2, neon };

std::string_view isa_name(Isa isa);

/// Lane inputs and outputs of one closed-loop step of the netctl plant.
/// `upsilon` holds 0.0 / 1.0 channel outcomes, `noise` the already scaled
/// disturbance w_t. `factor_code` receives 0 (Δ unchanged), 1 (zoom in by
/// α) or 2 (zoom out by |a|+δ).
struct NetStepLanes {
  const double* x = nullptr;
  const double* delta = nullptr;
  const double* upsilon = nullptr;
  const double* noise = nullptr;
  double* x_next = nullptr;
  double* xhat = nullptr;
  double* u = nullptr;
  std::uint8_t* overflow = nullptr;
  std::uint8_t* factor_code = nullptr;
  std::size_t n = 0;
};

struct NetStepConstants {
  double a = 0.0;
  double b = 1.0;
  double neg_a_over_b = 0.0;  // -(a / b)
  double half_k = 1.0;        // K / 2
  double k_minus_one = 1.0;   // K - 1, highest 0-based bin
  double zoom_floor = 1.0;    // L
};

NetStepConstants make_net_step_constants(double a, double b, int bins, double zoom_floor);

struct KernelTable {
  Isa isa;
  double (*dot)(const double* a, const double* b, std::size_t n);
  /// out = row * M for a row-major n x n matrix.
  void (*vecmat)(const double* row, const double* m, std::size_t n, double* out);
  /// out = M * v for a row-major n x n matrix.
  void (*matvec)(const double* m, const double* v, std::size_t n, double* out);
  /// sum_i w_i |a_i - b_i|; w may be null (weights 1).
  double (*weighted_abs_diff)(const double* w, const double* a, const double* b, std::size_t n);
  void (*sum_sumsq)(const double* x, std::size_t n, double* sum, double* sumsq);
  /// Uniform quantizer, 0-based bin index in [0, K-1] or -1 on overflow.
  void (*quantize)(const double* x, const double* delta, std::size_t n, double half_k,
                   double k_minus_one, double* value, std::int32_t* bin);
  void (*net_step)(const NetStepConstants& c, const NetStepLanes& lanes);
};

const KernelTable& scalar_kernels();
#if defined(DRIFTLAB_HAVE_AVX2)
const KernelTable& avx2_kernels();
#endif
#if defined(DRIFTLAB_HAVE_NEON)
const KernelTable& neon_kernels();
#endif

bool isa_supported(Isa isa);
/// Best supported ISA, unless DRIFTLAB_ISA=scalar|avx2|neon overrides it.
Isa detect_isa();
const KernelTable& kernels_for(Isa isa);
/// Table used by the library; resolved once on first use.
const KernelTable& active();
/// Test hook: pin the active table. Throws if unsupported.
void force_isa(Isa isa);

// Span front-ends over the active table.
double dot(std::span<const double> a, std::span<const double> b);
void vecmat(std::span<const double> row, std::span<const double> m, std::span<double> out);
void matvec(std::span<const double> m, std::span<const double> v, std::span<double> out);
double weighted_abs_diff(std::span<const double> w, std::span<const double> a,
                         std::span<const double> b);
double abs_diff(std::span<const double> a, std::span<const double> b);

}  // namespace driftlab::simd
