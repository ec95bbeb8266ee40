#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "driftlab/simd/kernels.hpp"

namespace driftlab::simd {

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
    case Isa::neon: return "neon";
  }
  return "unknown";
}

NetStepConstants make_net_step_constants(double a, double b, int bins, double zoom_floor) {
  NetStepConstants c;
  c.a = a;
  c.b = b;
  c.neg_a_over_b = -(a / b);
  c.half_k = static_cast<double>(bins) / 2.0;
  c.k_minus_one = static_cast<double>(bins - 1);
  c.zoom_floor = zoom_floor;
  return c;
}

bool isa_supported(Isa isa) {
  switch (isa) {
    case Isa::scalar: return true;
    case Isa::avx2:
#if defined(DRIFTLAB_HAVE_AVX2)
      return __builtin_cpu_supports("avx2");
#else
      return false;
#endif
    case Isa::neon:
#if defined(DRIFTLAB_HAVE_NEON)
      return true;
#else
      return false;
#endif
  }
  return false;
}

Isa detect_isa() {
  if (const char* env = std::getenv("DRIFTLAB_ISA")) {
    const std::string want(env);
    for (Isa isa : {Isa::scalar, Isa::avx2, Isa::neon}) {
      if (want == isa_name(isa) && isa_supported(isa)) return isa;
    }
  }
  if (isa_supported(Isa::avx2)) return Isa::avx2;
  if (isa_supported(Isa::neon)) return Isa::neon;
  return Isa::scalar;
}

const KernelTable& kernels_for(Isa isa) {
  if (!isa_supported(isa)) {
    throw std::invalid_argument("ISA not supported on this CPU: " + std::string(isa_name(isa)));
  }
  switch (isa) {
#if defined(DRIFTLAB_HAVE_AVX2)
    case Isa::avx2: return avx2_kernels();
#endif
#if defined(DRIFTLAB_HAVE_NEON)
    case Isa::neon: return neon_kernels();
#endif
    default: return scalar_kernels();
  }
}

namespace {
std::atomic<const KernelTable*> g_active{nullptr};
}

const KernelTable& active() {
  const KernelTable* t = g_active.load(std::memory_order_acquire);
  if (!t) {
    t = &kernels_for(detect_isa());
    g_active.store(t, std::memory_order_release);
  }
  return *t;
}

void force_isa(Isa isa) { g_active.store(&kernels_for(isa), std::memory_order_release); }

namespace {
void require_same(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw std::invalid_argument(std::string("size mismatch in ") + what);
}
}  // namespace

double dot(std::span<const double> a, std::span<const double> b) {
  require_same(a.size(), b.size(), "dot");
  return active().dot(a.data(), b.data(), a.size());
}

void vecmat(std::span<const double> row, std::span<const double> m, std::span<double> out) {
  require_same(row.size() * row.size(), m.size(), "vecmat");
  require_same(row.size(), out.size(), "vecmat");
  active().vecmat(row.data(), m.data(), row.size(), out.data());
}

void matvec(std::span<const double> m, std::span<const double> v, std::span<double> out) {
  require_same(v.size() * v.size(), m.size(), "matvec");
  require_same(v.size(), out.size(), "matvec");
  active().matvec(m.data(), v.data(), v.size(), out.data());
}

double weighted_abs_diff(std::span<const double> w, std::span<const double> a,
                         std::span<const double> b) {
  require_same(a.size(), b.size(), "weighted_abs_diff");
  require_same(w.size(), a.size(), "weighted_abs_diff");
  return active().weighted_abs_diff(w.data(), a.data(), b.data(), a.size());
}

double abs_diff(std::span<const double> a, std::span<const double> b) {
  require_same(a.size(), b.size(), "abs_diff");
  return active().weighted_abs_diff(nullptr, a.data(), b.data(), a.size());
}

}  // namespace driftlab::simd
