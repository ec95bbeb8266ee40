#pragma once

// Exact computations on finite chains. Every statistical estimator in the
// library is validated against these.
//
// Distances use the f-norm convention sum_y f(y) |mu(y) - nu(y)|; with
// f = 1 this is twice the largest event difference.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "driftlab/finite_chain.hpp"
#include "driftlab/rate_functions.hpp"

namespace driftlab {

using StateMask = std::vector<bool>;

StateMask mask_of(std::size_t n, std::initializer_list<std::size_t> members);

struct ClassStructure {
  std::vector<std::vector<std::size_t>> classes;         // strongly connected components
  std::vector<std::vector<std::size_t>> closed_classes;  // no transitions out
  bool irreducible = false;
};

ClassStructure communicating_classes(const FiniteChain& chain);
/// Period of the (single) closed class.
std::size_t period(const FiniteChain& chain);

/// pi P = pi, sum pi = 1. Requires a single closed class (transient states
/// get mass zero); otherwise throws naming the closed classes.
std::vector<double> stationary(const FiniteChain& chain);
/// || pi P - pi ||_1
double stationary_residual(const FiniteChain& chain, const std::vector<double>& pi);

/// delta_x P^n.
std::vector<double> distribution_after(const FiniteChain& chain, std::size_t x, std::int64_t n);
/// Row-major P^n.
std::vector<double> matrix_power(const FiniteChain& chain, std::int64_t n);

/// sum_y f(y) |P^n(x,y) - pi(y)|; empty f means f = 1.
double f_norm_distance(const FiniteChain& chain, std::size_t x, std::int64_t n,
                       const std::vector<double>& f = {});
/// The same distance for n = 0..n_max.
std::vector<double> f_norm_curve(const FiniteChain& chain, std::size_t x, std::int64_t n_max,
                                 const std::vector<double>& f = {});

/// Second-largest eigenvalue modulus. Throws for periodic or reducible chains.
double slem(const FiniteChain& chain);

struct HittingSum {
  double value = 0.0;       // sum over k <= horizon
  double tail_bound = 0.0;  // bound on the remaining terms
  std::int64_t horizon = 0;
};

/// E_x[ sum_{k=0}^{T_B - 1} r(k) f(x_k) ], T_B = min{t >= 1 : x_t in B},
/// by dynamic programming over the mass not yet absorbed in B. Throws when
/// some state reachable from x before B cannot reach B.
HittingSum expected_hitting_sum(const FiniteChain& chain, std::size_t x, const StateMask& B,
                                const std::vector<double>& f, const RateFunction& r,
                                std::int64_t horizon);

struct GeometricMoment {
  bool divergent = false;
  double spectral_radius = 0.0;  // of kappa * P restricted to the complement of C
  std::vector<double> z;         // E_x[kappa^{T_C}], empty when divergent
};

GeometricMoment exact_geometric_moment(const FiniteChain& chain, const StateMask& C, double kappa);

/// Spectral radius of P restricted to the complement of C.
double restricted_spectral_radius(const FiniteChain& chain, const StateMask& C);

struct MinorizationWitness {
  StateMask C;
  int n0 = 1;
  double epsilon = 0.0;
  std::vector<double> nu;
};

/// Columnwise minima of P^{n0} over C. Throws when they are all zero.
MinorizationWitness find_minorization(const FiniteChain& chain, const StateMask& C, int n0);
/// Checks P^{n0}(x,y) >= epsilon nu(y) - tol for x in C.
bool verify_minorization(const FiniteChain& chain, const MinorizationWitness& w, double tol = 1e-12);

/// Minorization of the sampled kernel sum_n a(n) P^n over C.
struct PetiteWitness {
  std::vector<double> a;
  double epsilon = 0.0;
  std::vector<double> nu;
};
PetiteWitness find_petite(const FiniteChain& chain, const StateMask& C, const std::vector<double>& a);

struct UnivariateDrift {
  bool success = false;
  double lambda = 0.0;
  double b = 0.0;
  std::size_t argmax = 0;  // state attaining lambda
  std::vector<double> PV;
};

/// PV <= lambda V + b 1_C with lambda = max_{x not in C} PV/V.
UnivariateDrift check_univariate_drift(const FiniteChain& chain, const std::vector<double>& V,
                                       const StateMask& C);

}  // namespace driftlab
