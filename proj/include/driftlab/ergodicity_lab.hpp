#pragma once

// Empirical convergence rates: splitting couplings, histogram distances,
// decay-curve fits and ergodic-average checks.
//
// All distances follow the f-norm convention with f = 1, i.e. the sum of
// absolute differences. The coupling inequality bounds the largest event
// difference by P(X != Y); in this convention that becomes 2 P(X != Y),
// which is what `bound` reports.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "driftlab/chain_core.hpp"
#include "driftlab/finite_oracle.hpp"
#include "driftlab/stats.hpp"

namespace driftlab {

// --- coupling -------------------------------------------------------------

using IndexSampler = std::function<std::size_t(RandomStream&)>;

/// Draws from the stationary distribution of `chain`.
IndexSampler stationary_sampler(const FiniteChain& chain);
IndexSampler point_sampler(std::size_t y);

struct CouplingOptions {
  std::int64_t n_max = 50;
  std::size_t n_pairs = 100000;
  std::uint64_t seed = 1;
  unsigned threads = 0;
  double confidence = 0.95;
};

struct CouplingRun {
  MinorizationWitness witness;
  std::uint64_t seed = 0;
  std::vector<std::int64_t> coupling_times;  // -1 when not merged by n_max
  std::vector<double> p_differ;              // P(x_n != y_n), n = 0..n_max
  std::vector<double> bound;                 // 2 P(x_n != y_n)
  std::vector<double> sigma;                 // Agresti-Coull standard error of bound
  std::vector<Interval> ci;                  // Wilson interval on bound
  std::size_t censored = 0;
  double censor_rate = 0.0;
};

/// Both chains move marginally by P. When both sit in C a shared coin with
/// success probability epsilon regenerates them together from nu; otherwise
/// each draws from its residual row (P(x,.) - epsilon nu)/(1 - epsilon).
/// Outside C they move independently. Once equal they move together.
/// Only one-step witnesses are supported.
CouplingRun coupled_tv_bound(const FiniteChain& chain, const MinorizationWitness& witness,
                             std::size_t x0, const IndexSampler& y0_sampler,
                             const CouplingOptions& options = {});

// --- histogram distances -------------------------------------------------------

struct Partition {
  std::size_t cells = 0;
  std::function<std::size_t(const State&)> cell;
  std::string label;
};

Partition singleton_partition(std::size_t n);
/// bins x bins cells over (|s[dim_a]|, |s[dim_b]|), log-spaced between lo
/// and hi in each coordinate; values outside fold into the edge bins.
Partition log_grid_partition(std::size_t dim_a, double lo_a, double hi_a, std::size_t dim_b,
                             double lo_b, double hi_b, std::size_t bins);

struct ReferenceOptions {
  std::int64_t burn_in = 10000;
  std::int64_t length = 1000000;
  std::int64_t thin = 1;
  std::uint64_t seed = 1;
};

/// Long-run occupation frequencies of the cells after burn-in.
std::vector<double> reference_histogram(const TransitionKernel& kernel, const State& x0,
                                        const Partition& partition, const ReferenceOptions& options);

struct DistanceOptions {
  std::size_t n_samples = 100000;
  std::size_t bootstrap = 200;
  double confidence = 0.95;
  std::uint64_t seed = 1;
  unsigned threads = 0;
};

struct DistanceEstimate {
  std::int64_t n = 0;
  double distance = 0.0;  // sum_c |p_n(c) - ref(c)|
  double sigma = 0.0;     // bootstrap standard deviation
  Interval ci;
  bool undersampled = false;  // some cell expects fewer than 5 samples
  std::string note;
};

/// Histogram distance between the law of x_n (from x0) and `reference`.
DistanceEstimate empirical_distance(const TransitionKernel& kernel, const State& x0, std::int64_t n,
                                    const Partition& partition, const std::vector<double>& reference,
                                    const DistanceOptions& options = {});

// --- decay curves ---------------------------------------------------------------

struct RateFit {
  std::string family;  // "geometric", "polynomial" or "inconclusive"
  std::map<std::string, double> params;
  double r2 = 0.0;
  double geometric_rate = 0.0;
  double geometric_r2 = 0.0;
  double polynomial_exponent = 0.0;
  double polynomial_r2 = 0.0;
  std::size_t points_used = 0;
  std::string note;
};

struct DecayCurve {
  std::vector<std::int64_t> n;
  std::vector<double> distance;
  std::vector<double> ci_lo;
  std::vector<double> ci_hi;
  std::vector<bool> exact;
  std::optional<RateFit> fit;

  void push(std::int64_t step, double d, double lo, double hi, bool is_exact);
};

DecayCurve exact_decay_curve(const FiniteChain& chain, std::size_t x, std::int64_t n_max);
DecayCurve coupling_curve(const CouplingRun& run);

/// Least squares of log d_n against n (geometric) and log n (polynomial) over
/// the later half of the usable points (at least 8). A point is usable when
/// n >= 1, d_n > 1e-13 and its interval stays above 0.
RateFit fit_rate(const DecayCurve& curve);

/// Columns n,distance,ci_lo,ci_hi,exact_flag.
void write_decay_csv(std::ostream& out, const DecayCurve& curve);
nlohmann::json to_json(const RateFit& fit);

// --- ergodic averages -------------------------------------------------------------

struct LlnOptions {
  std::int64_t horizon = 10000;
  std::size_t n_reps = 64;
  std::uint64_t seed = 1;
  unsigned threads = 0;
  StateFunction f;             // weight for the sup |g|/f report
  std::vector<State> probes;   // states where sup |g|/f is evaluated
};

struct LlnReport {
  std::vector<double> averages;       // per replicate at N = horizon
  std::vector<double> half_averages;  // per replicate at N = horizon/2
  double mean = 0.0;
  double half_mean = 0.0;
  double dispersion = 0.0;        // cross-replicate sd at N = horizon
  double half_dispersion = 0.0;   // at N = horizon/2
  Interval ci;                    // for the mean at N = horizon
  std::optional<double> sup_g_over_f;
  std::size_t outliers = 0;       // replicates outside mean +- 4 dispersion
  bool pass = false;
  std::string note;
};

LlnReport lln_check(const TransitionKernel& kernel, const StateFunction& g, const State& x0,
                    const LlnOptions& options = {});

}  // namespace driftlab
