#pragma once

// Statistical and exact checks of random-time drift criteria.
//
// Every pointwise inequality is checked on a grid of start states. Means use
// one-sided empirical-Bernstein bounds at the requested confidence per
// clause, Bonferroni-corrected across grid points, with heavy-tail
// truncation (see TailAwareMean). When the kernel is a finite chain and the
// policy is deterministic, exact matrix arithmetic replaces sampling.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "driftlab/chain_core.hpp"
#include "driftlab/rate_functions.hpp"
#include "driftlab/stats.hpp"

namespace driftlab {

struct DriftSpec {
  StateFunction V;       // Lyapunov function
  StateFunction f;       // moment weight (defaults to 1)
  StateFunction delta;   // drift gap (defaults to 1)
  StateSet C;            // small-set candidate
  double lambda = 0.5;
  double b = 0.0;
  double epsilon = 0.0;
  std::optional<double> V_bound_on_C;
  /// Event-triggered policies whose event sets all contain C; together with
  /// independent policies this lifts the "V bounded on C" requirement.
  bool C_inside_events = false;
  std::string V_label = "V";
  std::string f_label = "1";
  std::string delta_label = "1";
  std::string C_label = "C";
};

enum class Verdict { pass, fail, inconclusive };
std::string to_string(Verdict v);
/// fail dominates inconclusive dominates pass.
Verdict combine(Verdict a, Verdict b);

struct Budget {
  enum class Mode { automatic, exact, sampled };
  std::size_t n_samples = 10000;      // per grid point
  std::int64_t horizon = 100000;      // max steps simulated per block
  double confidence = 0.95;           // per clause, before Bonferroni
  std::uint64_t seed = 1;
  unsigned threads = 0;
  int blocks = 1;                     // stopping blocks sampled per replicate
  Mode mode = Mode::automatic;
  double max_censor_rate = 1e-3;
  std::size_t chunk = 65536;          // replicates per work item
};

struct Clause {
  std::string name;
  std::string inequality;
  std::optional<std::size_t> grid_index;
  std::optional<int> block;
  double estimate = 0.0;
  double ucb = 0.0;
  double lcb = 0.0;
  double bound = 0.0;
  bool exact = false;
  std::size_t n = 0;
  double censor_rate = 0.0;
  Verdict verdict = Verdict::inconclusive;
  std::string note;
};

struct DriftCertificate {
  std::string theorem;
  Verdict verdict = Verdict::inconclusive;
  std::string evidence;  // "exact" or "statistical evidence"
  std::string chain_id;
  std::string policy;
  std::map<std::string, double> constants;
  std::vector<Clause> clauses;
  std::vector<State> grid;
  std::uint64_t seed = 0;
  std::vector<std::size_t> sample_sizes;
  std::vector<double> censor_rates;
  std::string conclusion;
  std::vector<std::string> caveats;
};

/// Certificate JSON. The timestamp lives under "metadata" and is only
/// written when `timestamp` is non-empty, so reports are byte-identical
/// across reruns otherwise.
nlohmann::json to_json(const DriftCertificate& c, const std::string& timestamp = {});

// --- sampled drift -------------------------------------------------------

struct PointEstimate {
  State x;
  bool in_C = false;
  bool exact = false;
  std::size_t n = 0;
  double censor_rate = 0.0;
  MeanBound value;  // of V(x_{T_1}) given x_0 = x
};

struct SampledDrift {
  std::vector<PointEstimate> points;
  double lambda_hat = 0.0;  // max over x not in C of UCB / V(x)
  double b_hat = 0.0;       // max over x in C of (UCB - lambda_hat V(x))^+
  std::optional<std::size_t> lambda_argmax;
  bool censored = false;    // some grid point exceeded the censor budget
  bool heavy_tail = false;
  bool exact = false;
};

SampledDrift estimate_sampled_drift(const TransitionKernel& kernel, const StoppingPolicy& policy,
                                    const DriftSpec& spec, const std::vector<State>& grid,
                                    const Budget& budget);

// --- checkers -----------------------------------------------------------

/// Sampled Foster pair: E[V(x_{T_1})] <= V - delta + b 1_C and
/// E[sum_{k<T_1} f(x_k)] <= delta.
DriftCertificate check_thm5(const TransitionKernel& kernel, const StoppingPolicy& policy,
                            const DriftSpec& spec, const std::vector<State>& grid,
                            const Budget& budget);

/// Subgeometric random-time drift: drift clause, M = sup E[sum_{j<dT} r(j)],
/// and sup E[r(dT)] <= 1/lambda over `budget.blocks` blocks. r must pass the
/// subgeometric class check first.
DriftCertificate check_thm8(const TransitionKernel& kernel, const StoppingPolicy& policy,
                            const DriftSpec& spec, const RateFunction& r,
                            const std::vector<State>& grid, const Budget& budget);

/// State-dependent deterministic times: sum_{k=0}^{n(x)} r(k) <= M and
/// r(n(x)) <= 1/lambda over the sampled domain. Exact.
DriftCertificate check_corollary9(const StoppingPolicy::StepCount& n_func, const RateFunction& r,
                                  double lambda, const std::vector<State>& domain,
                                  std::int64_t n_cap = 1000000);

/// Independent stopping times with E[R(dT)] <= V and R(t)/t non-increasing.
/// Throws std::invalid_argument unless the policy is independent.
DriftCertificate check_connor_fort(const TransitionKernel& kernel, const StoppingPolicy& policy,
                                   const DriftSpec& spec,
                                   const std::function<double(double)>& R,
                                   const std::string& R_label, const std::vector<State>& grid,
                                   const Budget& budget);

struct GeoRandomOptions {
  double a_test = 2.0;
  std::optional<double> beta;        // fixed beta; otherwise chosen from a grid
  std::uint64_t min_count = 1000;    // pmf cells used for fitting B and beta
};

/// Geometric ergodicity from random-time drift plus geometric inter-time
/// tails. The pmf bound is fitted as P(dT = k) <= B beta^{k-1}; the
/// literal-form constant B/beta and the series condition are reported too.
DriftCertificate check_geo_random(const TransitionKernel& kernel, const StoppingPolicy& policy,
                                  const DriftSpec& spec, const std::vector<State>& grid,
                                  const Budget& budget, const GeoRandomOptions& options = {});

/// PV + phi(V) <= V + b 1_C with one-step sampling. phi must be concave and
/// non-decreasing on a log grid of [1, 1e6]; otherwise std::invalid_argument
/// is thrown before any sampling.
DriftCertificate check_douc(const TransitionKernel& kernel, const DriftSpec& spec,
                            const std::function<double(double)>& phi, const std::string& phi_label,
                            const std::vector<State>& grid, const Budget& budget);

/// Midpoint concavity and monotonicity of phi on `points` log-spaced values in [lo, hi].
bool concave_on_log_grid(const std::function<double(double)>& phi, double lo, double hi,
                         int points = 200);

struct JensenRate {
  double s = 1.0;  // exponent with (M*)^{1/s} <= 1/lambda
  RateFunction rate;
};

/// Given sup_k E[r(dT)] <= M*, the rate r^{1/s} with s = max(1, ln M*/ln(1/lambda)).
JensenRate jensen_rate(const RateFunction& r, double M_star, double lambda);

}  // namespace driftlab
