#pragma once

// Scalar linear plant stabilized over an i.i.d. erasure channel with an
// adaptive ("zoom") uniform quantizer.
//
//   x_{t+1} = a x_t + b u_t + w_t,   u_t = -(a/b) xhat_t,
//   xhat_t  = Y_t Q_K^{D_t}(x_t),    D_{t+1} = D_t Qbar(D_t, |h_t|, Y_t),
//
// with Y_t ~ Bernoulli(p) the channel outcome and h_t = x_t / (D_t K/2).
// The bin size is kept as D_0 alpha^{n_alpha} (|a|+delta)^{n_zoom}, so the
// one-step ratio is always exactly one of alpha, 1, |a|+delta.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "driftlab/chain_core.hpp"
#include "driftlab/drift_verify.hpp"
#include "driftlab/rng.hpp"

namespace driftlab::netctl {

struct InitialLaw {
  enum class Kind { point, normal };
  Kind kind = Kind::point;
  double mean = 0.0;
  double std = 0.0;
};

struct PlantParams {
  double a = 2.0;
  double b = 1.0;
  double noise_std = 0.1;
  InitialLaw x0;

  /// Throws unless |a| >= 1, b != 0 and noise_std >= 0.
  void validate() const;
};

struct CoderParams {
  int K = 3;
  double Delta0 = 1.0;
  double alpha = 0.7;
  double delta_zoom = 0.1;
  double L = 1.0;
  double p = 0.9;
  std::optional<double> F;  // small-set threshold, default 10 L

  double zoom_out(double a) const;  // |a| + delta_zoom
  double small_set_threshold() const { return F ? *F : 10.0 * L; }
  /// Throws unless |a| 2^{-R'} < alpha < 1, alpha (|a|+delta)^{1/p-1} < 1
  /// and the basic ranges hold.
  void validate(const PlantParams& plant) const;
};

struct RateVariables {
  double R = 0.0;       // log2(K + 1)
  double Rprime = 0.0;  // log2(K)
};

RateVariables rate_variables(int K);

/// Uniform K-bin quantizer on [-K D/2, K D/2]; 0 outside (overflow).
double quantize(double x, int K, double Delta);
/// 0-based bin, or -1 on overflow.
int quantize_bin(double x, int K, double Delta);

/// Bin-size multiplier: |a|+delta on overflow (|h| > 1) or erasure, alpha on
/// a granular success with Delta > L, 1 on a granular success otherwise.
double qbar(double Delta, double h_abs, int success, const CoderParams& coder, double a);

/// a^2 (1 - p + p / (2^R - 1)^2).
double stability_margin(double a, double p, double R);

/// Supremum of admissible epsilon: 1 - p alpha^2 / (1 - (1-p)(|a|+delta)^2).
/// Throws std::domain_error when (1-p)(|a|+delta)^2 >= 1.
double epsilon_budget(const CoderParams& coder, double a);

struct NetState {
  double x = 0.0;
  double delta0 = 1.0;
  std::int64_t n_alpha = 0;
  std::int64_t n_zoom = 0;
  std::int64_t t = 0;
  bool after_success = false;  // previous step was a granular success

  double Delta(const CoderParams& coder, double a) const;
};

/// Materialized bin size for the given exponent counts.
double bin_size(double delta0, std::int64_t n_alpha, std::int64_t n_zoom, double alpha, double zoom_out);

NetState initial_state(const PlantParams& plant, const CoderParams& coder, RandomStream& rng);

struct Event {
  std::int64_t t = 0;
  double x = 0.0;
  double Delta = 0.0;
  double h = 0.0;
  int upsilon = 0;
  bool overflow = false;
  double xhat = 0.0;
  double u = 0.0;
  int symbol = 0;    // sent: 1..K for bins, K+1 for overflow
  int received = 0;  // symbol, or 0 for an erasure
  int factor = 0;    // 0: unchanged, 1: alpha, 2: zoom out
  // What the receiver deduces from `received` alone.
  std::optional<int> rx_upsilon;
  std::optional<bool> rx_overflow;
};

/// One closed-loop step. Draws Y_t ~ Bernoulli(p), then w_t.
NetState step(const NetState& s, const PlantParams& plant, const CoderParams& coder, RandomStream& rng,
              Event* event = nullptr);

struct StopTimes {
  std::vector<std::int64_t> times;  // T_0 = 0, then granular successes
  bool truncated = false;           // the run continues past the last one
};

StopTimes granular_success_times(const std::vector<Event>& events);

/// Trajectory of `steps` steps with the per-step events.
std::vector<Event> run(NetState s, const PlantParams& plant, const CoderParams& coder, std::int64_t steps,
                       RandomStream& rng, NetState* final_state = nullptr);

void write_events_csv(std::ostream& out, const std::vector<Event>& events);

// --- Markov kernel over (x, Delta) ------------------------------------------

// State layout: {x, Delta, n_alpha, n_zoom, delta0, after_success}.
State to_state(const NetState& s, const CoderParams& coder, double a);
NetState from_state(const State& s);

class NetKernel final : public TransitionKernel {
 public:
  NetKernel(PlantParams plant, CoderParams coder);
  std::string id() const override;
  StateSpace space() const override { return {StateSpace::Kind::continuous, 0, 6}; }
  State sample(const State& x, RandomStream& rng) const override;
  bool valid_state(const State& x) const override;

  const PlantParams& plant() const { return plant_; }
  const CoderParams& coder() const { return coder_; }

 private:
  PlantParams plant_;
  CoderParams coder_;
};

NetKernel as_kernel(const PlantParams& plant, const CoderParams& coder);
/// C = {Delta <= F}.
StateSet small_set(const CoderParams& coder);
/// Samples the chain right after each granular success.
StoppingPolicy success_policy();
/// State with the given x and Delta = delta0.
State grid_state(double x, double Delta);

// --- batches ------------------------------------------------------------------

struct BatchOptions {
  std::size_t n_traj = 2000;
  std::int64_t steps = 2000;
  std::uint64_t seed = 1;
  unsigned threads = 0;
  std::vector<std::int64_t> record_at;  // times at which moments are kept
  std::size_t lanes = 256;              // trajectories per work item
};

struct MomentSnapshot {
  std::int64_t t = 0;
  double mean_x2 = 0.0;
  double mean_delta2 = 0.0;
  double max_delta = 0.0;
};

struct BatchResult {
  std::vector<MomentSnapshot> snapshots;
  std::vector<NetState> final_states;
};

/// Simulates n_traj trajectories with the vectorized step. Trajectory i uses
/// RandomStream(seed, i) exactly as `step` would, so results match the
/// scalar path bit for bit.
BatchResult simulate_batch(const PlantParams& plant, const CoderParams& coder, const BatchOptions& options);

// --- inter-time tails -----------------------------------------------------------

struct InterTime {
  double Delta = 0.0;  // bin size at T_i
  std::int64_t gap = 0;
};

/// Completed gaps T_{i+1} - T_i of one run, paired with Delta_{T_i}.
std::vector<InterTime> inter_times(const std::vector<Event>& events);

/// Runs that start at `delta0` and stop at the first granular success whose
/// bin size is below `stop_below`; no gap is censored.
std::vector<InterTime> large_delta_inter_times(const PlantParams& plant, const CoderParams& coder, double delta0,
                                               double stop_below, std::size_t n_runs, std::uint64_t seed,
                                               unsigned threads = 0);

struct TailRow {
  int k = 0;
  double tail = 0.0;       // empirical P(dT >= k)
  double reference = 0.0;  // (1-p)^{k-1}
  double sigma = 0.0;      // binomial sd at the reference value
  double ratio = 0.0;
  bool lower_ok = true;
};

struct StopBoundGroup {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t n = 0;
  std::vector<TailRow> rows;
  bool lower_ok = true;
  std::optional<bool> upper_ok;  // largest group only
};

struct StopBoundReport {
  std::vector<StopBoundGroup> groups;
  bool lower_ok = true;
  bool upper_ok = false;
  bool trend_ok = false;  // ratios at k = 2 approach 1 across the grid
  Verdict verdict = Verdict::inconclusive;
  std::string note;
};

struct StopBoundOptions {
  int k_max = 10;
  int k_upper = 5;
  double upper_ratio = 1.2;
  std::size_t min_group = 1000;
};

/// Groups gaps by Delta_{T_i} on [grid[j], grid[j+1]) (last group open) and
/// tests the lower tail bound in every group plus the ratio window in the
/// largest group.
StopBoundReport verify_stopbound(const std::vector<InterTime>& samples, double p, const std::vector<double>& grid,
                                 const StopBoundOptions& options = {});

nlohmann::json to_json(const StopBoundReport& r);

}  // namespace driftlab::netctl
