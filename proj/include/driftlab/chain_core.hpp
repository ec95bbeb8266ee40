#pragma once

// Transition kernels, stopping-time policies and trajectory simulation.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "driftlab/finite_chain.hpp"
#include "driftlab/rng.hpp"
#include "driftlab/state.hpp"

namespace driftlab {

struct StateSpace {
  enum class Kind { finite, continuous };
  Kind kind = Kind::finite;
  std::size_t n_states = 0;  // finite only
  std::size_t dim = 1;       // coordinates per state
};

class TransitionKernel {
 public:
  virtual ~TransitionKernel() = default;
  virtual std::string id() const = 0;
  virtual StateSpace space() const = 0;
  /// Draws x_{t+1} given x_t = x. Must be a pure function of (x, stream
  /// position).
  virtual State sample(const State& x, RandomStream& rng) const = 0;
  /// Exact rows when the kernel is a finite chain.
  virtual const FiniteChain* finite() const { return nullptr; }
  virtual bool valid_state(const State& x) const;
};

/// Finite chain sampled by inversion of the cumulative row (one uniform per
/// step).
class FiniteKernel final : public TransitionKernel {
 public:
  explicit FiniteKernel(FiniteChain chain);
  std::string id() const override { return chain_.id(); }
  StateSpace space() const override;
  State sample(const State& x, RandomStream& rng) const override;
  const FiniteChain* finite() const override { return &chain_; }
  bool valid_state(const State& x) const override;

  std::size_t sample_index(std::size_t i, double u) const;

 private:
  FiniteChain chain_;
  std::vector<double> cdf_;
  std::vector<std::size_t> last_positive_;
};

/// Kernel given by a sampler callable.
class FunctionKernel final : public TransitionKernel {
 public:
  using Sampler = std::function<State(const State&, RandomStream&)>;
  FunctionKernel(std::string id, std::size_t dim, Sampler sampler);
  std::string id() const override { return id_; }
  StateSpace space() const override;
  State sample(const State& x, RandomStream& rng) const override { return sampler_(x, rng); }

 private:
  std::string id_;
  std::size_t dim_;
  Sampler sampler_;
};

/// Law of inter-stopping times for the independent policy kind.
struct RenewalLaw {
  enum class Kind { geometric, fixed, pmf };
  Kind kind = Kind::fixed;
  double p = 1.0;                // geometric success probability
  std::int64_t value = 1;        // fixed inter-time
  std::vector<double> pmf;       // pmf[k-1] = P(gap = k), k >= 1

  static RenewalLaw geometric(double p);
  static RenewalLaw fixed(std::int64_t n);
  static RenewalLaw from_pmf(std::vector<double> pmf);

  std::int64_t sample(RandomStream& rng) const;
  double mean() const;
};

class StoppingPolicy {
 public:
  enum class Kind { deterministic, independent, event_triggered };
  using StepCount = std::function<std::int64_t(const State&)>;
  /// E_n for n >= 1.
  using EventSets = std::function<StateSet(std::int64_t n)>;

  /// T_{k+1} = T_k + n(x_{T_k}); n must be >= 1.
  static StoppingPolicy deterministic(StepCount n, std::string label = "n(x)");
  static StoppingPolicy every(std::int64_t n);
  /// Inter-times drawn i.i.d. from `law`, independent of the chain.
  static StoppingPolicy independent(RenewalLaw law);
  /// T_{k+1} = min{t > T_k : x_t in E_{k+1}}.
  static StoppingPolicy event_triggered(EventSets sets, std::string label = "E_n");
  static StoppingPolicy event_triggered(StateSet fixed_set, std::string label = "E");

  Kind kind() const { return kind_; }
  const std::string& label() const { return label_; }
  const StepCount& step_count() const { return n_; }
  const RenewalLaw& renewal() const { return law_; }
  const EventSets& event_sets() const { return sets_; }

 private:
  Kind kind_ = Kind::deterministic;
  std::string label_;
  StepCount n_;
  RenewalLaw law_;
  EventSets sets_;
};

std::string to_string(StoppingPolicy::Kind k);

/// Incremental generator of stopping times along a path. Feed states in
/// time order with observe(); it reports whether each index is a stopping
/// time. Renewal draws come from the stream passed at construction.
class StoppingClock {
 public:
  StoppingClock(const StoppingPolicy& policy, RandomStream renewal_rng);

  bool observe(std::int64_t t, const State& x);
  std::int64_t count() const { return k_; }   // stopping times seen so far
  std::int64_t last() const { return last_; }

 private:
  const StoppingPolicy& policy_;
  RandomStream rng_;
  std::int64_t k_ = 0;
  std::int64_t last_ = -1;
  std::int64_t next_ = 0;
  StateSet current_set_;
};

/// Stream tag for renewal draws of the independent policy.
inline constexpr std::uint64_t kRenewalStreamTag = 0x72656e6577616cULL;

struct Trajectory {
  std::vector<State> states;
  std::vector<std::int64_t> stopping_times;
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;
  std::string kernel_id;
  /// The last inter-stopping block is cut off by the horizon.
  bool truncated = false;
};

/// Path x_0..x_horizon drawn from RandomStream(seed, stream_id).
Trajectory simulate(const TransitionKernel& kernel, const State& x0, std::int64_t horizon,
                    std::uint64_t seed, std::uint64_t stream_id = 0);

/// Fills stopping_times and the truncation flag. Renewal draws use
/// RandomStream(seed, traj.stream_id).substream(kRenewalStreamTag).
Trajectory annotate_stopping_times(Trajectory traj, const StoppingPolicy& policy,
                                   std::uint64_t seed);

/// min{t >= 1 : x_t in A}.
std::optional<std::int64_t> hitting_time(const Trajectory& traj, const StateSet& A);

/// x_{T_0}, x_{T_1}, ...
std::vector<State> sampled_path(const Trajectory& traj);

/// min{n > 0 : x_{T_n} in B} on a sampled path.
std::optional<std::int64_t> sampled_hitting_time(const std::vector<State>& sampled,
                                                 const StateSet& B);

/// Trajectories for stream ids 0..count-1, in stream order regardless of
/// the worker count.
std::vector<Trajectory> simulate_batch(const TransitionKernel& kernel, const State& x0,
                                       std::int64_t horizon, std::uint64_t seed,
                                       std::size_t count, unsigned threads = 0);

/// CSV with columns t, s0..s{d-1}, is_stopping_time.
void write_trajectory_csv(std::ostream& out, const Trajectory& traj);

}  // namespace driftlab
