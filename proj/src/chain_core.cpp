#include "driftlab/chain_core.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include <fmt/core.h>
#include <fmt/ostream.h>

#include "driftlab/parallel.hpp"

namespace driftlab {

namespace {
std::atomic<unsigned> g_default_threads{0};
}

unsigned default_threads() {
  const unsigned n = g_default_threads.load();
  if (n) return n;
  return std::max(1u, std::thread::hardware_concurrency());
}

void set_default_threads(unsigned n) { g_default_threads.store(n); }

bool TransitionKernel::valid_state(const State& x) const {
  const StateSpace s = space();
  if (x.dim != s.dim) return false;
  for (std::size_t i = 0; i < x.dim; ++i)
    if (!std::isfinite(x[i])) return false;
  if (s.kind == StateSpace::Kind::finite) {
    return x[0] >= 0.0 && x[0] == std::floor(x[0]) && x.as_index() < s.n_states;
  }
  return true;
}

FiniteKernel::FiniteKernel(FiniteChain chain) : chain_(std::move(chain)) {
  const std::size_t n = chain_.size();
  cdf_.resize(n * n);
  last_positive_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      acc += chain_(i, j);
      cdf_[i * n + j] = acc;
      if (chain_(i, j) > 0.0) last_positive_[i] = j;
    }
  }
}

StateSpace FiniteKernel::space() const {
  return {StateSpace::Kind::finite, chain_.size(), 1};
}

bool FiniteKernel::valid_state(const State& x) const {
  return x.dim == 1 && x[0] >= 0.0 && x[0] == std::floor(x[0]) && x.as_index() < chain_.size();
}

std::size_t FiniteKernel::sample_index(std::size_t i, double u) const {
  const std::size_t n = chain_.size();
  const double* row = cdf_.data() + i * n;
  // First j with cdf > u skips zero-probability states; u beyond the
  // rounded row total falls back to the last state with positive mass.
  const double* it = std::upper_bound(row, row + n, u);
  if (it == row + n) return last_positive_[i];
  return static_cast<std::size_t>(it - row);
}

State FiniteKernel::sample(const State& x, RandomStream& rng) const {
  return State::index(sample_index(x.as_index(), rng.uniform()));
}

FunctionKernel::FunctionKernel(std::string id, std::size_t dim, Sampler sampler)
    : id_(std::move(id)), dim_(dim), sampler_(std::move(sampler)) {
  if (dim_ == 0 || dim_ > State::max_dim) throw std::invalid_argument("FunctionKernel: bad dimension");
  if (!sampler_) throw std::invalid_argument("FunctionKernel: empty sampler");
}

StateSpace FunctionKernel::space() const {
  return {StateSpace::Kind::continuous, 0, dim_};
}

RenewalLaw RenewalLaw::geometric(double p) {
  if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("geometric renewal law needs p in (0,1]");
  RenewalLaw l;
  l.kind = Kind::geometric;
  l.p = p;
  return l;
}

RenewalLaw RenewalLaw::fixed(std::int64_t n) {
  if (n < 1) throw std::invalid_argument("stopping times must strictly increase: inter-time >= 1");
  RenewalLaw l;
  l.kind = Kind::fixed;
  l.value = n;
  return l;
}

RenewalLaw RenewalLaw::from_pmf(std::vector<double> pmf) {
  double s = 0.0;
  for (double v : pmf) {
    if (!(v >= 0.0)) throw std::invalid_argument("renewal pmf entries must be >= 0");
    s += v;
  }
  if (pmf.empty() || std::fabs(s - 1.0) > 1e-12) throw std::invalid_argument("renewal pmf must sum to 1");
  RenewalLaw l;
  l.kind = Kind::pmf;
  l.pmf = std::move(pmf);
  return l;
}

std::int64_t RenewalLaw::sample(RandomStream& rng) const {
  switch (kind) {
    case Kind::geometric: return p >= 1.0 ? 1 : rng.geometric(p);
    case Kind::fixed: return value;
    case Kind::pmf: {
      const double u = rng.uniform();
      double acc = 0.0;
      for (std::size_t k = 0; k < pmf.size(); ++k) {
        acc += pmf[k];
        if (u < acc) return static_cast<std::int64_t>(k) + 1;
      }
      for (std::size_t k = pmf.size(); k-- > 0;)
        if (pmf[k] > 0.0) return static_cast<std::int64_t>(k) + 1;
      return 1;
    }
  }
  return 1;
}

double RenewalLaw::mean() const {
  switch (kind) {
    case Kind::geometric: return 1.0 / p;
    case Kind::fixed: return static_cast<double>(value);
    case Kind::pmf: {
      double m = 0.0;
      for (std::size_t k = 0; k < pmf.size(); ++k) m += static_cast<double>(k + 1) * pmf[k];
      return m;
    }
  }
  return 0.0;
}

StoppingPolicy StoppingPolicy::deterministic(StepCount n, std::string label) {
  if (!n) throw std::invalid_argument("deterministic policy needs a step-count function");
  StoppingPolicy p;
  p.kind_ = Kind::deterministic;
  p.n_ = std::move(n);
  p.label_ = std::move(label);
  return p;
}

StoppingPolicy StoppingPolicy::every(std::int64_t n) {
  if (n < 1) throw std::invalid_argument("stopping times must strictly increase: n(x) >= 1");
  return deterministic([n](const State&) { return n; }, fmt::format("n(x)={}", n));
}

StoppingPolicy StoppingPolicy::independent(RenewalLaw law) {
  StoppingPolicy p;
  p.kind_ = Kind::independent;
  p.law_ = std::move(law);
  switch (p.law_.kind) {
    case RenewalLaw::Kind::geometric: p.label_ = fmt::format("geometric({})", p.law_.p); break;
    case RenewalLaw::Kind::fixed: p.label_ = fmt::format("fixed({})", p.law_.value); break;
    case RenewalLaw::Kind::pmf: p.label_ = fmt::format("pmf[{}]", p.law_.pmf.size()); break;
  }
  return p;
}

StoppingPolicy StoppingPolicy::event_triggered(EventSets sets, std::string label) {
  if (!sets) throw std::invalid_argument("event-triggered policy needs event sets");
  StoppingPolicy p;
  p.kind_ = Kind::event_triggered;
  p.sets_ = std::move(sets);
  p.label_ = std::move(label);
  return p;
}

StoppingPolicy StoppingPolicy::event_triggered(StateSet fixed_set, std::string label) {
  if (!fixed_set) throw std::invalid_argument("event-triggered policy needs an event set");
  return event_triggered([s = std::move(fixed_set)](std::int64_t) { return s; }, std::move(label));
}

std::string to_string(StoppingPolicy::Kind k) {
  switch (k) {
    case StoppingPolicy::Kind::deterministic: return "deterministic";
    case StoppingPolicy::Kind::independent: return "independent";
    case StoppingPolicy::Kind::event_triggered: return "event_triggered";
  }
  return "unknown";
}

StoppingClock::StoppingClock(const StoppingPolicy& policy, RandomStream renewal_rng)
    : policy_(policy), rng_(renewal_rng) {}

bool StoppingClock::observe(std::int64_t t, const State& x) {
  bool stop = false;
  if (t == 0) {
    stop = true;
  } else if (policy_.kind() == StoppingPolicy::Kind::event_triggered) {
    stop = current_set_(x);
  } else {
    stop = t == next_;
  }
  if (!stop) return false;
  if (t <= last_) throw std::logic_error("StoppingClock: time went backwards");
  last_ = t;
  if (t > 0) ++k_;
  switch (policy_.kind()) {
    case StoppingPolicy::Kind::deterministic: {
      const std::int64_t n = policy_.step_count()(x);
      if (n < 1) throw std::invalid_argument(fmt::format("stopping times must strictly increase: n(x)={}", n));
      next_ = t + n;
      break;
    }
    case StoppingPolicy::Kind::independent:
      next_ = t + policy_.renewal().sample(rng_);
      break;
    case StoppingPolicy::Kind::event_triggered:
      current_set_ = policy_.event_sets()(k_ + 1);
      break;
  }
  return true;
}

Trajectory simulate(const TransitionKernel& kernel, const State& x0, std::int64_t horizon,
                    std::uint64_t seed, std::uint64_t stream_id) {
  if (horizon < 1) throw std::invalid_argument("simulate: horizon must be >= 1");
  if (!kernel.valid_state(x0)) throw std::invalid_argument("simulate: initial state not in the kernel's space");
  Trajectory traj;
  traj.seed = seed;
  traj.stream_id = stream_id;
  traj.kernel_id = kernel.id();
  traj.states.reserve(static_cast<std::size_t>(horizon) + 1);
  traj.states.push_back(x0);
  RandomStream rng(seed, stream_id);
  for (std::int64_t t = 0; t < horizon; ++t) traj.states.push_back(kernel.sample(traj.states.back(), rng));
  return traj;
}

Trajectory annotate_stopping_times(Trajectory traj, const StoppingPolicy& policy,
                                   std::uint64_t seed) {
  StoppingClock clock(policy, RandomStream(seed, traj.stream_id).substream(kRenewalStreamTag));
  traj.stopping_times.clear();
  for (std::size_t t = 0; t < traj.states.size(); ++t) {
    if (clock.observe(static_cast<std::int64_t>(t), traj.states[t])) {
      traj.stopping_times.push_back(static_cast<std::int64_t>(t));
    }
  }
  traj.truncated = traj.stopping_times.back() < static_cast<std::int64_t>(traj.states.size()) - 1;
  return traj;
}

std::optional<std::int64_t> hitting_time(const Trajectory& traj, const StateSet& A) {
  for (std::size_t t = 1; t < traj.states.size(); ++t)
    if (A(traj.states[t])) return static_cast<std::int64_t>(t);
  return std::nullopt;
}

std::vector<State> sampled_path(const Trajectory& traj) {
  std::vector<State> out;
  out.reserve(traj.stopping_times.size());
  for (std::int64_t t : traj.stopping_times) out.push_back(traj.states[static_cast<std::size_t>(t)]);
  return out;
}

std::optional<std::int64_t> sampled_hitting_time(const std::vector<State>& sampled,
                                                 const StateSet& B) {
  for (std::size_t n = 1; n < sampled.size(); ++n)
    if (B(sampled[n])) return static_cast<std::int64_t>(n);
  return std::nullopt;
}

std::vector<Trajectory> simulate_batch(const TransitionKernel& kernel, const State& x0,
                                       std::int64_t horizon, std::uint64_t seed,
                                       std::size_t count, unsigned threads) {
  std::vector<Trajectory> out(count);
  parallel_for(count, threads, [&](std::size_t i) { out[i] = simulate(kernel, x0, horizon, seed, i); });
  return out;
}

void write_trajectory_csv(std::ostream& out, const Trajectory& traj) {
  const std::size_t d = traj.states.empty() ? 0 : traj.states.front().dim;
  out << "t";
  for (std::size_t i = 0; i < d; ++i) out << ",s" << i;
  out << ",is_stopping_time\n";
  std::size_t next = 0;
  for (std::size_t t = 0; t < traj.states.size(); ++t) {
    bool stop = false;
    if (next < traj.stopping_times.size() &&
        traj.stopping_times[next] == static_cast<std::int64_t>(t)) {
      stop = true;
      ++next;
    }
    out << t;
    for (std::size_t i = 0; i < d; ++i) fmt::print(out, ",{}", traj.states[t][i]);
    out << ',' << (stop ? 1 : 0) << '\n';
  }
}

}  // namespace driftlab
