#include "driftlab/drift_verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <fmt/core.h>

#include "driftlab/finite_oracle.hpp"
#include "driftlab/parallel.hpp"
#include "driftlab/simd/kernels.hpp"

namespace driftlab {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Block sampler shared by all checkers.

using GapFunction = std::function<double(std::int64_t)>;

struct Request {
  StateFunction V;                    // record V(x_{T_1}) when set
  StateFunction f;                    // record sum_{T_0 <= k < T_1} f(x_k) when set
  std::vector<GapFunction> gap_fns;   // g(T_{k+1} - T_k) for each block k
  bool histogram = false;             // pmf of T_1 - T_0
  std::int64_t hist_max = 64;         // last cell collects gaps >= hist_max
  int blocks = 1;
};

struct PointAccum {
  std::size_t n = 0;
  std::size_t censored = 0;
  TailAwareMean V_end;
  TailAwareMean f_sum;
  std::vector<std::vector<TailAwareMean>> gap;  // [fn][block]
  std::vector<std::uint64_t> hist;              // index = gap (0 unused)

  PointAccum(const Request& req, std::size_t expected)
      : V_end(expected), f_sum(expected),
        gap(req.gap_fns.size(), std::vector<TailAwareMean>(static_cast<std::size_t>(req.blocks),
                                                           TailAwareMean(expected))),
        hist(req.histogram ? static_cast<std::size_t>(req.hist_max) + 1 : 0, 0) {}

  void merge(const PointAccum& o) {
    n += o.n;
    censored += o.censored;
    V_end.merge(o.V_end);
    f_sum.merge(o.f_sum);
    for (std::size_t i = 0; i < gap.size(); ++i)
      for (std::size_t k = 0; k < gap[i].size(); ++k) gap[i][k].merge(o.gap[i][k]);
    for (std::size_t i = 0; i < hist.size(); ++i) hist[i] += o.hist[i];
  }

  double censor_rate() const { return n == 0 ? 0.0 : static_cast<double>(censored) / static_cast<double>(n); }
};

std::uint64_t replicate_stream(std::size_t grid_index, std::size_t replicate) {
  return (static_cast<std::uint64_t>(grid_index) << 40) | static_cast<std::uint64_t>(replicate);
}

void sample_replicate(const TransitionKernel& kernel, const StoppingPolicy& policy, const State& x0,
                      const Request& req, const Budget& budget, std::uint64_t stream,
                      PointAccum& acc) {
  RandomStream rng(budget.seed, stream);
  StoppingClock clock(policy, rng.substream(kRenewalStreamTag));
  State x = x0;
  clock.observe(0, x);
  std::int64_t t = 0;
  ++acc.n;
  for (int k = 0; k < req.blocks; ++k) {
    const std::int64_t start = t;
    double fsum = req.f ? req.f(x) : 0.0;
    bool done = false;
    while (t - start < budget.horizon) {
      x = kernel.sample(x, rng);
      ++t;
      if (clock.observe(t, x)) {
        done = true;
        break;
      }
      if (req.f) fsum += req.f(x);
    }
    if (!done) {
      if (k == 0) ++acc.censored;
      return;
    }
    const std::int64_t gap = t - start;
    if (k == 0) {
      if (req.V) acc.V_end.add(req.V(x));
      if (req.f) acc.f_sum.add(fsum);
      if (req.histogram) ++acc.hist[static_cast<std::size_t>(std::min(gap, req.hist_max))];
    }
    for (std::size_t i = 0; i < req.gap_fns.size(); ++i) acc.gap[i][static_cast<std::size_t>(k)].add(req.gap_fns[i](gap));
  }
}

std::vector<PointAccum> run_sampler(const TransitionKernel& kernel, const StoppingPolicy& policy,
                                    const std::vector<State>& grid, const Request& req,
                                    const Budget& budget) {
  if (budget.n_samples < 100) throw std::invalid_argument("sampled checks need n_samples >= 100 per grid point");
  if (budget.horizon < 1) throw std::invalid_argument("budget horizon must be >= 1");
  for (const auto& x : grid)
    if (!kernel.valid_state(x)) throw std::invalid_argument("grid state outside the kernel's space");
  const std::size_t chunk = std::max<std::size_t>(1, budget.chunk);
  const std::size_t per_point = (budget.n_samples + chunk - 1) / chunk;
  const std::size_t items = per_point * grid.size();
  std::vector<PointAccum> partial(items, PointAccum(req, budget.n_samples));
  parallel_for(items, budget.threads, [&](std::size_t item) {
    const std::size_t g = item / per_point;
    const std::size_t c = item % per_point;
    const std::size_t lo = c * chunk;
    const std::size_t hi = std::min(budget.n_samples, lo + chunk);
    for (std::size_t i = lo; i < hi; ++i)
      sample_replicate(kernel, policy, grid[g], req, budget, replicate_stream(g, i), partial[item]);
  });
  std::vector<PointAccum> out;
  out.reserve(grid.size());
  for (std::size_t g = 0; g < grid.size(); ++g) {
    PointAccum acc = std::move(partial[g * per_point]);
    for (std::size_t c = 1; c < per_point; ++c) acc.merge(partial[g * per_point + c]);
    out.push_back(std::move(acc));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Exact block quantities for finite chains under deterministic policies.

struct ExactBlock {
  std::int64_t n = 0;
  double V_end = 0.0;
  double f_sum = 0.0;
};

bool use_exact(const TransitionKernel& kernel, const StoppingPolicy& policy, const Budget& budget) {
  const bool possible = kernel.finite() && policy.kind() == StoppingPolicy::Kind::deterministic;
  switch (budget.mode) {
    case Budget::Mode::automatic: return possible;
    case Budget::Mode::exact:
      if (!possible) throw std::invalid_argument("exact mode needs a finite chain and a deterministic policy");
      return true;
    case Budget::Mode::sampled: return false;
  }
  return false;
}

std::vector<double> tabulate(const FiniteChain& chain, const StateFunction& fn) {
  std::vector<double> out(chain.size());
  for (std::size_t y = 0; y < chain.size(); ++y) out[y] = fn(State::index(y));
  return out;
}

std::vector<double> step_distribution(const FiniteChain& chain, const std::vector<double>& mu) {
  std::vector<double> out(chain.size());
  simd::vecmat(mu, chain.matrix(), out);
  return out;
}

ExactBlock exact_block(const FiniteChain& chain, const StoppingPolicy& policy, const State& x,
                       const std::vector<double>& V, const std::vector<double>& f) {
  ExactBlock b;
  b.n = policy.step_count()(x);
  if (b.n < 1) throw std::invalid_argument(fmt::format("stopping times must strictly increase: n(x)={}", b.n));
  std::vector<double> mu(chain.size(), 0.0);
  mu[x.as_index()] = 1.0;
  for (std::int64_t j = 0; j < b.n; ++j) {
    if (!f.empty())
      for (std::size_t y = 0; y < chain.size(); ++y) b.f_sum += mu[y] * f[y];
    mu = step_distribution(chain, mu);
  }
  if (!V.empty())
    for (std::size_t y = 0; y < chain.size(); ++y) b.V_end += mu[y] * V[y];
  return b;
}

MeanBound exact_bound(double v) {
  MeanBound m;
  m.n = 1;
  m.mean = m.ucb = m.lcb = m.truncated_mean = v;
  m.truncation_level = v;
  return m;
}

// ---------------------------------------------------------------------------
// Clause helpers.

double delta_per_point(const Budget& budget, std::size_t grid_size) {
  return (1.0 - budget.confidence) / static_cast<double>(std::max<std::size_t>(1, grid_size));
}

bool exact_le(double value, double bound) {
  return value <= bound + 1e-12 * std::max(1.0, std::fabs(bound));
}

Clause upper_clause(std::string name, std::string inequality, std::size_t grid_index,
                    const MeanBound& mb, double bound, bool exact, double censor_rate,
                    const Budget& budget) {
  Clause c;
  c.name = std::move(name);
  c.inequality = std::move(inequality);
  c.grid_index = grid_index;
  c.estimate = mb.mean;
  c.ucb = mb.ucb;
  c.lcb = mb.lcb;
  c.bound = bound;
  c.exact = exact;
  c.n = mb.n;
  c.censor_rate = censor_rate;
  if (exact) {
    c.verdict = exact_le(mb.mean, bound) ? Verdict::pass : Verdict::fail;
    return c;
  }
  if (mb.lcb > bound) {
    c.verdict = Verdict::fail;
  } else if (censor_rate > budget.max_censor_rate) {
    c.verdict = Verdict::inconclusive;
    c.note = fmt::format("censor rate {:.3g} exceeds {:.3g}", censor_rate, budget.max_censor_rate);
  } else if (mb.heavy_tail) {
    c.verdict = Verdict::inconclusive;
    c.note = fmt::format("heavy tail: Hill index {:.3g}", mb.hill_alpha);
  } else if (mb.n == 0) {
    c.verdict = Verdict::inconclusive;
    c.note = "no completed blocks";
  } else {
    c.verdict = mb.ucb <= bound ? Verdict::pass : Verdict::inconclusive;
  }
  if (mb.tail_contribution > 0.0 && c.note.empty()) {
    c.note = fmt::format("truncated at {:.6g}; tail contribution {:.3g}", mb.truncation_level, mb.tail_contribution);
  }
  return c;
}

/// A finite mean (no fixed bound): pass unless censored or heavy-tailed.
Clause finite_clause(std::string name, std::string inequality, std::size_t grid_index,
                     const MeanBound& mb, bool exact, double censor_rate, const Budget& budget) {
  Clause c = upper_clause(std::move(name), std::move(inequality), grid_index, mb, kInf, exact,
                          censor_rate, budget);
  c.bound = kInf;
  if (!exact && c.verdict == Verdict::pass && !std::isfinite(mb.ucb)) c.verdict = Verdict::inconclusive;
  return c;
}

Clause exact_clause(std::string name, std::string inequality, double value, double bound, bool ok,
                    std::string note = {}) {
  Clause c;
  c.name = std::move(name);
  c.inequality = std::move(inequality);
  c.estimate = c.ucb = c.lcb = value;
  c.bound = bound;
  c.exact = true;
  c.n = 1;
  c.verdict = ok ? Verdict::pass : Verdict::fail;
  c.note = std::move(note);
  return c;
}

void finish(DriftCertificate& cert) {
  Verdict v = Verdict::pass;
  bool all_exact = true;
  for (const auto& c : cert.clauses) {
    v = combine(v, c.verdict);
    all_exact = all_exact && c.exact;
  }
  cert.verdict = v;
  cert.evidence = all_exact ? "exact" : "statistical evidence";
}

DriftCertificate make_certificate(std::string theorem, const TransitionKernel& kernel,
                                  const StoppingPolicy& policy, const std::vector<State>& grid,
                                  const Budget& budget) {
  DriftCertificate cert;
  cert.theorem = std::move(theorem);
  cert.chain_id = kernel.id();
  cert.policy = to_string(policy.kind()) + ":" + policy.label();
  cert.grid = grid;
  cert.seed = budget.seed;
  return cert;
}

/// Small-set evidence for C: a minorization on finite chains, an explicit
/// caveat otherwise.
void small_set_evidence(DriftCertificate& cert, const TransitionKernel& kernel, const StateSet& C) {
  const FiniteChain* chain = kernel.finite();
  if (!chain) {
    cert.caveats.push_back("C is asserted small by the caller (continuous state space)");
    return;
  }
  StateMask mask(chain->size());
  bool any = false;
  for (std::size_t y = 0; y < chain->size(); ++y) {
    mask[y] = C(State::index(y));
    any = any || mask[y];
  }
  if (!any) {
    cert.clauses.push_back(exact_clause("small set", "C nonempty", 0, 1, false, "C is empty"));
    return;
  }
  const int n_max = static_cast<int>(std::min<std::size_t>(chain->size(), 64));
  for (int n0 = 1; n0 <= n_max; ++n0) {
    try {
      const auto w = find_minorization(*chain, mask, n0);
      cert.constants["small_set_n0"] = n0;
      cert.constants["small_set_epsilon"] = w.epsilon;
      cert.clauses.push_back(exact_clause("small set", "P^{n0}(x,.) >= eps nu(.) on C", w.epsilon, 0.0, true,
                                          fmt::format("n0={}", n0)));
      return;
    } catch (const std::runtime_error&) {
    }
  }
  Clause c = exact_clause("small set", "P^{n0}(x,.) >= eps nu(.) on C", 0.0, 0.0, false,
                          fmt::format("no minorization for n0 <= {}", n_max));
  c.verdict = Verdict::inconclusive;
  cert.clauses.push_back(c);
}

/// "V bounded on C", skipped where the policy kind makes it unnecessary.
void v_bounded_on_C(DriftCertificate& cert, const StoppingPolicy& policy, const DriftSpec& spec,
                    const std::vector<State>& grid) {
  const bool relaxed = policy.kind() == StoppingPolicy::Kind::independent ||
                       (policy.kind() == StoppingPolicy::Kind::event_triggered && spec.C_inside_events);
  if (relaxed) {
    cert.caveats.push_back("V bounded on C not required for this stopping-time kind");
    return;
  }
  double sup = 0.0;
  for (const auto& x : grid)
    if (spec.C(x)) sup = std::max(sup, spec.V(x));
  cert.constants["sup_V_on_C_grid"] = sup;
  if (spec.V_bound_on_C) {
    cert.clauses.push_back(exact_clause("V bounded on C", "V(x) <= bound for grid x in C", sup,
                                        *spec.V_bound_on_C, sup <= *spec.V_bound_on_C));
  } else {
    cert.caveats.push_back("V bounded on C checked on grid states only");
  }
}

void require_V_at_least_one(const DriftSpec& spec, const std::vector<State>& grid) {
  if (!spec.V) throw std::invalid_argument("drift spec needs V");
  if (!spec.C) throw std::invalid_argument("drift spec needs C");
  for (const auto& x : grid)
    if (!(spec.V(x) >= 1.0)) throw std::invalid_argument("V must be >= 1 on the grid");
}

void record_sizes(DriftCertificate& cert, const std::vector<PointAccum>& acc) {
  for (const auto& a : acc) {
    cert.sample_sizes.push_back(a.n);
    cert.censor_rates.push_back(a.censor_rate());
  }
}

StateFunction or_one(const StateFunction& fn) {
  return fn ? fn : StateFunction([](const State&) { return 1.0; });
}

/// Prefix sums S(n) = sum_{j<n} r(j) up to the block horizon.
std::shared_ptr<std::vector<double>> rate_prefix(const RateFunction& r, std::int64_t horizon) {
  auto p = std::make_shared<std::vector<double>>();
  const auto end = r.domain_end();
  const std::int64_t top = end ? std::min(horizon, *end + 1) : horizon;
  p->reserve(static_cast<std::size_t>(top) + 1);
  p->push_back(0.0);
  for (std::int64_t j = 0; j < top; ++j) p->push_back(p->back() + r(j));
  return p;
}

}  // namespace

// ---------------------------------------------------------------------------

SampledDrift estimate_sampled_drift(const TransitionKernel& kernel, const StoppingPolicy& policy,
                                    const DriftSpec& spec, const std::vector<State>& grid,
                                    const Budget& budget) {
  require_V_at_least_one(spec, grid);
  SampledDrift out;
  const double delta = delta_per_point(budget, grid.size());
  out.exact = use_exact(kernel, policy, budget);
  if (out.exact) {
    const auto V = tabulate(*kernel.finite(), spec.V);
    for (const auto& x : grid) {
      const auto b = exact_block(*kernel.finite(), policy, x, V, {});
      out.points.push_back({x, spec.C(x), true, 1, 0.0, exact_bound(b.V_end)});
    }
  } else {
    Request req;
    req.V = spec.V;
    const auto acc = run_sampler(kernel, policy, grid, req, budget);
    for (std::size_t g = 0; g < grid.size(); ++g) {
      PointEstimate p{grid[g], spec.C(grid[g]), false, acc[g].n, acc[g].censor_rate(), acc[g].V_end.bound(delta)};
      out.censored = out.censored || p.censor_rate > budget.max_censor_rate;
      out.heavy_tail = out.heavy_tail || p.value.heavy_tail;
      out.points.push_back(p);
    }
  }
  for (std::size_t g = 0; g < out.points.size(); ++g) {
    const auto& p = out.points[g];
    if (p.in_C) continue;
    const double ratio = p.value.ucb / spec.V(p.x);
    if (!out.lambda_argmax || ratio > out.lambda_hat) {
      out.lambda_hat = ratio;
      out.lambda_argmax = g;
    }
  }
  for (const auto& p : out.points)
    if (p.in_C) out.b_hat = std::max(out.b_hat, p.value.ucb - out.lambda_hat * spec.V(p.x));
  return out;
}

DriftCertificate check_thm5(const TransitionKernel& kernel, const StoppingPolicy& policy,
                            const DriftSpec& spec, const std::vector<State>& grid,
                            const Budget& budget) {
  if (!spec.V || !spec.C) throw std::invalid_argument("drift spec needs V and C");
  for (const auto& x : grid)
    if (!(spec.V(x) > 0.0)) throw std::invalid_argument("V must be positive on the grid");
  const StateFunction f = or_one(spec.f);
  const StateFunction dgap = or_one(spec.delta);
  DriftCertificate cert = make_certificate("thm5", kernel, policy, grid, budget);
  const double delta = delta_per_point(budget, grid.size());
  const bool exact = use_exact(kernel, policy, budget);

  std::vector<MeanBound> v_end(grid.size()), f_sum(grid.size());
  std::vector<double> censor(grid.size(), 0.0);
  if (exact) {
    const auto V = tabulate(*kernel.finite(), spec.V);
    const auto F = tabulate(*kernel.finite(), f);
    for (std::size_t g = 0; g < grid.size(); ++g) {
      const auto b = exact_block(*kernel.finite(), policy, grid[g], V, F);
      v_end[g] = exact_bound(b.V_end);
      f_sum[g] = exact_bound(b.f_sum);
      cert.sample_sizes.push_back(0);
      cert.censor_rates.push_back(0.0);
    }
  } else {
    Request req;
    req.V = spec.V;
    req.f = f;
    const auto acc = run_sampler(kernel, policy, grid, req, budget);
    record_sizes(cert, acc);
    for (std::size_t g = 0; g < grid.size(); ++g) {
      v_end[g] = acc[g].V_end.bound(delta);
      f_sum[g] = acc[g].f_sum.bound(delta);
      censor[g] = acc[g].censor_rate();
    }
  }
  double worst_gap = -kInf;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const State& x = grid[g];
    const bool inC = spec.C(x);
    const double bound = spec.V(x) - dgap(x) + (inC ? spec.b : 0.0);
    cert.clauses.push_back(upper_clause("drift", "E[V(x_T1)] <= V(x) - delta(x) + b 1_C(x)", g, v_end[g], bound,
                                        exact, censor[g], budget));
    cert.clauses.push_back(upper_clause("f-sum", "E[sum_{k<T1} f(x_k)] <= delta(x)", g, f_sum[g], dgap(x), exact,
                                        censor[g], budget));
    worst_gap = std::max(worst_gap, v_end[g].ucb - bound);
  }
  cert.constants["b"] = spec.b;
  cert.constants["max_drift_excess_ucb"] = worst_gap;
  small_set_evidence(cert, kernel, spec.C);
  finish(cert);
  cert.conclusion = cert.verdict == Verdict::pass
                        ? "positive Harris recurrent with a unique invariant distribution pi and pi(f) < inf"
                        : "no conclusion";
  if (cert.evidence != "exact") cert.caveats.push_back("statistical evidence on a finite grid, not a proof");
  return cert;
}

DriftCertificate check_thm8(const TransitionKernel& kernel, const StoppingPolicy& policy,
                            const DriftSpec& spec, const RateFunction& r,
                            const std::vector<State>& grid, const Budget& budget) {
  DriftCertificate cert = make_certificate("thm8", kernel, policy, grid, budget);
  const auto gate = lambda0_membership(r, 10000);
  cert.constants["rate_final_slope"] = gate.final_slope;
  if (!gate.passes) {
    Clause c = exact_clause("rate class gate", "r non-decreasing, r(1) >= 2, log r(n)/n decreasing to 0",
                            gate.final_slope, kSlopeDecay * gate.reference_slope, false);
    for (const auto& f : gate.failures) c.note += (c.note.empty() ? "" : "; ") + f;
    cert.clauses.push_back(c);
    finish(cert);
    cert.conclusion = "rate rejected before sampling";
    return cert;
  }
  require_V_at_least_one(spec, grid);
  const double delta = delta_per_point(budget, grid.size());
  const double inv_lambda = 1.0 / spec.lambda;
  const bool exact = use_exact(kernel, policy, budget);
  const auto prefix = rate_prefix(r, budget.horizon);
  auto r_gap = [&r](std::int64_t n) { return r(n); };
  auto m_gap = [prefix](std::int64_t n) {
    return static_cast<std::size_t>(n) < prefix->size() ? (*prefix)[static_cast<std::size_t>(n)] : kInf;
  };

  const int blocks = exact ? 1 : std::max(1, budget.blocks);
  std::vector<MeanBound> v_end(grid.size());
  std::vector<std::vector<MeanBound>> r_mom(grid.size()), m_sum(grid.size());
  std::vector<double> censor(grid.size(), 0.0);
  if (exact) {
    const auto V = tabulate(*kernel.finite(), spec.V);
    for (std::size_t g = 0; g < grid.size(); ++g) {
      const auto b = exact_block(*kernel.finite(), policy, grid[g], V, {});
      v_end[g] = exact_bound(b.V_end);
      r_mom[g] = {exact_bound(r(b.n))};
      m_sum[g] = {exact_bound(m_gap(b.n))};
      cert.sample_sizes.push_back(0);
      cert.censor_rates.push_back(0.0);
    }
  } else {
    Request req;
    req.V = spec.V;
    req.gap_fns = {r_gap, m_gap};
    req.blocks = blocks;
    const auto acc = run_sampler(kernel, policy, grid, req, budget);
    record_sizes(cert, acc);
    for (std::size_t g = 0; g < grid.size(); ++g) {
      v_end[g] = acc[g].V_end.bound(delta);
      censor[g] = acc[g].censor_rate();
      for (int k = 0; k < blocks; ++k) {
        r_mom[g].push_back(acc[g].gap[0][static_cast<std::size_t>(k)].bound(delta / blocks));
        m_sum[g].push_back(acc[g].gap[1][static_cast<std::size_t>(k)].bound(delta / blocks));
      }
    }
  }

  double lambda_hat = 0.0, M_hat = 0.0, r_hat = 0.0;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const State& x = grid[g];
    const bool inC = spec.C(x);
    const double Vx = spec.V(x);
    cert.clauses.push_back(upper_clause("drift", "E[V(x_T1)] <= lambda V(x) + b 1_C(x)", g, v_end[g],
                                        spec.lambda * Vx + (inC ? spec.b : 0.0), exact, censor[g], budget));
    if (!inC) {
      lambda_hat = std::max(lambda_hat, v_end[g].ucb / Vx);
      if (spec.epsilon > 0.0) {
        Clause c = exact_clause("gap", "lambda V(x) <= V(x) - epsilon off C", spec.lambda * Vx, Vx - spec.epsilon,
                                exact_le(spec.lambda * Vx, Vx - spec.epsilon));
        c.grid_index = g;
        cert.clauses.push_back(c);
      }
    }
    for (int k = 0; k < blocks; ++k) {
      Clause rm = upper_clause("r-moment", "E[r(T_{k+1} - T_k)] <= 1/lambda", g, r_mom[g][static_cast<std::size_t>(k)],
                               inv_lambda, exact, censor[g], budget);
      rm.block = k;
      cert.clauses.push_back(rm);
      Clause ms = finite_clause("M", "E[sum_{n<T_{k+1}-T_k} r(n)] <= M < inf", g, m_sum[g][static_cast<std::size_t>(k)],
                                exact, censor[g], budget);
      ms.block = k;
      cert.clauses.push_back(ms);
      r_hat = std::max(r_hat, r_mom[g][static_cast<std::size_t>(k)].ucb);
      M_hat = std::max(M_hat, m_sum[g][static_cast<std::size_t>(k)].ucb);
    }
  }
  v_bounded_on_C(cert, policy, spec, grid);
  small_set_evidence(cert, kernel, spec.C);
  cert.constants["lambda"] = spec.lambda;
  cert.constants["lambda_hat_ucb"] = lambda_hat;
  cert.constants["b"] = spec.b;
  cert.constants["M_hat_ucb"] = M_hat;
  cert.constants["r_moment_ucb"] = r_hat;
  if (r_hat > inv_lambda && std::isfinite(r_hat)) {
    const auto j = jensen_rate(r, r_hat, spec.lambda);
    cert.constants["jensen_s"] = j.s;
    cert.caveats.push_back(fmt::format("r-moment exceeds 1/lambda; the reduced rate {} satisfies it by Jensen's inequality",
                                       j.rate.label()));
  }
  finish(cert);
  cert.conclusion = cert.verdict == Verdict::pass ? "(1," + r.label() + ")-ergodic" : "no conclusion";
  if (cert.evidence != "exact") cert.caveats.push_back("statistical evidence on a finite grid, not a proof");
  return cert;
}

DriftCertificate check_corollary9(const StoppingPolicy::StepCount& n_func, const RateFunction& r,
                                  double lambda, const std::vector<State>& domain,
                                  std::int64_t n_cap) {
  DriftCertificate cert;
  cert.theorem = "corollary9";
  cert.policy = "deterministic:n(x)";
  cert.grid = domain;
  const auto gate = lambda0_membership(r, 10000);
  if (!gate.passes) {
    Clause c = exact_clause("rate class gate", "r non-decreasing, r(1) >= 2, log r(n)/n decreasing to 0",
                            gate.final_slope, kSlopeDecay * gate.reference_slope, false);
    for (const auto& f : gate.failures) c.note += (c.note.empty() ? "" : "; ") + f;
    cert.clauses.push_back(c);
    finish(cert);
    cert.conclusion = "rate rejected before the check";
    return cert;
  }
  double M = 0.0, worst = -kInf;
  std::int64_t n_max = 0;
  std::size_t worst_index = 0;
  for (std::size_t i = 0; i < domain.size(); ++i) {
    const std::int64_t n = n_func(domain[i]);
    if (n < 1) throw std::invalid_argument(fmt::format("stopping times must strictly increase: n(x)={}", n));
    n_max = std::max(n_max, n);
    if (n > n_cap) continue;
    double s = 0.0;
    for (std::int64_t k = 0; k <= n; ++k) s += r(k);
    M = std::max(M, s);
    const double rn = r(n);
    if (rn > worst) {
      worst = rn;
      worst_index = i;
    }
  }
  cert.constants["M"] = M;
  cert.constants["lambda"] = lambda;
  cert.constants["n_max"] = static_cast<double>(n_max);
  if (n_max > n_cap) {
    Clause c = exact_clause("bounded n", "sup n(x) < inf over the domain", static_cast<double>(n_max),
                            static_cast<double>(n_cap), true, "n(x) exceeds the cap: looks unbounded");
    c.verdict = Verdict::inconclusive;
    cert.clauses.push_back(c);
  }
  cert.clauses.push_back(exact_clause("M", "sum_{k=0}^{n(x)} r(k) <= M", M, M, true));
  Clause rc = exact_clause("r at n(x)", "r(n(x)) <= 1/lambda", worst, 1.0 / lambda, exact_le(worst, 1.0 / lambda));
  rc.grid_index = worst_index;
  cert.clauses.push_back(rc);
  finish(cert);
  cert.conclusion = cert.verdict == Verdict::pass ? "(1," + r.label() + ")-ergodic given the drift condition"
                                                  : "no conclusion";
  return cert;
}

DriftCertificate check_connor_fort(const TransitionKernel& kernel, const StoppingPolicy& policy,
                                   const DriftSpec& spec, const std::function<double(double)>& R,
                                   const std::string& R_label, const std::vector<State>& grid,
                                   const Budget& budget) {
  if (policy.kind() != StoppingPolicy::Kind::independent) {
    throw std::invalid_argument("connor_fort requires independent stopping times");
  }
  require_V_at_least_one(spec, grid);
  DriftCertificate cert = make_certificate("connor_fort", kernel, policy, grid, budget);

  // R strictly increasing and R(t)/t non-increasing on 1..N.
  const std::int64_t N = 10000;
  std::optional<std::int64_t> bad_ratio, bad_increase;
  double prev_R = R(1.0), prev_ratio = prev_R;
  for (std::int64_t t = 2; t <= N; ++t) {
    const double Rt = R(static_cast<double>(t));
    const double ratio = Rt / static_cast<double>(t);
    if (!bad_increase && !(Rt > prev_R)) bad_increase = t;
    if (!bad_ratio && ratio > prev_ratio * (1.0 + 1e-12)) bad_ratio = t;
    prev_R = Rt;
    prev_ratio = ratio;
  }
  cert.clauses.push_back(exact_clause("R increasing", "R strictly increasing on 1..1e4", 0, 0, !bad_increase,
                                      bad_increase ? fmt::format("fails at t={}", *bad_increase) : ""));
  cert.clauses.push_back(exact_clause("R(t)/t", "R(t)/t non-increasing on 1..1e4", 0, 0, !bad_ratio,
                                      bad_ratio ? fmt::format("increases at t={}", *bad_ratio) : ""));

  const double delta = delta_per_point(budget, grid.size());
  Request req;
  req.V = spec.V;
  req.gap_fns = {[&R](std::int64_t n) { return R(static_cast<double>(n)); }};
  const auto acc = run_sampler(kernel, policy, grid, req, budget);
  record_sizes(cert, acc);
  double lambda_hat = 0.0;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const State& x = grid[g];
    const bool inC = spec.C(x);
    const auto v = acc[g].V_end.bound(delta);
    cert.clauses.push_back(upper_clause("drift", "E[V(x_T1)] <= lambda V(x) + b 1_C(x)", g, v,
                                        spec.lambda * spec.V(x) + (inC ? spec.b : 0.0), false,
                                        acc[g].censor_rate(), budget));
    if (!inC) lambda_hat = std::max(lambda_hat, v.ucb / spec.V(x));
    cert.clauses.push_back(upper_clause("R-moment", "E[R(T1 - T0)] <= V(x)", g, acc[g].gap[0][0].bound(delta),
                                        spec.V(x), false, acc[g].censor_rate(), budget));
  }

  // pi(V) < inf: ergodic averages of V over the second half of long runs.
  {
    const std::size_t reps = 16;
    const std::int64_t len = std::max<std::int64_t>(2, budget.horizon);
    TailAwareMean late(reps * static_cast<std::size_t>(len / 2));
    std::vector<RunningMoments> per(reps);
    std::vector<TailAwareMean> parts(reps, TailAwareMean(static_cast<std::size_t>(len / 2)));
    parallel_for(reps, budget.threads, [&](std::size_t i) {
      RandomStream rng(budget.seed, (std::uint64_t{0xFFFFFF} << 40) | i);
      State x = grid.front();
      for (std::int64_t t = 1; t <= len; ++t) {
        x = kernel.sample(x, rng);
        if (t > len / 2) parts[i].add(spec.V(x));
      }
    });
    for (const auto& p : parts) late.merge(p);
    const auto mb = late.bound(1.0 - budget.confidence);
    Clause c = finite_clause("pi(V) finite", "ergodic average of V bounded (statistical)", 0, mb, false, 0.0, budget);
    c.grid_index.reset();
    cert.clauses.push_back(c);
    cert.constants["pi_V_estimate"] = mb.mean;
    cert.caveats.push_back("pi(V) finite: statistical");
  }
  small_set_evidence(cert, kernel, spec.C);
  cert.constants["lambda"] = spec.lambda;
  cert.constants["lambda_hat_ucb"] = lambda_hat;
  cert.constants["b"] = spec.b;
  finish(cert);
  cert.conclusion = cert.verdict == Verdict::pass ? "(1," + R_label + ")-ergodic" : "no conclusion";
  cert.caveats.push_back("statistical evidence on a finite grid, not a proof");
  return cert;
}

DriftCertificate check_geo_random(const TransitionKernel& kernel, const StoppingPolicy& policy,
                                  const DriftSpec& spec, const std::vector<State>& grid,
                                  const Budget& budget, const GeoRandomOptions& options) {
  require_V_at_least_one(spec, grid);
  if (!(options.a_test > 1.0)) throw std::invalid_argument("geo_random needs a_test > 1");
  DriftCertificate cert = make_certificate("geo_random", kernel, policy, grid, budget);
  const double delta = delta_per_point(budget, grid.size());
  const double a = options.a_test;

  Request req;
  req.V = spec.V;
  req.histogram = true;
  req.hist_max = 64;
  req.gap_fns = {[a](std::int64_t n) { return std::pow(a, static_cast<double>(n)); }};
  const auto acc = run_sampler(kernel, policy, grid, req, budget);
  record_sizes(cert, acc);

  double lambda_hat = 0.0, a_moment = 0.0;
  std::vector<std::size_t> outside;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const State& x = grid[g];
    const bool inC = spec.C(x);
    const auto v = acc[g].V_end.bound(delta);
    cert.clauses.push_back(upper_clause("drift", "E[V(x_T1)] <= lambda V(x) + b 1_C(x)", g, v,
                                        spec.lambda * spec.V(x) + (inC ? spec.b : 0.0), false,
                                        acc[g].censor_rate(), budget));
    if (inC) {
      const auto m = acc[g].gap[0][0].bound(delta);
      cert.clauses.push_back(finite_clause("a-moment", fmt::format("E_x[{}^T1] < inf on C", a), g, m, false,
                                           acc[g].censor_rate(), budget));
      a_moment = std::max(a_moment, m.ucb);
    } else {
      lambda_hat = std::max(lambda_hat, v.ucb / spec.V(x));
      outside.push_back(g);
    }
  }

  // Inter-time pmf off C: cells with at least min_count observations are
  // fitted; the remaining tail is checked as one block.
  struct Cell {
    std::size_t g;
    std::int64_t k;
    double ucb;
  };
  std::vector<Cell> cells;
  std::vector<std::pair<std::size_t, std::int64_t>> tails;  // (grid, first unfitted k)
  std::size_t n_tests = 0;
  for (auto g : outside) {
    const auto& h = acc[g].hist;
    std::int64_t k = 1;
    for (; k < static_cast<std::int64_t>(h.size()) && h[static_cast<std::size_t>(k)] >= options.min_count; ++k) ++n_tests;
    tails.emplace_back(g, k);
    ++n_tests;
  }
  const double cell_alpha = (1.0 - budget.confidence) / static_cast<double>(std::max<std::size_t>(1, n_tests));
  double log_sum_x = 0, log_sum_y = 0, log_sum_xx = 0, log_sum_xy = 0, log_w = 0;
  for (auto g : outside) {
    const auto& h = acc[g].hist;
    const std::uint64_t n = acc[g].n - acc[g].censored;
    for (std::int64_t k = 1; k < static_cast<std::int64_t>(h.size()) && h[static_cast<std::size_t>(k)] >= options.min_count; ++k) {
      const auto c = h[static_cast<std::size_t>(k)];
      cells.push_back({g, k, clopper_pearson_upper(c, n, cell_alpha)});
      const double w = static_cast<double>(c);
      const double y = std::log(static_cast<double>(c) / static_cast<double>(n));
      log_w += w;
      log_sum_x += w * static_cast<double>(k);
      log_sum_y += w * y;
      log_sum_xx += w * static_cast<double>(k * k);
      log_sum_xy += w * static_cast<double>(k) * y;
    }
  }
  // Decay-rate estimate of beta from the log pmf (count-weighted least squares).
  double beta_decay = 0.0;
  {
    const double den = log_w * log_sum_xx - log_sum_x * log_sum_x;
    if (log_w > 0 && den > 1e-9 * log_w * log_w) beta_decay = std::exp((log_w * log_sum_xy - log_sum_x * log_sum_y) / den);
  }
  // Minimal B with every fitted cell and every remaining tail under the
  // bound: P(dT = k) <= B beta^{k-1} and P(dT >= k0) <= B beta^{k0-1}/(1-beta).
  std::vector<std::pair<std::int64_t, double>> tail_ucb;  // (k0, UCB)
  for (const auto& [g, k0] : tails) {
    const auto& h = acc[g].hist;
    std::uint64_t rest = 0;
    for (std::size_t k = static_cast<std::size_t>(k0); k < h.size(); ++k) rest += h[k];
    tail_ucb.emplace_back(k0, clopper_pearson_upper(rest, acc[g].n - acc[g].censored, cell_alpha));
  }
  auto fitted_B = [&](double beta) {
    double B = 0.0;
    for (const auto& c : cells) B = std::max(B, c.ucb / std::pow(beta, static_cast<double>(c.k - 1)));
    for (const auto& [k0, u] : tail_ucb) B = std::max(B, u * (1.0 - beta) / std::pow(beta, static_cast<double>(k0 - 1)));
    return B;
  };
  auto composite = [&](double beta, double B) { return (1.0 - B * spec.lambda) / beta; };

  double beta = 0.0, B = kInf;
  if (options.beta) {
    beta = *options.beta;
    B = fitted_B(beta);
  } else {
    double best = -kInf;
    for (int i = 1; i < 200; ++i) {
      const double cand = 0.005 * i;
      const double Bc = fitted_B(cand);
      const double score = composite(cand, Bc);
      if (std::isfinite(Bc) && score > best) {
        best = score;
        beta = cand;
        B = Bc;
      }
    }
    if (!std::isfinite(B)) {
      beta = 0.5;
      B = fitted_B(beta);
    }
  }
  if (!(beta > 0.0 && beta < 1.0)) throw std::invalid_argument("geo_random: beta must lie in (0,1)");
  const double comp = composite(beta, B);
  const double B_literal = B / beta;
  cert.constants["lambda"] = spec.lambda;
  cert.constants["lambda_hat_ucb"] = lambda_hat;
  cert.constants["b"] = spec.b;
  cert.constants["B"] = B;
  cert.constants["beta"] = beta;
  cert.constants["beta_hat"] = beta_decay;
  cert.constants["composite"] = comp;
  cert.constants["B_literal"] = B_literal;
  cert.constants["composite_literal"] = (1.0 - B_literal * spec.lambda) / beta;
  // Series condition at rho -> 1: sum_k B beta^{k-1} = B/(1-beta) < 1/lambda
  // (shifted form) and B_lit beta/(1-beta) < 1/lambda (literal form).
  cert.constants["series_shifted"] = B / (1.0 - beta);
  cert.constants["series_literal"] = B_literal * beta / (1.0 - beta);
  cert.constants["a_test"] = a;
  cert.constants["a_moment_ucb"] = a_moment;

  Clause pmf = exact_clause("pmf bound",
                            "P(T1 - T0 = k | x) <= B beta^{k-1} and P(T1 - T0 >= k0 | x) <= B beta^{k0-1}/(1-beta) off C",
                            B, B, !cells.empty() && std::isfinite(B));
  pmf.exact = false;
  if (cells.empty()) {
    pmf.verdict = Verdict::inconclusive;
    pmf.note = "no pmf cell reached the fitting count";
  }
  cert.clauses.push_back(pmf);
  Clause cc = exact_clause("composite", "(1 - B lambda)/beta > 1", comp, 1.0, comp > 1.0);
  cc.exact = false;
  if (comp <= 1.0) cc.note = fmt::format("best pair found: B={:.6g}, beta={:.6g}", B, beta);
  cert.clauses.push_back(cc);
  cert.caveats.push_back("pmf bound uses the shifted form B beta^{k-1}; literal-form constants reported alongside");
  cert.caveats.push_back(fmt::format("series-derived sufficient condition B/(1-beta) = {:.6g} vs 1/lambda = {:.6g}",
                                     B / (1.0 - beta), 1.0 / spec.lambda));
  v_bounded_on_C(cert, policy, spec, grid);
  small_set_evidence(cert, kernel, spec.C);
  finish(cert);
  cert.conclusion = cert.verdict == Verdict::pass ? "geometrically ergodic" : "no conclusion";
  cert.caveats.push_back("statistical evidence on a finite grid, not a proof");
  return cert;
}

bool concave_on_log_grid(const std::function<double(double)>& phi, double lo, double hi, int points) {
  const double llo = std::log(lo), lhi = std::log(hi);
  double prev_u = lo, prev_phi = phi(lo);
  for (int i = 1; i < points; ++i) {
    const double u = std::exp(llo + (lhi - llo) * i / (points - 1));
    const double pu = phi(u);
    const double mid = phi(0.5 * (prev_u + u));
    const double scale = 1e-12 * std::max({1.0, std::fabs(pu), std::fabs(prev_phi)});
    if (pu < prev_phi - scale) return false;
    if (mid < 0.5 * (prev_phi + pu) - scale) return false;
    prev_u = u;
    prev_phi = pu;
  }
  return true;
}

DriftCertificate check_douc(const TransitionKernel& kernel, const DriftSpec& spec,
                            const std::function<double(double)>& phi, const std::string& phi_label,
                            const std::vector<State>& grid, const Budget& budget) {
  if (!concave_on_log_grid(phi, 1.0, 1e6)) {
    throw std::invalid_argument("phi must be concave and non-decreasing on [1, 1e6]");
  }
  require_V_at_least_one(spec, grid);
  const auto policy = StoppingPolicy::every(1);
  DriftCertificate cert = make_certificate("douc", kernel, policy, grid, budget);
  const double delta = delta_per_point(budget, grid.size());
  const bool exact = use_exact(kernel, policy, budget);
  std::vector<MeanBound> v_end(grid.size());
  std::vector<double> censor(grid.size(), 0.0);
  if (exact) {
    const auto V = tabulate(*kernel.finite(), spec.V);
    for (std::size_t g = 0; g < grid.size(); ++g) {
      v_end[g] = exact_bound(exact_block(*kernel.finite(), policy, grid[g], V, {}).V_end);
      cert.sample_sizes.push_back(0);
      cert.censor_rates.push_back(0.0);
    }
  } else {
    Request req;
    req.V = spec.V;
    const auto acc = run_sampler(kernel, policy, grid, req, budget);
    record_sizes(cert, acc);
    for (std::size_t g = 0; g < grid.size(); ++g) {
      v_end[g] = acc[g].V_end.bound(delta);
      censor[g] = acc[g].censor_rate();
    }
  }
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const double Vx = spec.V(grid[g]);
    const double bound = Vx - phi(Vx) + (spec.C(grid[g]) ? spec.b : 0.0);
    cert.clauses.push_back(upper_clause("drift", "PV(x) + phi(V(x)) <= V(x) + b 1_C(x)", g, v_end[g], bound, exact,
                                        censor[g], budget));
  }
  cert.constants["b"] = spec.b;
  small_set_evidence(cert, kernel, spec.C);
  finish(cert);
  cert.conclusion = cert.verdict == Verdict::pass ? "(" + phi_label + " o V, 1)-ergodic" : "no conclusion";
  if (cert.evidence != "exact") cert.caveats.push_back("statistical evidence on a finite grid, not a proof");
  return cert;
}

JensenRate jensen_rate(const RateFunction& r, double M_star, double lambda) {
  if (!(lambda > 0.0 && lambda < 1.0)) throw std::invalid_argument("jensen_rate needs lambda in (0,1)");
  if (!(M_star > 0.0)) throw std::invalid_argument("jensen_rate needs M* > 0");
  const double s = std::max(1.0, std::log(M_star) / std::log(1.0 / lambda));
  return {s, power(r, 1.0 / s)};
}

}  // namespace driftlab
