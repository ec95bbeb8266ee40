#include "driftlab/finite_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <Eigen/Dense>
#include <fmt/core.h>
#include <fmt/ranges.h>

#include "driftlab/simd/kernels.hpp"

namespace driftlab {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

void require_state(const FiniteChain& chain, std::size_t x) {
  if (x >= chain.size()) throw std::invalid_argument(fmt::format("state {} outside 0..{}", x, chain.size() - 1));
}

void require_mask(const FiniteChain& chain, const StateMask& m, const char* what) {
  if (m.size() != chain.size()) throw std::invalid_argument(fmt::format("{}: set size does not match the chain", what));
}

std::vector<double> one_step(const FiniteChain& chain, const std::vector<double>& mu) {
  std::vector<double> out(chain.size());
  simd::vecmat(mu, chain.matrix(), out);
  return out;
}

std::vector<std::string> describe_classes(const FiniteChain& chain,
                                          const std::vector<std::vector<std::size_t>>& classes) {
  std::vector<std::string> out;
  for (const auto& c : classes) {
    std::vector<std::string> names;
    for (auto i : c) names.push_back(chain.labels()[i]);
    out.push_back(fmt::format("{{{}}}", fmt::join(names, ",")));
  }
  return out;
}

void require_single_closed_class(const FiniteChain& chain, const ClassStructure& cs) {
  if (cs.closed_classes.size() != 1) {
    throw std::invalid_argument(fmt::format("reducible chain: closed communicating classes {}",
                                            fmt::join(describe_classes(chain, cs.closed_classes), " ")));
  }
}

double spectral_radius(const MatrixXd& m) {
  if (m.rows() == 0) return 0.0;
  Eigen::EigenSolver<MatrixXd> es(m, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace

StateMask mask_of(std::size_t n, std::initializer_list<std::size_t> members) {
  StateMask m(n, false);
  for (auto i : members) {
    if (i >= n) throw std::invalid_argument("mask member outside the state space");
    m[i] = true;
  }
  return m;
}

ClassStructure communicating_classes(const FiniteChain& chain) {
  // Iterative Tarjan over the support graph.
  const std::size_t n = chain.size();
  std::vector<std::vector<std::size_t>> adj(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (chain(i, j) > 0.0) adj[i].push_back(j);

  constexpr std::size_t unvisited = static_cast<std::size_t>(-1);
  std::vector<std::size_t> index(n, unvisited), low(n, 0), comp(n, unvisited);
  std::vector<bool> on_stack(n, false);
  std::vector<std::size_t> stack;
  std::vector<std::pair<std::size_t, std::size_t>> call;  // (node, next edge)
  std::size_t counter = 0;
  ClassStructure cs;

  for (std::size_t root = 0; root < n; ++root) {
    if (index[root] != unvisited) continue;
    call.emplace_back(root, 0);
    while (!call.empty()) {
      auto& [v, e] = call.back();
      if (e == 0 && index[v] == unvisited) {
        index[v] = low[v] = counter++;
        stack.push_back(v);
        on_stack[v] = true;
      }
      if (e < adj[v].size()) {
        const std::size_t w = adj[v][e++];
        if (index[w] == unvisited) {
          call.emplace_back(w, 0);
        } else if (on_stack[w]) {
          low[v] = std::min(low[v], index[w]);
        }
        continue;
      }
      if (low[v] == index[v]) {
        std::vector<std::size_t> members;
        std::size_t w;
        do {
          w = stack.back();
          stack.pop_back();
          on_stack[w] = false;
          comp[w] = cs.classes.size();
          members.push_back(w);
        } while (w != v);
        std::sort(members.begin(), members.end());
        cs.classes.push_back(std::move(members));
      }
      const std::size_t done = v;
      call.pop_back();
      if (!call.empty()) low[call.back().first] = std::min(low[call.back().first], low[done]);
    }
  }
  for (std::size_t c = 0; c < cs.classes.size(); ++c) {
    bool closed = true;
    for (auto v : cs.classes[c])
      for (auto w : adj[v])
        if (comp[w] != c) closed = false;
    if (closed) cs.closed_classes.push_back(cs.classes[c]);
  }
  std::sort(cs.closed_classes.begin(), cs.closed_classes.end());
  cs.irreducible = cs.classes.size() == 1;
  return cs;
}

std::size_t period(const FiniteChain& chain) {
  const auto cs = communicating_classes(chain);
  require_single_closed_class(chain, cs);
  const auto& cls = cs.closed_classes.front();
  const std::size_t n = chain.size();
  std::vector<bool> member(n, false);
  for (auto v : cls) member[v] = true;
  std::vector<std::int64_t> level(n, -1);
  std::vector<std::size_t> queue{cls.front()};
  level[cls.front()] = 0;
  std::int64_t g = 0;
  for (std::size_t head = 0; head < queue.size(); ++head) {
    const auto u = queue[head];
    for (std::size_t v = 0; v < n; ++v) {
      if (!member[v] || chain(u, v) <= 0.0) continue;
      if (level[v] < 0) {
        level[v] = level[u] + 1;
        queue.push_back(v);
      } else {
        g = std::gcd(g, std::llabs(level[u] + 1 - level[v]));
      }
    }
  }
  return g == 0 ? 1 : static_cast<std::size_t>(g);
}

std::vector<double> stationary(const FiniteChain& chain) {
  const auto cs = communicating_classes(chain);
  require_single_closed_class(chain, cs);
  const std::size_t n = chain.size();
  std::vector<double> pi(n);

  if (n > 10000) {
    // Power iteration on the lazy chain (I + P)/2, which is aperiodic.
    std::vector<double> mu(n, 1.0 / static_cast<double>(n));
    for (int it = 0; it < 100000; ++it) {
      auto next = one_step(chain, mu);
      for (std::size_t i = 0; i < n; ++i) next[i] = 0.5 * (next[i] + mu[i]);
      const double diff = simd::abs_diff(next, mu);
      mu.swap(next);
      if (diff < 1e-14) break;
    }
    pi = mu;
  } else {
    MatrixXd A(n, n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) A(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          chain(j, i) - (i == j ? 1.0 : 0.0);
    A.row(static_cast<Eigen::Index>(n - 1)).setOnes();
    VectorXd rhs = VectorXd::Zero(static_cast<Eigen::Index>(n));
    rhs(static_cast<Eigen::Index>(n - 1)) = 1.0;
    Eigen::FullPivLU<MatrixXd> lu(A);
    VectorXd sol = lu.solve(rhs);
    sol += lu.solve(rhs - A * sol);  // one refinement step
    for (std::size_t i = 0; i < n; ++i) pi[i] = sol(static_cast<Eigen::Index>(i));
  }
  double total = 0.0;
  for (double& v : pi) {
    if (v < 0.0) v = 0.0;  // rounding noise on transient states
    total += v;
  }
  for (double& v : pi) v /= total;
  return pi;
}

double stationary_residual(const FiniteChain& chain, const std::vector<double>& pi) {
  return simd::abs_diff(one_step(chain, pi), pi);
}

std::vector<double> distribution_after(const FiniteChain& chain, std::size_t x, std::int64_t n) {
  require_state(chain, x);
  if (n < 0) throw std::invalid_argument("distribution_after: n < 0");
  std::vector<double> mu(chain.size(), 0.0);
  mu[x] = 1.0;
  for (std::int64_t k = 0; k < n; ++k) mu = one_step(chain, mu);
  return mu;
}

std::vector<double> matrix_power(const FiniteChain& chain, std::int64_t n) {
  if (n < 0) throw std::invalid_argument("matrix_power: n < 0");
  const std::size_t N = chain.size();
  std::vector<double> out(N * N);
  for (std::size_t x = 0; x < N; ++x) {
    const auto row = distribution_after(chain, x, n);
    std::copy(row.begin(), row.end(), out.begin() + static_cast<std::ptrdiff_t>(x * N));
  }
  return out;
}

std::vector<double> f_norm_curve(const FiniteChain& chain, std::size_t x, std::int64_t n_max,
                                 const std::vector<double>& f) {
  require_state(chain, x);
  if (n_max < 0) throw std::invalid_argument("f_norm_distance: n < 0");
  if (!f.empty()) {
    if (f.size() != chain.size()) throw std::invalid_argument("f_norm_distance: weight size mismatch");
    for (double v : f)
      if (!(v >= 1.0)) throw std::invalid_argument("f_norm_distance: weights must be >= 1");
  }
  const auto pi = stationary(chain);
  std::vector<double> mu(chain.size(), 0.0);
  mu[x] = 1.0;
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(n_max) + 1);
  for (std::int64_t n = 0; n <= n_max; ++n) {
    if (n > 0) mu = one_step(chain, mu);
    out.push_back(f.empty() ? simd::abs_diff(mu, pi) : simd::weighted_abs_diff(f, mu, pi));
  }
  return out;
}

double f_norm_distance(const FiniteChain& chain, std::size_t x, std::int64_t n,
                       const std::vector<double>& f) {
  return f_norm_curve(chain, x, n, f).back();
}

double slem(const FiniteChain& chain) {
  const auto cs = communicating_classes(chain);
  require_single_closed_class(chain, cs);
  if (const auto d = period(chain); d != 1) {
    throw std::invalid_argument(fmt::format("periodic chain (period {}): no second eigenvalue gap", d));
  }
  const std::size_t n = chain.size();
  if (n == 1) return 0.0;
  MatrixXd P(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) P(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = chain(i, j);
  Eigen::EigenSolver<MatrixXd> es(P, false);
  const auto ev = es.eigenvalues();
  Eigen::Index unit = 0;
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    const double d = std::abs(ev(i) - std::complex<double>(1.0, 0.0));
    if (d < best) {
      best = d;
      unit = i;
    }
  }
  double second = 0.0;
  for (Eigen::Index i = 0; i < ev.size(); ++i)
    if (i != unit) second = std::max(second, std::abs(ev(i)));
  return second;
}

HittingSum expected_hitting_sum(const FiniteChain& chain, std::size_t x, const StateMask& B,
                                const std::vector<double>& f, const RateFunction& r,
                                std::int64_t horizon) {
  require_state(chain, x);
  require_mask(chain, B, "expected_hitting_sum");
  const std::size_t n = chain.size();
  if (f.size() != n) throw std::invalid_argument("expected_hitting_sum: weight size mismatch");
  if (horizon < 1) throw std::invalid_argument("expected_hitting_sum: horizon must be >= 1");

  // States that can reach B in one or more steps.
  std::vector<bool> reaches(n, false);
  std::vector<std::size_t> queue;
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t b = 0; b < n; ++b)
      if (B[b] && chain(y, b) > 0.0 && !reaches[y]) {
        reaches[y] = true;
        queue.push_back(y);
      }
  for (std::size_t head = 0; head < queue.size(); ++head) {
    const auto v = queue[head];
    for (std::size_t u = 0; u < n; ++u)
      if (!reaches[u] && !B[u] && chain(u, v) > 0.0) {
        reaches[u] = true;
        queue.push_back(u);
      }
  }
  // States visited before the first entrance to B.
  std::vector<bool> live(n, false);
  std::vector<std::size_t> frontier{x};
  std::vector<bool> seen(n, false);
  for (std::size_t head = 0; head < frontier.size(); ++head) {
    const auto u = frontier[head];
    for (std::size_t v = 0; v < n; ++v)
      if (!B[v] && chain(u, v) > 0.0 && !seen[v]) {
        seen[v] = true;
        live[v] = true;
        frontier.push_back(v);
      }
  }
  if (!reaches[x]) throw std::domain_error("expected_hitting_sum: B unreachable from x (sum diverges)");
  std::vector<std::size_t> R;
  for (std::size_t v = 0; v < n; ++v) {
    if (!live[v]) continue;
    if (!reaches[v]) {
      throw std::domain_error(fmt::format(
          "expected_hitting_sum: state {} is reachable before B but never reaches B (sum diverges)", v));
    }
    R.push_back(v);
  }

  HittingSum out;
  out.horizon = horizon;
  std::vector<double> mu(n, 0.0);
  mu[x] = 1.0;
  long double value = 0.0L;
  for (std::int64_t k = 0; k <= horizon; ++k) {
    if (k > 0) {
      mu = one_step(chain, mu);
      for (std::size_t v = 0; v < n; ++v)
        if (B[v]) mu[v] = 0.0;
    }
    value += static_cast<long double>(r(k)) * simd::dot(f, mu);
  }
  out.value = static_cast<double>(value);

  double mass = 0.0, fmax = 0.0;
  for (auto v : R) {
    mass += mu[v];
    fmax = std::max(fmax, f[v]);
  }
  if (R.empty() || mass == 0.0) return out;

  // ||Q^s||_inf < 1 for s = |R| on the live block.
  const std::size_t s = R.size();
  MatrixXd Q(s, s);
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t j = 0; j < s; ++j) Q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = chain(R[i], R[j]);
  MatrixXd Qs = MatrixXd::Identity(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(s));
  for (std::size_t i = 0; i < s; ++i) Qs = Qs * Q;
  const double q = Qs.rowwise().sum().maxCoeff();
  if (!(q < 1.0)) {
    out.tail_bound = std::numeric_limits<double>::infinity();
    return out;
  }
  try {
    long double tail = 0.0L;
    long double qj = 1.0L;
    for (std::int64_t j = 0; j < 100000000; ++j) {
      const std::int64_t k = horizon + (j + 1) * static_cast<std::int64_t>(s);
      const long double term = qj * static_cast<long double>(s) * static_cast<long double>(r(k));
      if (!std::isfinite(static_cast<double>(term))) {
        tail = std::numeric_limits<long double>::infinity();
        break;
      }
      tail += term;
      if (term < 1e-18L * tail) break;
      qj *= q;
      if (j == 100000000 - 1) tail = std::numeric_limits<long double>::infinity();
    }
    out.tail_bound = static_cast<double>(tail * mass * fmax);
  } catch (const std::out_of_range&) {
    out.tail_bound = std::numeric_limits<double>::infinity();  // table rate ends
  }
  return out;
}

double restricted_spectral_radius(const FiniteChain& chain, const StateMask& C) {
  require_mask(chain, C, "restricted_spectral_radius");
  std::vector<std::size_t> out;
  for (std::size_t v = 0; v < chain.size(); ++v)
    if (!C[v]) out.push_back(v);
  MatrixXd Q(out.size(), out.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    for (std::size_t j = 0; j < out.size(); ++j)
      Q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = chain(out[i], out[j]);
  return spectral_radius(Q);
}

GeometricMoment exact_geometric_moment(const FiniteChain& chain, const StateMask& C, double kappa) {
  require_mask(chain, C, "exact_geometric_moment");
  if (std::none_of(C.begin(), C.end(), [](bool b) { return b; })) {
    throw std::invalid_argument("exact_geometric_moment: C is empty");
  }
  if (!(kappa > 0.0)) throw std::invalid_argument("exact_geometric_moment: kappa must be positive");
  const std::size_t n = chain.size();
  std::vector<std::size_t> out;
  for (std::size_t v = 0; v < n; ++v)
    if (!C[v]) out.push_back(v);
  const auto m = static_cast<Eigen::Index>(out.size());

  GeometricMoment g;
  g.spectral_radius = kappa * restricted_spectral_radius(chain, C);
  if (g.spectral_radius >= 1.0) {
    g.divergent = true;
    return g;
  }
  auto mass_in_C = [&](std::size_t x) {
    double s = 0.0;
    for (std::size_t y = 0; y < n; ++y)
      if (C[y]) s += chain(x, y);
    return s;
  };
  VectorXd zc = VectorXd::Zero(m);
  if (m > 0) {
    MatrixXd A = MatrixXd::Identity(m, m);
    VectorXd rhs(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      for (Eigen::Index j = 0; j < m; ++j) A(i, j) -= kappa * chain(out[i], out[j]);
      rhs(i) = kappa * mass_in_C(out[i]);
    }
    zc = A.partialPivLu().solve(rhs);
  }
  g.z.assign(n, 0.0);
  for (Eigen::Index i = 0; i < m; ++i) g.z[out[i]] = zc(i);
  for (std::size_t x = 0; x < n; ++x) {
    if (!C[x]) continue;
    double s = mass_in_C(x);
    for (Eigen::Index j = 0; j < m; ++j) s += chain(x, out[j]) * zc(j);
    g.z[x] = kappa * s;
  }
  return g;
}

MinorizationWitness find_minorization(const FiniteChain& chain, const StateMask& C, int n0) {
  require_mask(chain, C, "find_minorization");
  if (n0 < 1) throw std::invalid_argument("find_minorization: n0 must be >= 1");
  const std::size_t n = chain.size();
  std::vector<double> lower(n, std::numeric_limits<double>::infinity());
  bool any = false;
  for (std::size_t x = 0; x < n; ++x) {
    if (!C[x]) continue;
    any = true;
    const auto row = distribution_after(chain, x, n0);
    for (std::size_t y = 0; y < n; ++y) lower[y] = std::min(lower[y], row[y]);
  }
  if (!any) throw std::invalid_argument("find_minorization: C is empty");
  MinorizationWitness w;
  w.C = C;
  w.n0 = n0;
  w.epsilon = std::accumulate(lower.begin(), lower.end(), 0.0);
  if (!(w.epsilon > 0.0)) throw std::runtime_error(fmt::format("C is not small at n0={}", n0));
  w.nu.resize(n);
  for (std::size_t y = 0; y < n; ++y) w.nu[y] = lower[y] / w.epsilon;
  return w;
}

bool verify_minorization(const FiniteChain& chain, const MinorizationWitness& w, double tol) {
  for (std::size_t x = 0; x < chain.size(); ++x) {
    if (!w.C[x]) continue;
    const auto row = distribution_after(chain, x, w.n0);
    for (std::size_t y = 0; y < chain.size(); ++y)
      if (row[y] < w.epsilon * w.nu[y] - tol) return false;
  }
  return true;
}

PetiteWitness find_petite(const FiniteChain& chain, const StateMask& C, const std::vector<double>& a) {
  require_mask(chain, C, "find_petite");
  double total = 0.0;
  for (double v : a) {
    if (!(v >= 0.0)) throw std::invalid_argument("find_petite: a must be non-negative");
    total += v;
  }
  if (std::fabs(total - 1.0) > 1e-12) throw std::invalid_argument("find_petite: a must sum to 1");
  const std::size_t n = chain.size();
  std::vector<double> lower(n, std::numeric_limits<double>::infinity());
  for (std::size_t x = 0; x < n; ++x) {
    if (!C[x]) continue;
    std::vector<double> mu(n, 0.0), acc(n, 0.0);
    mu[x] = 1.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
      if (k > 0) mu = one_step(chain, mu);
      for (std::size_t y = 0; y < n; ++y) acc[y] += a[k] * mu[y];
    }
    for (std::size_t y = 0; y < n; ++y) lower[y] = std::min(lower[y], acc[y]);
  }
  PetiteWitness w;
  w.a = a;
  w.epsilon = std::accumulate(lower.begin(), lower.end(), 0.0);
  if (!(w.epsilon > 0.0) || !std::isfinite(w.epsilon)) throw std::runtime_error("C is not petite for this a");
  w.nu.resize(n);
  for (std::size_t y = 0; y < n; ++y) w.nu[y] = lower[y] / w.epsilon;
  return w;
}

UnivariateDrift check_univariate_drift(const FiniteChain& chain, const std::vector<double>& V,
                                       const StateMask& C) {
  require_mask(chain, C, "check_univariate_drift");
  const std::size_t n = chain.size();
  if (V.size() != n) throw std::invalid_argument("check_univariate_drift: V size mismatch");
  for (double v : V)
    if (!(v >= 1.0)) throw std::invalid_argument("check_univariate_drift: V must be >= 1");
  UnivariateDrift d;
  d.PV.resize(n);
  simd::matvec(chain.matrix(), V, d.PV);
  d.lambda = 0.0;
  bool any_outside = false;
  for (std::size_t x = 0; x < n; ++x) {
    if (C[x]) continue;
    const double ratio = d.PV[x] / V[x];
    if (!any_outside || ratio > d.lambda) {
      d.lambda = ratio;
      d.argmax = x;
    }
    any_outside = true;
  }
  d.b = 0.0;
  for (std::size_t x = 0; x < n; ++x)
    if (C[x]) d.b = std::max(d.b, d.PV[x] - d.lambda * V[x]);
  d.success = d.lambda < 1.0;
  return d;
}

}  // namespace driftlab
