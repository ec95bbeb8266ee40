#include "driftlab/ergodicity_lab.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include <fmt/core.h>
#include <fmt/ostream.h>

#include "driftlab/parallel.hpp"

namespace driftlab {

namespace {

// Inverse-CDF sampler over a nonnegative weight vector.
class CdfSampler {
 public:
  CdfSampler() = default;
  explicit CdfSampler(const std::vector<double>& w) : cdf_(w.size()) {
    double s = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      s += std::max(0.0, w[i]);
      cdf_[i] = s;
      if (w[i] > 0.0) last_ = i;
    }
    if (!(s > 0.0)) throw std::invalid_argument("sampler weights sum to zero");
  }
  std::size_t draw(double u) const {
    const double t = u * cdf_.back();
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), t);
    const auto i = static_cast<std::size_t>(it - cdf_.begin());
    return i > last_ ? last_ : i;
  }

 private:
  std::vector<double> cdf_;
  std::size_t last_ = 0;
};

constexpr std::uint64_t kBootstrapStream = std::uint64_t{1} << 40;

}  // namespace

IndexSampler stationary_sampler(const FiniteChain& chain) {
  auto s = std::make_shared<CdfSampler>(stationary(chain));
  return [s](RandomStream& rng) { return s->draw(rng.uniform()); };
}

IndexSampler point_sampler(std::size_t y) {
  return [y](RandomStream&) { return y; };
}

CouplingRun coupled_tv_bound(const FiniteChain& chain, const MinorizationWitness& w, std::size_t x0,
                             const IndexSampler& y0_sampler, const CouplingOptions& options) {
  if (w.n0 != 1) {
    throw std::invalid_argument(
        fmt::format("coupling supports one-step minorization only (witness has n0={}); m-step splitting is not implemented",
                    w.n0));
  }
  const std::size_t N = chain.size();
  if (w.C.size() != N || w.nu.size() != N) throw std::invalid_argument("witness does not match the chain");
  if (!(w.epsilon > 0.0 && w.epsilon <= 1.0)) throw std::invalid_argument("witness epsilon must lie in (0,1]");
  if (x0 >= N) throw std::invalid_argument("x0 outside the chain");
  if (options.n_pairs == 0 || options.n_max < 0) throw std::invalid_argument("coupling needs n_pairs > 0 and n_max >= 0");

  std::vector<CdfSampler> rows(N), residual(N);
  for (std::size_t i = 0; i < N; ++i) {
    const auto r = chain.row(i);
    rows[i] = CdfSampler(std::vector<double>(r.begin(), r.end()));
    if (w.C[i] && w.epsilon < 1.0) {
      std::vector<double> res(N);
      for (std::size_t j = 0; j < N; ++j) res[j] = (r[j] - w.epsilon * w.nu[j]) / (1.0 - w.epsilon);
      residual[i] = CdfSampler(res);
    }
  }
  const CdfSampler nu(w.nu);

  CouplingRun run;
  run.witness = w;
  run.seed = options.seed;
  run.coupling_times.assign(options.n_pairs, -1);
  parallel_for(options.n_pairs, options.threads, [&](std::size_t pair) {
    RandomStream rng(options.seed, pair);
    std::size_t x = x0;
    std::size_t y = y0_sampler(rng);
    if (y >= N) throw std::invalid_argument("y0 sampler left the state space");
    if (x == y) {
      run.coupling_times[pair] = 0;
      return;
    }
    for (std::int64_t n = 1; n <= options.n_max; ++n) {
      if (w.C[x] && w.C[y]) {
        if (rng.uniform() < w.epsilon) {
          x = y = nu.draw(rng.uniform());
        } else {
          x = residual[x].draw(rng.uniform());
          y = residual[y].draw(rng.uniform());
        }
      } else {
        x = rows[x].draw(rng.uniform());
        y = rows[y].draw(rng.uniform());
      }
      if (x == y) {
        run.coupling_times[pair] = n;
        return;
      }
    }
  });

  // differ at n  <=>  coupling time > n (or not merged at all)
  std::vector<std::uint64_t> merged_at(static_cast<std::size_t>(options.n_max) + 1, 0);
  for (auto t : run.coupling_times) {
    if (t < 0) {
      ++run.censored;
    } else {
      ++merged_at[static_cast<std::size_t>(t)];
    }
  }
  const double z = normal_quantile(1.0 - (1.0 - options.confidence) / 2.0);
  const auto total = static_cast<std::uint64_t>(options.n_pairs);
  std::uint64_t merged = 0;
  for (std::int64_t n = 0; n <= options.n_max; ++n) {
    merged += merged_at[static_cast<std::size_t>(n)];
    const std::uint64_t differ = total - merged;
    const double p = static_cast<double>(differ) / static_cast<double>(total);
    run.p_differ.push_back(p);
    run.bound.push_back(2.0 * p);
    // Agresti-Coull: keeps a nonzero band when no pair differs.
    const double pt = (static_cast<double>(differ) + 2.0) / (static_cast<double>(total) + 4.0);
    run.sigma.push_back(2.0 * std::sqrt(pt * (1.0 - pt) / (static_cast<double>(total) + 4.0)));
    const auto wi = wilson_interval(differ, total, z);
    run.ci.push_back({2.0 * wi.lo, 2.0 * wi.hi});
  }
  run.censor_rate = static_cast<double>(run.censored) / static_cast<double>(total);
  return run;
}

// ---------------------------------------------------------------------------

Partition singleton_partition(std::size_t n) {
  Partition p;
  p.cells = n;
  p.label = fmt::format("singletons({})", n);
  p.cell = [n](const State& x) {
    const auto i = x.as_index();
    if (i >= n) throw std::out_of_range("state outside the singleton partition");
    return i;
  };
  return p;
}

Partition log_grid_partition(std::size_t dim_a, double lo_a, double hi_a, std::size_t dim_b, double lo_b,
                             double hi_b, std::size_t bins) {
  if (!(lo_a > 0 && hi_a > lo_a && lo_b > 0 && hi_b > lo_b) || bins == 0) {
    throw std::invalid_argument("log grid needs 0 < lo < hi and bins > 0");
  }
  auto bin_of = [bins](double v, double lo, double hi) -> std::size_t {
    const double a = std::fabs(v);
    if (!(a > lo)) return 0;
    if (a >= hi) return bins - 1;
    const auto b = static_cast<std::size_t>(std::log(a / lo) / std::log(hi / lo) * static_cast<double>(bins));
    return std::min(b, bins - 1);
  };
  Partition p;
  p.cells = bins * bins;
  p.label = fmt::format("log{}x{}(|s{}| in [{:g},{:g}], |s{}| in [{:g},{:g}])", bins, bins, dim_a, lo_a, hi_a, dim_b,
                        lo_b, hi_b);
  p.cell = [=](const State& x) { return bin_of(x[dim_a], lo_a, hi_a) * bins + bin_of(x[dim_b], lo_b, hi_b); };
  return p;
}

std::vector<double> reference_histogram(const TransitionKernel& kernel, const State& x0, const Partition& partition,
                                        const ReferenceOptions& options) {
  if (options.length < 1 || options.thin < 1) throw std::invalid_argument("reference run needs length, thin >= 1");
  RandomStream rng(options.seed, 0);
  State x = x0;
  for (std::int64_t t = 0; t < options.burn_in; ++t) x = kernel.sample(x, rng);
  std::vector<std::uint64_t> counts(partition.cells, 0);
  std::uint64_t total = 0;
  for (std::int64_t t = 0; t < options.length; ++t) {
    x = kernel.sample(x, rng);
    if (t % options.thin == 0) {
      ++counts[partition.cell(x)];
      ++total;
    }
  }
  std::vector<double> out(partition.cells);
  for (std::size_t c = 0; c < out.size(); ++c) out[c] = static_cast<double>(counts[c]) / static_cast<double>(total);
  return out;
}

DistanceEstimate empirical_distance(const TransitionKernel& kernel, const State& x0, std::int64_t n,
                                    const Partition& partition, const std::vector<double>& reference,
                                    const DistanceOptions& options) {
  if (reference.size() != partition.cells) throw std::invalid_argument("reference does not match the partition");
  if (options.n_samples == 0 || n < 0) throw std::invalid_argument("empirical_distance needs n >= 0 and samples");
  const std::size_t cells = partition.cells;

  // Sample x_n for each replicate; chunks write their own cell lists.
  const std::size_t chunk = 4096;
  const std::size_t chunks = (options.n_samples + chunk - 1) / chunk;
  std::vector<std::vector<std::uint32_t>> where(chunks);
  parallel_for(chunks, options.threads, [&](std::size_t c) {
    const std::size_t lo = c * chunk, hi = std::min(options.n_samples, lo + chunk);
    where[c].reserve(hi - lo);
    for (std::size_t i = lo; i < hi; ++i) {
      RandomStream rng(options.seed, i);
      State x = x0;
      for (std::int64_t t = 0; t < n; ++t) x = kernel.sample(x, rng);
      where[c].push_back(static_cast<std::uint32_t>(partition.cell(x)));
    }
  });
  std::vector<std::uint32_t> samples;
  samples.reserve(options.n_samples);
  for (auto& w : where) samples.insert(samples.end(), w.begin(), w.end());

  const double inv_n = 1.0 / static_cast<double>(samples.size());
  auto distance_of = [&](const std::vector<std::uint64_t>& counts) {
    double d = 0.0;
    for (std::size_t c = 0; c < cells; ++c) d += std::fabs(static_cast<double>(counts[c]) * inv_n - reference[c]);
    return d;
  };
  std::vector<std::uint64_t> counts(cells, 0);
  for (auto s : samples) ++counts[s];

  DistanceEstimate out;
  out.n = n;
  out.distance = distance_of(counts);

  std::vector<double> boot(options.bootstrap, 0.0);
  parallel_for(options.bootstrap, options.threads, [&](std::size_t b) {
    RandomStream rng(options.seed, kBootstrapStream | b);
    std::vector<std::uint64_t> cb(cells, 0);
    for (std::size_t i = 0; i < samples.size(); ++i) ++cb[samples[rng.uniform_index(samples.size())]];
    boot[b] = distance_of(cb);
  });
  RunningMoments m;
  for (double v : boot) m.add(v);
  out.sigma = options.bootstrap > 1 ? std::sqrt(m.variance()) : 0.0;
  const double z = normal_quantile(1.0 - (1.0 - options.confidence) / 2.0);
  out.ci = {std::max(0.0, out.distance - z * out.sigma), out.distance + z * out.sigma};

  double thin_mass = 0.0;
  std::size_t thin_cells = 0;
  for (std::size_t c = 0; c < cells; ++c) {
    if (reference[c] > 0.0 && reference[c] * static_cast<double>(samples.size()) < 5.0) {
      thin_mass += std::max(reference[c], static_cast<double>(counts[c]) * inv_n);
      ++thin_cells;
    }
  }
  out.note = "distance between cell histograms; it does not see structure inside cells";
  if (thin_cells > 0) {
    out.undersampled = true;
    out.ci.hi += thin_mass;
    out.note += fmt::format("; {} cells expect fewer than 5 samples, interval widened by {:.3g}", thin_cells, thin_mass);
  }
  return out;
}

// ---------------------------------------------------------------------------

void DecayCurve::push(std::int64_t step, double d, double lo, double hi, bool is_exact) {
  n.push_back(step);
  distance.push_back(d);
  ci_lo.push_back(lo);
  ci_hi.push_back(hi);
  exact.push_back(is_exact);
}

DecayCurve exact_decay_curve(const FiniteChain& chain, std::size_t x, std::int64_t n_max) {
  DecayCurve c;
  const auto d = f_norm_curve(chain, x, n_max);
  for (std::size_t i = 0; i < d.size(); ++i) c.push(static_cast<std::int64_t>(i), d[i], d[i], d[i], true);
  return c;
}

DecayCurve coupling_curve(const CouplingRun& run) {
  DecayCurve c;
  for (std::size_t i = 0; i < run.bound.size(); ++i)
    c.push(static_cast<std::int64_t>(i), run.bound[i], run.ci[i].lo, run.ci[i].hi, false);
  return c;
}

namespace {

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

LineFit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  LineFit f;
  f.slope = sxx > 0 ? sxy / sxx : 0.0;
  f.intercept = my - f.slope * mx;
  f.r2 = syy > 0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return f;
}

}  // namespace

RateFit fit_rate(const DecayCurve& curve) {
  RateFit fit;
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < curve.n.size(); ++i) {
    if (curve.n[i] >= 1 && curve.distance[i] > 1e-13 && curve.ci_lo[i] > 0.0) usable.push_back(i);
  }
  if (usable.size() < 8) {
    fit.family = "inconclusive";
    fit.note = fmt::format("{} usable points above the noise floor; need 8", usable.size());
    return fit;
  }
  const std::size_t m = std::max<std::size_t>(8, usable.size() / 2);
  std::vector<double> xn, xlog, y;
  for (std::size_t k = usable.size() - m; k < usable.size(); ++k) {
    const auto i = usable[k];
    xn.push_back(static_cast<double>(curve.n[i]));
    xlog.push_back(std::log(static_cast<double>(curve.n[i])));
    y.push_back(std::log(curve.distance[i]));
  }
  const auto g = least_squares(xn, y);
  const auto p = least_squares(xlog, y);
  fit.points_used = m;
  fit.geometric_rate = std::exp(g.slope);
  fit.geometric_r2 = g.r2;
  fit.polynomial_exponent = p.slope;
  fit.polynomial_r2 = p.r2;
  const bool geometric_decays = fit.geometric_rate < 1.0;
  const bool polynomial_decays = fit.polynomial_exponent < 0.0;
  if (!geometric_decays && !polynomial_decays) {
    fit.family = "inconclusive";
    fit.note = "no decay over the fitted points";
    return fit;
  }
  if (g.r2 >= p.r2) {
    fit.family = "geometric";
    fit.params = {{"rate", fit.geometric_rate}, {"log_intercept", g.intercept}};
    fit.r2 = g.r2;
  } else {
    fit.family = "polynomial";
    fit.params = {{"exponent", fit.polynomial_exponent}, {"log_intercept", p.intercept}};
    fit.r2 = p.r2;
  }
  return fit;
}

void write_decay_csv(std::ostream& out, const DecayCurve& curve) {
  out << "n,distance,ci_lo,ci_hi,exact_flag\n";
  for (std::size_t i = 0; i < curve.n.size(); ++i) {
    fmt::print(out, "{},{:.17g},{:.17g},{:.17g},{}\n", curve.n[i], curve.distance[i], curve.ci_lo[i], curve.ci_hi[i],
               curve.exact[i] ? 1 : 0);
  }
}

nlohmann::json to_json(const RateFit& fit) {
  nlohmann::json j;
  j["best_family"] = fit.family;
  j["params"] = fit.params;
  j["goodness"] = fit.r2;
  j["geometric"] = {{"rate", fit.geometric_rate}, {"r2", fit.geometric_r2}};
  j["polynomial"] = {{"exponent", fit.polynomial_exponent}, {"r2", fit.polynomial_r2}};
  j["points_used"] = fit.points_used;
  if (!fit.note.empty()) j["note"] = fit.note;
  return j;
}

// ---------------------------------------------------------------------------

LlnReport lln_check(const TransitionKernel& kernel, const StateFunction& g, const State& x0,
                    const LlnOptions& options) {
  if (options.horizon < 2 || options.n_reps < 2) throw std::invalid_argument("lln_check needs horizon, n_reps >= 2");
  LlnReport rep;
  rep.averages.assign(options.n_reps, 0.0);
  rep.half_averages.assign(options.n_reps, 0.0);
  const std::int64_t half = options.horizon / 2;
  parallel_for(options.n_reps, options.threads, [&](std::size_t i) {
    RandomStream rng(options.seed, i);
    State x = x0;
    // Running mean, so a constant g averages to itself exactly.
    double mean = 0.0;
    for (std::int64_t t = 0; t < options.horizon; ++t) {
      mean += (g(x) - mean) / static_cast<double>(t + 1);
      if (t + 1 == half) rep.half_averages[i] = mean;
      x = kernel.sample(x, rng);
    }
    rep.averages[i] = mean;
  });
  RunningMoments full, halfm;
  for (std::size_t i = 0; i < options.n_reps; ++i) {
    full.add(rep.averages[i]);
    halfm.add(rep.half_averages[i]);
  }
  rep.mean = full.mean();
  rep.half_mean = halfm.mean();
  rep.dispersion = std::sqrt(full.variance());
  rep.half_dispersion = std::sqrt(halfm.variance());
  const double z = normal_quantile(0.975);
  rep.ci = {rep.mean - z * full.stderr_of_mean(), rep.mean + z * full.stderr_of_mean()};
  for (double a : rep.averages)
    if (std::fabs(a - rep.mean) > 4.0 * rep.dispersion) ++rep.outliers;
  if (options.f && !options.probes.empty()) {
    double s = 0.0;
    for (const auto& p : options.probes) s = std::max(s, std::fabs(g(p)) / options.f(p));
    rep.sup_g_over_f = s;
  }
  const bool shrinks = rep.dispersion <= rep.half_dispersion * (1.0 + 1e-9) || rep.dispersion == 0.0;
  const bool agree = rep.outliers <= options.n_reps / 100;
  rep.pass = shrinks && agree;
  if (!shrinks) {
    rep.note = fmt::format("dispersion grew from {:.4g} to {:.4g}", rep.half_dispersion, rep.dispersion);
  } else if (!agree) {
    rep.note = fmt::format("{} replicates disagree with the pooled mean", rep.outliers);
  }
  return rep;
}

}  // namespace driftlab
