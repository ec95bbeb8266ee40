#include "driftlab/netctl.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <stdexcept>

#include <fmt/core.h>
#include <fmt/ostream.h>

#include "driftlab/parallel.hpp"
#include "driftlab/simd/kernels.hpp"
#include "simd/scalar_ops.hpp"

namespace driftlab::netctl {

void PlantParams::validate() const {
  if (!(std::fabs(a) >= 1.0)) throw std::invalid_argument(fmt::format("plant needs |a| >= 1 (got {})", a));
  if (b == 0.0 || !std::isfinite(b)) throw std::invalid_argument("plant needs b != 0");
  if (!(noise_std >= 0.0)) throw std::invalid_argument("noise_std must be >= 0");
  if (x0.kind == InitialLaw::Kind::normal && !(x0.std >= 0.0)) throw std::invalid_argument("x0 std must be >= 0");
}

double CoderParams::zoom_out(double a) const { return std::fabs(a) + delta_zoom; }

void CoderParams::validate(const PlantParams& plant) const {
  if (K < 2) throw std::invalid_argument("K must be >= 2");
  if (!(Delta0 > 0.0)) throw std::invalid_argument("Delta0 must be > 0");
  if (!(delta_zoom > 0.0)) throw std::invalid_argument("delta_zoom must be > 0");
  if (!(L > 0.0)) throw std::invalid_argument("L must be > 0");
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("p must lie in (0,1)");
  if (F && !(*F > 0.0)) throw std::invalid_argument("F must be > 0");
  const double lo = std::fabs(plant.a) / static_cast<double>(K);  // |a| 2^{-R'}
  if (!(alpha > lo && alpha < 1.0)) {
    throw std::invalid_argument(fmt::format("alpha must lie in (|a|/K, 1) = ({:.6g}, 1)", lo));
  }
  if (!(alpha * std::pow(zoom_out(plant.a), 1.0 / p - 1.0) < 1.0)) {
    throw std::invalid_argument("alpha (|a|+delta)^{1/p-1} must be < 1");
  }
}

RateVariables rate_variables(int K) {
  if (K < 2) throw std::invalid_argument("K must be >= 2");
  return {std::log2(static_cast<double>(K) + 1.0), std::log2(static_cast<double>(K))};
}

namespace {
void check_quantizer_args(double x, int K, double Delta) {
  if (K < 2) throw std::invalid_argument("K must be >= 2");
  if (!(Delta > 0.0)) throw std::invalid_argument("Delta must be > 0");
  if (!std::isfinite(x)) throw std::invalid_argument("quantizer input must be finite");
}
}  // namespace

double quantize(double x, int K, double Delta) {
  check_quantizer_args(x, K, Delta);
  double value = 0.0;
  std::int32_t bin = 0;
  simd::detail::quantize_one(x, Delta, static_cast<double>(K) / 2.0, static_cast<double>(K - 1), value, bin);
  return value;
}

int quantize_bin(double x, int K, double Delta) {
  check_quantizer_args(x, K, Delta);
  double value = 0.0;
  std::int32_t bin = 0;
  simd::detail::quantize_one(x, Delta, static_cast<double>(K) / 2.0, static_cast<double>(K - 1), value, bin);
  return bin;
}

double qbar(double Delta, double h_abs, int success, const CoderParams& coder, double a) {
  if (h_abs > 1.0 || success == 0) return coder.zoom_out(a);
  return Delta > coder.L ? coder.alpha : 1.0;
}

double stability_margin(double a, double p, double R) {
  const double d = std::exp2(R) - 1.0;
  return a * a * ((1.0 - p) + p / (d * d));
}

double epsilon_budget(const CoderParams& coder, double a) {
  const double z = coder.zoom_out(a);
  const double erase = (1.0 - coder.p) * z * z;
  if (!(erase < 1.0)) {
    throw std::domain_error(fmt::format("zoom-out dominates erasures: (1-p)(|a|+delta)^2 = {:.6g} >= 1", erase));
  }
  return 1.0 - coder.p * coder.alpha * coder.alpha / (1.0 - erase);
}

double bin_size(double delta0, std::int64_t n_alpha, std::int64_t n_zoom, double alpha, double zoom_out) {
  // Evaluated in the log domain so long runs with many zooms in both
  // directions neither underflow nor overflow.
  const long double e = static_cast<long double>(n_alpha) * std::log(static_cast<long double>(alpha)) +
                        static_cast<long double>(n_zoom) * std::log(static_cast<long double>(zoom_out));
  return static_cast<double>(static_cast<long double>(delta0) * std::exp(e));
}

double NetState::Delta(const CoderParams& coder, double a) const {
  return bin_size(delta0, n_alpha, n_zoom, coder.alpha, coder.zoom_out(a));
}

NetState initial_state(const PlantParams& plant, const CoderParams& coder, RandomStream& rng) {
  NetState s;
  s.delta0 = coder.Delta0;
  s.x = plant.x0.mean;
  if (plant.x0.kind == InitialLaw::Kind::normal) s.x += plant.x0.std * rng.normal();
  return s;
}

namespace {

simd::NetStepConstants constants_for(const PlantParams& plant, const CoderParams& coder) {
  return simd::make_net_step_constants(plant.a, plant.b, coder.K, coder.L);
}

void apply_factor(NetState& s, int code) {
  if (code == 1) ++s.n_alpha;
  if (code == 2) ++s.n_zoom;
}

}  // namespace

NetState step(const NetState& s, const PlantParams& plant, const CoderParams& coder, RandomStream& rng,
              Event* event) {
  const double Delta = s.Delta(coder, plant.a);
  const double ups = rng.bernoulli(coder.p) ? 1.0 : 0.0;
  const double w = plant.noise_std * rng.normal();
  const auto c = constants_for(plant, coder);
  double x_next = 0.0, xhat = 0.0, u = 0.0;
  std::uint8_t overflow = 0, code = 0;
  simd::detail::net_step_one(c, s.x, Delta, ups, w, x_next, xhat, u, overflow, code);

  NetState n = s;
  n.x = x_next;
  n.t = s.t + 1;
  apply_factor(n, code);
  n.after_success = ups == 1.0 && overflow == 0;
  if (event) {
    Event& e = *event;
    e.t = s.t;
    e.x = s.x;
    e.Delta = Delta;
    e.h = s.x / (Delta * static_cast<double>(coder.K) / 2.0);
    e.upsilon = ups == 1.0 ? 1 : 0;
    e.overflow = overflow != 0;
    e.xhat = xhat;
    e.u = u;
    e.symbol = overflow ? coder.K + 1 : quantize_bin(s.x, coder.K, Delta) + 1;
    e.received = e.upsilon ? e.symbol : 0;
    e.factor = code;
    e.rx_upsilon = e.received != 0 ? 1 : 0;
    e.rx_overflow = e.received != 0 ? std::optional<bool>(e.received == coder.K + 1) : std::nullopt;
  }
  return n;
}

StopTimes granular_success_times(const std::vector<Event>& events) {
  StopTimes st;
  st.times.push_back(0);
  for (std::size_t k = 1; k < events.size(); ++k) {
    const auto& e = events[k];
    if (e.upsilon == 1 && std::fabs(e.h) <= 1.0 && !e.overflow) st.times.push_back(static_cast<std::int64_t>(k));
  }
  st.truncated = !events.empty() && st.times.back() < static_cast<std::int64_t>(events.size()) - 1;
  return st;
}

std::vector<Event> run(NetState s, const PlantParams& plant, const CoderParams& coder, std::int64_t steps,
                       RandomStream& rng, NetState* final_state) {
  std::vector<Event> events(static_cast<std::size_t>(std::max<std::int64_t>(0, steps)));
  for (auto& e : events) s = step(s, plant, coder, rng, &e);
  if (final_state) *final_state = s;
  return events;
}

void write_events_csv(std::ostream& out, const std::vector<Event>& events) {
  out << "t,x,Delta,Upsilon,overflow,u\n";
  for (const auto& e : events) {
    fmt::print(out, "{},{:.17g},{:.17g},{},{},{:.17g}\n", e.t, e.x, e.Delta, e.upsilon, e.overflow ? 1 : 0, e.u + 0.0);  // no "-0"
  }
}

// ---------------------------------------------------------------------------

State to_state(const NetState& s, const CoderParams& coder, double a) {
  return State{s.x,
               s.Delta(coder, a),
               static_cast<double>(s.n_alpha),
               static_cast<double>(s.n_zoom),
               s.delta0,
               s.after_success ? 1.0 : 0.0};
}

NetState from_state(const State& s) {
  NetState n;
  n.x = s[0];
  n.n_alpha = static_cast<std::int64_t>(s[2]);
  n.n_zoom = static_cast<std::int64_t>(s[3]);
  n.delta0 = s[4];
  n.after_success = s[5] != 0.0;
  return n;
}

NetKernel::NetKernel(PlantParams plant, CoderParams coder) : plant_(plant), coder_(coder) {
  plant_.validate();
  coder_.validate(plant_);
}

std::string NetKernel::id() const {
  return fmt::format("netctl(a={:g},b={:g},sigma={:g},K={},alpha={:g},delta={:g},L={:g},p={:g})", plant_.a, plant_.b,
                     plant_.noise_std, coder_.K, coder_.alpha, coder_.delta_zoom, coder_.L, coder_.p);
}

State NetKernel::sample(const State& x, RandomStream& rng) const {
  return to_state(step(from_state(x), plant_, coder_, rng), coder_, plant_.a);
}

bool NetKernel::valid_state(const State& x) const {
  return x.dim == 6 && std::isfinite(x[0]) && x[4] > 0.0 && x[1] > 0.0;
}

NetKernel as_kernel(const PlantParams& plant, const CoderParams& coder) { return NetKernel(plant, coder); }

StateSet small_set(const CoderParams& coder) {
  const double F = coder.small_set_threshold();
  return [F](const State& s) { return s[1] <= F; };
}

StoppingPolicy success_policy() {
  return StoppingPolicy::event_triggered([](const State& s) { return s[5] != 0.0; }, "after granular success");
}

State grid_state(double x, double Delta) { return State{x, Delta, 0.0, 0.0, Delta, 0.0}; }

// ---------------------------------------------------------------------------

BatchResult simulate_batch(const PlantParams& plant, const CoderParams& coder, const BatchOptions& options) {
  plant.validate();
  coder.validate(plant);
  const std::size_t lanes = std::max<std::size_t>(1, options.lanes);
  const std::size_t items = (options.n_traj + lanes - 1) / lanes;
  const auto c = constants_for(plant, coder);
  const auto& table = simd::active();

  std::vector<std::int64_t> record = options.record_at;
  std::sort(record.begin(), record.end());
  struct Partial {
    std::vector<long double> x2, d2;
    std::vector<double> dmax;
  };
  std::vector<Partial> partial(items);
  BatchResult result;
  result.final_states.resize(options.n_traj);

  parallel_for(items, options.threads, [&](std::size_t item) {
    const std::size_t lo = item * lanes;
    const std::size_t n = std::min(options.n_traj, lo + lanes) - lo;
    std::vector<RandomStream> rng;
    rng.reserve(n);
    std::vector<NetState> st(n);
    std::vector<double> x(n), delta(n), ups(n), noise(n), x_next(n), xhat(n), u(n);
    std::vector<std::uint8_t> over(n), code(n);
    for (std::size_t i = 0; i < n; ++i) {
      rng.emplace_back(options.seed, lo + i);
      st[i] = initial_state(plant, coder, rng[i]);
    }
    Partial& part = partial[item];
    part.x2.assign(record.size(), 0.0L);
    part.d2.assign(record.size(), 0.0L);
    part.dmax.assign(record.size(), 0.0);
    std::size_t next_record = 0;
    auto snapshot = [&](std::int64_t t) {
      while (next_record < record.size() && record[next_record] == t) {
        for (std::size_t i = 0; i < n; ++i) {
          const double d = st[i].Delta(coder, plant.a);
          part.x2[next_record] += static_cast<long double>(st[i].x) * st[i].x;
          part.d2[next_record] += static_cast<long double>(d) * d;
          part.dmax[next_record] = std::max(part.dmax[next_record], d);
        }
        ++next_record;
      }
    };
    while (next_record < record.size() && record[next_record] < 0) ++next_record;
    snapshot(0);
    simd::NetStepLanes l{x.data(), delta.data(), ups.data(), noise.data(), x_next.data(), xhat.data(),
                         u.data(), over.data(), code.data(), n};
    for (std::int64_t t = 1; t <= options.steps; ++t) {
      for (std::size_t i = 0; i < n; ++i) {
        x[i] = st[i].x;
        delta[i] = st[i].Delta(coder, plant.a);
        ups[i] = rng[i].bernoulli(coder.p) ? 1.0 : 0.0;
        noise[i] = plant.noise_std * rng[i].normal();
      }
      table.net_step(c, l);
      for (std::size_t i = 0; i < n; ++i) {
        st[i].x = x_next[i];
        st[i].t = t;
        apply_factor(st[i], code[i]);
        st[i].after_success = ups[i] == 1.0 && over[i] == 0;
      }
      snapshot(t);
    }
    for (std::size_t i = 0; i < n; ++i) result.final_states[lo + i] = st[i];
  });

  for (std::size_t r = 0; r < record.size(); ++r) {
    if (record[r] < 0 || record[r] > options.steps) continue;
    long double x2 = 0.0L, d2 = 0.0L;
    double dmax = 0.0;
    for (const auto& p : partial) {
      x2 += p.x2[r];
      d2 += p.d2[r];
      dmax = std::max(dmax, p.dmax[r]);
    }
    const auto N = static_cast<long double>(options.n_traj);
    result.snapshots.push_back({record[r], static_cast<double>(x2 / N), static_cast<double>(d2 / N), dmax});
  }
  return result;
}

// ---------------------------------------------------------------------------

std::vector<InterTime> inter_times(const std::vector<Event>& events) {
  const auto st = granular_success_times(events);
  std::vector<InterTime> out;
  for (std::size_t i = 0; i + 1 < st.times.size(); ++i) {
    out.push_back({events[static_cast<std::size_t>(st.times[i])].Delta, st.times[i + 1] - st.times[i]});
  }
  return out;
}

std::vector<InterTime> large_delta_inter_times(const PlantParams& plant, const CoderParams& coder, double delta0,
                                               double stop_below, std::size_t n_runs, std::uint64_t seed,
                                               unsigned threads) {
  CoderParams start = coder;
  start.Delta0 = delta0;
  std::vector<std::vector<InterTime>> per(n_runs);
  const std::int64_t cap = 1000000;
  parallel_for(n_runs, threads, [&](std::size_t r) {
    RandomStream rng(seed, r);
    NetState s = initial_state(plant, start, rng);
    double delta_T = s.Delta(start, plant.a);
    std::int64_t last = 0;
    Event e;
    for (std::int64_t t = 0; t < cap && delta_T >= stop_below; ++t) {
      s = step(s, plant, start, rng, &e);
      if (t > last && e.upsilon == 1 && !e.overflow) {
        per[r].push_back({delta_T, t - last});
        last = t;
        delta_T = e.Delta;
      }
    }
  });
  std::vector<InterTime> out;
  for (auto& v : per) out.insert(out.end(), v.begin(), v.end());
  return out;
}

StopBoundReport verify_stopbound(const std::vector<InterTime>& samples, double p, const std::vector<double>& grid,
                                 const StopBoundOptions& options) {
  if (grid.empty() || !std::is_sorted(grid.begin(), grid.end())) {
    throw std::invalid_argument("stopbound grid must be non-empty and sorted");
  }
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("p must lie in (0,1)");
  StopBoundReport rep;
  const std::size_t G = grid.size();
  std::vector<std::vector<std::int64_t>> gaps(G);
  for (const auto& s : samples) {
    if (s.Delta < grid.front()) continue;
    const auto j = static_cast<std::size_t>(std::upper_bound(grid.begin(), grid.end(), s.Delta) - grid.begin()) - 1;
    gaps[j].push_back(s.gap);
  }
  for (std::size_t j = 0; j < G; ++j) {
    StopBoundGroup g;
    g.lo = grid[j];
    g.hi = j + 1 < G ? grid[j + 1] : std::numeric_limits<double>::infinity();
    g.n = gaps[j].size();
    if (g.n > 0) {
      const double n = static_cast<double>(g.n);
      for (int k = 1; k <= options.k_max; ++k) {
        std::size_t c = 0;
        for (auto v : gaps[j]) c += v >= k ? 1 : 0;
        TailRow row;
        row.k = k;
        row.tail = static_cast<double>(c) / n;
        row.reference = std::pow(1.0 - p, k - 1);
        row.sigma = std::sqrt(row.reference * (1.0 - row.reference) / n);
        row.ratio = row.tail / row.reference;
        row.lower_ok = row.tail >= row.reference - 3.0 * row.sigma;
        g.lower_ok = g.lower_ok && row.lower_ok;
        g.rows.push_back(row);
      }
    }
    rep.lower_ok = rep.lower_ok && g.lower_ok;
    rep.groups.push_back(std::move(g));
  }

  auto& top = rep.groups.back();
  if (top.n < options.min_group) {
    rep.note = fmt::format("largest-Delta group has {} gaps; need {}", top.n, options.min_group);
  } else {
    bool ok = true;
    for (const auto& row : top.rows) {
      if (row.k > options.k_upper) break;
      const double sr = row.sigma / row.reference;
      ok = ok && row.ratio >= 1.0 - 3.0 * sr && row.ratio <= options.upper_ratio;
    }
    top.upper_ok = ok;
    rep.upper_ok = ok;
  }

  // |ratio - 1| at k = 2 should not grow with Delta (within 3 sigma).
  rep.trend_ok = true;
  std::optional<double> prev;
  for (const auto& g : rep.groups) {
    if (g.n < options.min_group || g.rows.size() < 2) continue;
    const auto& r = g.rows[1];
    const double dev = std::fabs(r.ratio - 1.0);
    if (prev && dev > *prev + 3.0 * r.sigma / r.reference) rep.trend_ok = false;
    prev = dev;
  }

  if (!rep.lower_ok) {
    rep.verdict = Verdict::fail;
  } else if (top.n < options.min_group || !rep.trend_ok) {
    rep.verdict = Verdict::inconclusive;
    if (!rep.trend_ok) rep.note += (rep.note.empty() ? "" : "; ") + std::string("ratio does not approach 1 with Delta");
  } else {
    rep.verdict = rep.upper_ok ? Verdict::pass : Verdict::fail;
  }
  return rep;
}

nlohmann::json to_json(const StopBoundReport& r) {
  nlohmann::json j;
  j["verdict"] = to_string(r.verdict);
  j["lower_ok"] = r.lower_ok;
  j["upper_ok"] = r.upper_ok;
  j["trend_ok"] = r.trend_ok;
  if (!r.note.empty()) j["note"] = r.note;
  auto num = [](double v) -> nlohmann::json {
    if (std::isfinite(v)) return v;
    return v > 0 ? "inf" : (v < 0 ? "-inf" : "nan");
  };
  for (const auto& g : r.groups) {
    nlohmann::json jg{{"lo", num(g.lo)}, {"hi", num(g.hi)}, {"n", g.n}, {"lower_ok", g.lower_ok}};
    if (g.upper_ok) jg["upper_ok"] = *g.upper_ok;
    for (const auto& row : g.rows) {
      jg["rows"].push_back(
          {{"k", row.k}, {"tail", row.tail}, {"reference", row.reference}, {"sigma", row.sigma}, {"ratio", row.ratio}});
    }
    j["groups"].push_back(jg);
  }
  return j;
}

}  // namespace driftlab::netctl
