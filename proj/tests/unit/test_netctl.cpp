#include <cmath>
#include <sstream>

#include "doctest.h"
#include "driftlab/ergodicity_lab.hpp"
#include "driftlab/netctl.hpp"
#include "driftlab/simd/kernels.hpp"

using namespace driftlab;
using namespace driftlab::netctl;

namespace {
PlantParams plant() {
  PlantParams p;
  p.a = 2.0;
  p.b = 1.0;
  p.noise_std = 0.1;
  return p;
}
CoderParams coder() {
  CoderParams c;
  c.K = 3;
  c.alpha = 0.7;
  c.delta_zoom = 0.1;
  c.L = 1.0;
  c.p = 0.9;
  return c;
}
}  // namespace

TEST_CASE("quantizer examples") {
  CHECK(quantize(-0.3, 2, 1.0) == -0.5);
  CHECK(quantize(1.0, 2, 1.0) == 0.5);
  CHECK(quantize(3.0, 2, 1.0) == 0.0);
  CHECK(quantize(-1.0, 2, 1.0) == -0.5);
  CHECK(quantize_bin(3.0, 2, 1.0) == -1);
  CHECK_THROWS(quantize(std::nan(""), 2, 1.0));
  CHECK_THROWS(quantize(0.0, 1, 1.0));
}

TEST_CASE("quantizer granular accuracy") {
  RandomStream rng(1, 0);
  for (int i = 0; i < 100000; ++i) {
    const int K = 2 + static_cast<int>(rng.uniform_index(7));
    const double D = std::exp(4.0 * (rng.uniform() - 0.5));
    const double x = (rng.uniform() - 0.5) * K * D;
    CHECK_LE(std::fabs(quantize(x, K, D) - x), D / 2.0);
  }
  for (int K = 2; K <= 8; ++K)
    for (double D : {0.1, 1.0, 3.7})
      for (int k = 0; k <= K; ++k) {
        const double edge = (k - K / 2.0) * D;
        CHECK_LE(std::fabs(quantize(edge, K, D) - edge), D / 2.0 * (1 + 1e-12));
      }
}

TEST_CASE("qbar, rate variables, margin, budget") {
  const auto c = coder();
  CHECK(qbar(10, 2, 1, c, 2.0) == 2.1);
  CHECK(qbar(10, 0.5, 1, c, 2.0) == 0.7);
  CHECK(qbar(0.5, 0.5, 1, c, 2.0) == 1.0);
  CHECK(qbar(0.5, 0.5, 0, c, 2.0) == 2.1);
  const auto r3 = rate_variables(3);
  CHECK(r3.R == 2.0);
  CHECK(r3.Rprime == doctest::Approx(1.5849625007));
  const auto r2 = rate_variables(2);
  CHECK(r2.R == doctest::Approx(std::log2(3.0)));
  CHECK(r2.Rprime == 1.0);
  CHECK_THROWS(rate_variables(1));
  CHECK(stability_margin(2, 0.9, 2) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(stability_margin(2, 1.0, 1000) == 0.0);
  CHECK(stability_margin(2, 0.0, 2) == 4.0);
  CHECK(epsilon_budget(c, 2.0) == doctest::Approx(0.2110912343).epsilon(1e-9));
  auto near_one = c;
  near_one.p = 1.0 - 1e-12;
  CHECK(epsilon_budget(near_one, 2.0) == doctest::Approx(1.0 - 0.49).epsilon(1e-9));
  auto bad = c;
  bad.p = 0.5;
  try {
    epsilon_budget(bad, 2.0);
    FAIL("expected an error");
  } catch (const std::domain_error& e) {
    CHECK(std::string(e.what()).find("zoom-out dominates erasures") != std::string::npos);
  }
}

TEST_CASE("coder constraints") {
  auto c = coder();
  CHECK_NOTHROW(c.validate(plant()));
  c.alpha = 0.6;  // below |a|/K
  CHECK_THROWS(c.validate(plant()));
  c = coder();
  c.p = 0.3;  // alpha 2.1^{1/p - 1} >= 1
  CHECK_THROWS(c.validate(plant()));
  auto p = plant();
  p.a = 0.5;
  CHECK_THROWS(p.validate());
  p = plant();
  p.b = 0.0;
  CHECK_THROWS(p.validate());
}

TEST_CASE("step: erasure is open loop with zoom out") {
  const auto pl = plant();
  const auto c = coder();
  RandomStream rng(3, 0);
  NetState s;
  s.x = 0.4;
  s.delta0 = 5.0;
  int seen = 0;
  for (int i = 0; i < 200; ++i) {
    Event e;
    const auto n = step(s, pl, c, rng, &e);
    if (e.upsilon == 0) {
      ++seen;
      CHECK(e.u == 0.0);
      CHECK(n.n_zoom == s.n_zoom + 1);
      CHECK(n.n_alpha == s.n_alpha);
      CHECK(e.rx_upsilon == 0);
      CHECK_FALSE(e.rx_overflow.has_value());
    }
    s = n;
    s.x = 0.4;
  }
  CHECK(seen > 5);
}

TEST_CASE("step: granular success contracts to |a| Delta / 2") {
  auto pl = plant();
  pl.noise_std = 1e-12;
  const auto c = coder();
  RandomStream rng(4, 0);
  for (int i = 0; i < 1000; ++i) {
    NetState s;
    s.delta0 = 0.5 + rng.uniform() * 10;
    s.x = (rng.uniform() - 0.5) * 3 * s.delta0;
    Event e;
    const auto n = step(s, pl, c, rng, &e);
    if (e.upsilon == 1) CHECK_LE(std::fabs(n.x), 2.0 * s.delta0 / 2.0 + 1e-9);
  }
}

TEST_CASE("long run: ratios, stopping times, receiver view") {
  const auto pl = plant();
  const auto c = coder();
  RandomStream rng(5, 0);
  NetState s = initial_state(pl, c, rng);
  std::int64_t bad_ratio = 0, bad_rx = 0;
  std::vector<Event> events;
  events.reserve(1000000);
  for (int i = 0; i < 1000000; ++i) {
    Event e;
    const auto n = step(s, pl, c, rng, &e);
    const auto da = n.n_alpha - s.n_alpha, dz = n.n_zoom - s.n_zoom;
    const bool ok = (da == 0 && dz == 0) || (da == 1 && dz == 0) || (da == 0 && dz == 1);
    bad_ratio += ok ? 0 : 1;
    if (e.received != 0) {
      bad_rx += (*e.rx_upsilon != e.upsilon) + (*e.rx_overflow != e.overflow);
    }
    events.push_back(e);
    s = n;
  }
  CHECK(bad_ratio == 0);
  CHECK(bad_rx == 0);
  const auto st = granular_success_times(events);
  for (std::size_t i = 1; i < st.times.size(); ++i) {
    CHECK(st.times[i] > st.times[i - 1]);
    const auto& e = events[static_cast<std::size_t>(st.times[i])];
    CHECK((e.upsilon == 1 && std::fabs(e.h) <= 1.0));
  }
  std::size_t succ = 0;
  for (std::size_t k = 1; k < events.size(); ++k) succ += (events[k].upsilon == 1 && std::fabs(events[k].h) <= 1.0);
  CHECK(succ + 1 == st.times.size());
}

TEST_CASE("granular success times: synthetic lists") {
  std::vector<Event> ev(10);
  for (auto& e : ev) {
    e.upsilon = 0;
    e.h = 0.5;
  }
  ev[3].upsilon = 1;
  ev[7].upsilon = 1;
  const auto st = granular_success_times(ev);
  CHECK(st.times == std::vector<std::int64_t>{0, 3, 7});
  CHECK(st.truncated);
  std::vector<Event> none(5);
  const auto z = granular_success_times(none);
  CHECK(z.times == std::vector<std::int64_t>{0});
  CHECK(z.truncated);
  std::vector<Event> all(6);
  for (auto& e : all) e.upsilon = 1;
  const auto a = granular_success_times(all);
  CHECK(a.times == std::vector<std::int64_t>{0, 1, 2, 3, 4, 5});
  CHECK_FALSE(a.truncated);
}

TEST_CASE("kernel adapter and batch match the native step") {
  const auto pl = plant();
  const auto c = coder();
  const auto k = as_kernel(pl, c);
  RandomStream r1(9, 3), r2(9, 3);
  NetState s = initial_state(pl, c, r1);
  State y = to_state(initial_state(pl, c, r2), c, pl.a);
  for (int t = 0; t < 5000; ++t) {
    s = step(s, pl, c, r1);
    y = k.sample(y, r2);
    REQUIRE(to_state(s, c, pl.a) == y);
  }

  BatchOptions opt;
  opt.n_traj = 37;
  opt.steps = 300;
  opt.seed = 12;
  opt.lanes = 8;
  opt.record_at = {0, 150, 300};
  for (auto isa : {simd::Isa::scalar, simd::Isa::avx2}) {
    if (!simd::isa_supported(isa)) continue;
    simd::force_isa(isa);
    const auto b = simulate_batch(pl, c, opt);
    double x2 = 0.0;
    for (std::size_t i = 0; i < opt.n_traj; ++i) {
      RandomStream rng(opt.seed, i);
      NetState n = initial_state(pl, c, rng);
      for (int t = 0; t < opt.steps; ++t) n = step(n, pl, c, rng);
      CHECK(n.x == b.final_states[i].x);
      CHECK(n.n_alpha == b.final_states[i].n_alpha);
      CHECK(n.n_zoom == b.final_states[i].n_zoom);
      x2 += n.x * n.x;
    }
    CHECK(b.snapshots.size() == 3);
    CHECK(b.snapshots[2].mean_x2 == doctest::Approx(x2 / 37.0).epsilon(1e-12));
  }
  simd::force_isa(simd::detect_isa());
}

TEST_CASE("inter-time tails follow the geometric law at large Delta") {
  const auto pl = plant();
  const auto c = coder();
  const auto big = large_delta_inter_times(pl, c, 1e9, 1e3, 2000, 7);
  CHECK(big.size() > 50000);
  RandomStream rng(8, 0);
  NetState s = initial_state(pl, c, rng);
  auto small = inter_times(run(s, pl, c, 200000, rng));
  small.insert(small.end(), big.begin(), big.end());
  const auto rep = verify_stopbound(small, c.p, {0.0, 1.0, 10.0, 100.0, 1000.0});
  CHECK(rep.lower_ok);
  for (const auto& g : rep.groups)
    if (g.n > 0) CHECK(g.rows[0].tail == 1.0);
  const auto& top = rep.groups.back();
  CHECK(std::fabs(top.rows[1].tail - 0.1) <= 3.0 * top.rows[1].sigma);
  CHECK(top.upper_ok.value_or(false));
}

TEST_CASE("sampled drift ratio of Delta^2 after successes") {
  const auto pl = plant();
  const auto c = coder();
  const auto k = as_kernel(pl, c);
  DriftSpec spec;
  spec.V = [](const State& s) { return s[1] * s[1]; };
  spec.C = small_set(c);
  Budget budget;
  budget.n_samples = 200000;
  const auto est = estimate_sampled_drift(k, success_policy(), spec, {grid_state(0.0, 1e4), grid_state(1e4, 1e6)}, budget);
  const double expect = 0.9 * 0.49 / (1 - 0.1 * 2.1 * 2.1);
  for (const auto& p : est.points) {
    CHECK(p.value.mean / spec.V(p.x) == doctest::Approx(expect).epsilon(0.03));
    CHECK_FALSE(p.value.heavy_tail);
  }
}

TEST_CASE("lln on x^2 and csv output") {
  const auto k = as_kernel(plant(), coder());
  LlnOptions opt;
  opt.horizon = 4000;
  opt.n_reps = 16;
  const auto rep = lln_check(k, [](const State& s) { return s[0] * s[0]; }, grid_state(0.0, 1.0), opt);
  CHECK(std::isfinite(rep.mean));
  std::ostringstream os;
  RandomStream rng(1, 0);
  write_events_csv(os, run(NetState{}, plant(), coder(), 3, rng));
  CHECK(os.str().rfind("t,x,Delta,Upsilon,overflow,u\n0,", 0) == 0);
}
