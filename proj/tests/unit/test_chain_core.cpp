#include <cmath>
#include <sstream>

#include "doctest.h"
#include "driftlab/chain_core.hpp"
#include "driftlab/stats.hpp"

using namespace driftlab;

namespace {
FiniteKernel two_state() { return FiniteKernel(FiniteChain::from_rows({{0.9, 0.1}, {0.2, 0.8}})); }
FiniteKernel flip_flop() { return FiniteKernel(FiniteChain::from_rows({{0, 1}, {1, 0}})); }
StateSet in(std::initializer_list<std::size_t> ids) {
  std::vector<std::size_t> v(ids);
  return [v](const State& x) {
    for (auto i : v)
      if (x.as_index() == i) return true;
    return false;
  };
}
}  // namespace

TEST_CASE("finite chain validation") {
  CHECK_THROWS(FiniteChain::from_rows({{0.5, 0.6}, {0.5, 0.5}}));
  CHECK_THROWS(FiniteChain::from_rows({{1.5, -0.5}, {0.5, 0.5}}));
  CHECK_THROWS(FiniteChain::from_rows({{1.0}, {0.5, 0.5}}));
  CHECK_NOTHROW(FiniteChain::from_rows({{1.0 - 1e-13, 1e-13}, {0.5, 0.5}}));
}

TEST_CASE("simulate: identity kernel, determinism, invalid start") {
  FiniteKernel id(FiniteChain::from_rows({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}));
  const auto t = simulate(id, State::index(2), 10, 1);
  CHECK(t.states.size() == 11);
  for (const auto& s : t.states) CHECK(s.as_index() == 2);
  const auto k = two_state();
  const auto a = simulate(k, State::index(0), 200, 99, 3);
  const auto b = simulate(k, State::index(0), 200, 99, 3);
  CHECK(a.states == b.states);
  CHECK_THROWS(simulate(k, State::index(5), 10, 1));
  CHECK_THROWS(simulate(k, State::index(0), 0, 1));
}

TEST_CASE("rows equal to nu: one-step law matches nu") {
  const std::vector<double> nu{0.2, 0.5, 0.3};
  FiniteKernel k(FiniteChain::from_rows({nu, nu, nu}));
  const int n = 100000;
  std::vector<int> counts(3, 0);
  for (int i = 0; i < n; ++i) ++counts[simulate(k, State::index(0), 1, 5, i).states[1].as_index()];
  for (int j = 0; j < 3; ++j) {
    const double sigma = std::sqrt(nu[j] * (1 - nu[j]) / n);
    CHECK(std::fabs(counts[j] / double(n) - nu[j]) < 3 * sigma);
  }
}

TEST_CASE("deterministic and independent stopping policies") {
  const auto k = two_state();
  const auto t = simulate(k, State::index(0), 10, 3);
  const auto unit = annotate_stopping_times(t, StoppingPolicy::every(1), 0);
  CHECK(unit.stopping_times.size() == 11);
  CHECK_FALSE(unit.truncated);
  const auto three = annotate_stopping_times(t, StoppingPolicy::every(3), 0);
  CHECK(three.stopping_times == std::vector<std::int64_t>{0, 3, 6, 9});
  CHECK(three.truncated);
  CHECK_THROWS(StoppingPolicy::every(0));
  CHECK_THROWS(annotate_stopping_times(
      t, StoppingPolicy::deterministic([](const State&) -> std::int64_t { return 0; }), 0));

  const auto geo = StoppingPolicy::independent(RenewalLaw::geometric(0.5));
  const auto long_path = simulate(k, State::index(0), 200000, 4);
  const auto ann = annotate_stopping_times(long_path, geo, 17);
  RunningMoments gaps;
  for (std::size_t i = 1; i < ann.stopping_times.size(); ++i)
    gaps.add(static_cast<double>(ann.stopping_times[i] - ann.stopping_times[i - 1]));
  CHECK(gaps.count() > 90000);
  CHECK(std::fabs(gaps.mean() - 2.0) < 3 * gaps.stderr_of_mean());
  // renewal draws depend on the seed, not on the path
  CHECK(annotate_stopping_times(long_path, geo, 17).stopping_times == ann.stopping_times);
}

TEST_CASE("event-triggered policy and hitting times") {
  const auto k = two_state();
  const auto t = simulate(k, State::index(0), 500, 8);
  const auto E = in({1});
  const auto ann = annotate_stopping_times(t, StoppingPolicy::event_triggered(E), 0);
  for (std::size_t i = 1; i < ann.stopping_times.size(); ++i) {
    const auto Ti = ann.stopping_times[i];
    CHECK(t.states[Ti].as_index() == 1);
    for (auto s = ann.stopping_times[i - 1] + 1; s < Ti; ++s) CHECK(t.states[s].as_index() != 1);
  }
  // sampled hitting time of B within E lands on the hitting time of B
  const auto sampled = sampled_path(ann);
  const auto gamma = sampled_hitting_time(sampled, E);
  const auto TB = hitting_time(t, E);
  REQUIRE(gamma.has_value());
  REQUIRE(TB.has_value());
  CHECK(ann.stopping_times[*gamma] == *TB);

  FiniteKernel never(FiniteChain::from_rows({{1, 0}, {0, 1}}));
  const auto stuck = annotate_stopping_times(simulate(never, State::index(0), 20, 1),
                                             StoppingPolicy::event_triggered(in({1})), 0);
  CHECK(stuck.stopping_times == std::vector<std::int64_t>{0});
  CHECK(stuck.truncated);
}

TEST_CASE("hitting time examples") {
  Trajectory constant;
  constant.states.assign(5, State::index(0));
  CHECK(hitting_time(constant, in({0})) == 1);
  Trajectory path;
  path.states = {State::index(0), State::index(1), State::index(2)};
  CHECK(hitting_time(path, in({2})) == 2);
  const auto ff = simulate(flip_flop(), State::index(0), 10, 1);
  CHECK(hitting_time(ff, in({0})) == 2);
  const auto two = annotate_stopping_times(ff, StoppingPolicy::every(2), 0);
  for (const auto& s : sampled_path(two)) CHECK(s.as_index() == 0);
  const auto one = annotate_stopping_times(ff, StoppingPolicy::every(1), 0);
  CHECK(sampled_path(one) == ff.states);
}

TEST_CASE("batch results do not depend on the worker count") {
  const auto k = two_state();
  const auto a = simulate_batch(k, State::index(0), 50, 21, 16, 1);
  const auto b = simulate_batch(k, State::index(0), 50, 21, 16, 4);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].states == b[i].states);
}

TEST_CASE("trajectory CSV") {
  const auto t = annotate_stopping_times(simulate(two_state(), State::index(0), 100, 2),
                                         StoppingPolicy::every(3), 0);
  std::ostringstream os;
  write_trajectory_csv(os, t);
  std::istringstream is(os.str());
  std::string line;
  int rows = 0;
  std::getline(is, line);
  CHECK(line == "t,s0,is_stopping_time");
  while (std::getline(is, line)) ++rows;
  CHECK(rows == 101);
}
