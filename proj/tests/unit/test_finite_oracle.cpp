#include <cmath>
#include <numeric>

#include "doctest.h"
#include "driftlab/finite_oracle.hpp"
#include "oracles.hpp"

using namespace driftlab;

namespace {
FiniteChain two_state() { return FiniteChain::from_rows({{0.9, 0.1}, {0.2, 0.8}}); }
}

TEST_CASE("stationary distribution") {
  const auto half = stationary(FiniteChain::from_rows({{0.5, 0.5}, {0.5, 0.5}}));
  CHECK(half[0] == doctest::Approx(0.5).epsilon(1e-14));
  const auto c = two_state();
  const auto pi = stationary(c);
  CHECK(std::fabs(pi[0] - 2.0 / 3.0) < 1e-12);
  CHECK(std::fabs(pi[1] - 1.0 / 3.0) < 1e-12);
  CHECK(stationary_residual(c, pi) <= 1e-10);
  try {
    stationary(FiniteChain::from_rows({{1, 0}, {0, 1}}));
    FAIL("identity chain should be rejected");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("{0} {1}") != std::string::npos);
  }
  RandomStream rng(5, 0);
  for (int i = 0; i < 10; ++i) {
    const auto r = oracle::random_positive_chain(7, rng);
    const auto a = stationary(r);
    const auto b = oracle::stationary_power(r);
    for (std::size_t j = 0; j < 7; ++j) CHECK(std::fabs(a[j] - b[j]) < 1e-12);
    CHECK(stationary_residual(r, a) <= 1e-10);
  }
}

TEST_CASE("class structure and period") {
  const auto flip = FiniteChain::from_rows({{0, 1}, {1, 0}});
  CHECK(period(flip) == 2);
  CHECK(period(two_state()) == 1);
  // 0 transient, {1,2} closed
  const auto t = FiniteChain::from_rows({{0.5, 0.5, 0}, {0, 0.3, 0.7}, {0, 0.6, 0.4}});
  const auto cs = communicating_classes(t);
  CHECK_FALSE(cs.irreducible);
  REQUIRE(cs.closed_classes.size() == 1);
  CHECK(cs.closed_classes[0] == std::vector<std::size_t>{1, 2});
  CHECK(stationary(t)[0] == 0.0);
}

TEST_CASE("f-norm distance") {
  const auto c = two_state();
  CHECK(f_norm_distance(c, 0, 1) == doctest::Approx(7.0 / 15.0).epsilon(1e-14));
  const auto rank_one = FiniteChain::from_rows({{0.25, 0.75}, {0.25, 0.75}});
  CHECK(f_norm_distance(rank_one, 0, 1) < 1e-15);
  RandomStream rng(6, 0);
  for (int i = 0; i < 5; ++i) {
    const auto r = oracle::random_positive_chain(5, rng);
    const auto curve = f_norm_curve(r, 0, 50);
    const auto ref = oracle::tv_curve(r, 0, 50);
    for (int n = 0; n <= 50; ++n) {
      CHECK(std::fabs(curve[n] - ref[n]) < 1e-12);
      if (n > 0) CHECK(curve[n] <= curve[n - 1] + 1e-15);
    }
  }
  CHECK_THROWS(f_norm_distance(c, 0, -1));
  CHECK_THROWS(f_norm_distance(c, 0, 1, {0.5, 1.0}));
}

TEST_CASE("SLEM") {
  CHECK(std::fabs(slem(two_state()) - 0.7) < 1e-12);
  CHECK(slem(FiniteChain::from_rows({{0.2, 0.8}, {0.2, 0.8}})) < 1e-14);
  CHECK_THROWS(slem(FiniteChain::from_rows({{0, 1}, {1, 0}})));
  RandomStream rng(7, 0);
  for (int i = 0; i < 10; ++i) {
    const auto r = oracle::random_positive_chain(5, rng);
    const auto d = oracle::tv_curve(r, 0, 40);
    // late decay of the distance tracks the SLEM
    const double s = slem(r);
    if (d[40] > 1e-13) CHECK(std::fabs(std::log(d[40]) / 40.0 - std::log(s)) < 0.5);
  }
}

TEST_CASE("expected hitting sums") {
  const auto c = two_state();
  const std::vector<double> one(2, 1.0);
  const auto B = mask_of(2, {1});
  const auto e = expected_hitting_sum(c, 0, B, one, make_polynomial(0, 1), 2000);
  CHECK(e.value == doctest::Approx(10.0).epsilon(1e-10));
  CHECK(e.tail_bound < 1e-10);
  // absorbing: P(x, B) = 1
  const auto abs = FiniteChain::from_rows({{0, 1}, {0, 1}});
  CHECK(expected_hitting_sum(abs, 0, B, {3.0, 1.0}, make_polynomial(1, 2), 10).value == 6.0);
  // r(k) = 2(k+1): enumerate the single surviving path 0,0,...,0 by hand
  const auto r = make_polynomial(1, 2);
  double brute = 0.0;
  for (int k = 0; k <= 60; ++k) brute += r(k) * std::pow(0.9, k);
  const auto h = expected_hitting_sum(c, 0, B, one, r, 60);
  CHECK(h.value == doctest::Approx(brute).epsilon(1e-13));
  CHECK(200.0 - h.value <= h.tail_bound);
  CHECK(200.0 - h.value >= 0.0);
  // unreachable target
  const auto split = FiniteChain::from_rows({{1, 0}, {0, 1}});
  CHECK_THROWS_AS(expected_hitting_sum(split, 0, B, one, r, 10), std::domain_error);
}

TEST_CASE("hitting sums with unit weights equal classical mean hitting times") {
  RandomStream rng(8, 0);
  for (int i = 0; i < 10; ++i) {
    const auto c = oracle::random_positive_chain(6, rng);
    std::vector<bool> B(6, false);
    B[i % 6] = true;
    const auto m = oracle::mean_hitting_times(c, B);
    for (std::size_t x = 0; x < 6; ++x) {
      const auto h = expected_hitting_sum(c, x, B, std::vector<double>(6, 1.0), make_polynomial(0, 1), 4000);
      CHECK(std::fabs(h.value - m[x]) < 1e-8);
    }
  }
}

TEST_CASE("geometric moments of return times") {
  const auto c = two_state();
  const auto C = mask_of(2, {1});
  const auto g = exact_geometric_moment(c, C, 1.05);
  REQUIRE_FALSE(g.divergent);
  CHECK(g.z[0] == doctest::Approx(21.0 / 11.0).epsilon(1e-13));
  CHECK(exact_geometric_moment(c, C, 1.0 / 0.9).divergent);
  CHECK(exact_geometric_moment(c, C, 1.2).divergent);
  const auto abs = FiniteChain::from_rows({{0, 1}, {0, 1}});
  CHECK(exact_geometric_moment(abs, C, 1.3).z[0] == doctest::Approx(1.3));
  CHECK_THROWS(exact_geometric_moment(c, mask_of(2, {}), 1.1));
}

TEST_CASE("minorization") {
  const auto c = two_state();
  const auto w = find_minorization(c, mask_of(2, {0, 1}), 1);
  CHECK(w.epsilon == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(w.nu[0] == doctest::Approx(2.0 / 3.0));
  CHECK(verify_minorization(c, w));
  const auto single = find_minorization(c, mask_of(2, {1}), 1);
  CHECK(single.epsilon == doctest::Approx(1.0));
  CHECK(single.nu[0] == doctest::Approx(0.2));
  const auto same = FiniteChain::from_rows({{0.3, 0.7}, {0.3, 0.7}});
  CHECK(find_minorization(same, mask_of(2, {0, 1}), 1).epsilon == doctest::Approx(1.0));
  CHECK_THROWS_AS(find_minorization(FiniteChain::from_rows({{0, 1}, {1, 0}}), mask_of(2, {0, 1}), 1),
                  std::runtime_error);
  // the flip-flop is not small at n0 = 1 but is petite for a = (0, 1/2, 1/2)
  const auto p = find_petite(FiniteChain::from_rows({{0, 1}, {1, 0}}), mask_of(2, {0, 1}), {0, 0.5, 0.5});
  CHECK(p.epsilon == doctest::Approx(1.0));
}

TEST_CASE("univariate drift") {
  const auto c = two_state();
  CHECK_FALSE(check_univariate_drift(c, {1, 1}, mask_of(2, {0})).success);
  const auto bd = oracle::birth_death(10, 0.8, 0.0);
  std::vector<double> V(10);
  for (int i = 0; i < 10; ++i) V[i] = std::pow(2.0, i);
  const auto C = mask_of(10, {0});
  const auto d = check_univariate_drift(bd, V, C);
  // interior ratio 0.8/2 + 0.2*2 = 0.8; the top state holds with 0.2
  CHECK(d.success);
  CHECK(d.lambda == doctest::Approx(0.8));
  const auto up = oracle::birth_death(10, 0.1, 0.0);
  const auto f = check_univariate_drift(up, V, C);
  CHECK_FALSE(f.success);
  CHECK(f.lambda > 1.0);
  CHECK(f.argmax >= 1);
}
