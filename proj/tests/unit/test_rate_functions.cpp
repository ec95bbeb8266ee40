#include <cmath>
#include <vector>

#include "doctest.h"
#include "driftlab/rate_functions.hpp"

using namespace driftlab;

TEST_CASE("constructors evaluate their closed forms") {
  const auto p = make_polynomial(1, 2);
  CHECK(p(0) == 2.0);
  CHECK(p(1) == 4.0);
  CHECK(p(5) == 12.0);
  CHECK(p(5) <= p(2) * p(3));
  CHECK(make_polynomial(0, 2)(1000) == 2.0);
  CHECK(make_geometric(2, 1)(3) == 8.0);
  CHECK(make_geometric(1.1, 1)(0) == 1.0);
  CHECK(make_subexponential(1, 0.5)(4) == doctest::Approx(std::exp(2.0)));
  CHECK_THROWS(make_polynomial(-1, 2));
  CHECK_THROWS(make_polynomial(1, 0));
  CHECK_THROWS(make_geometric(1.0, 1));
  CHECK_THROWS(make_subexponential(1, 1.0));
  CHECK_THROWS(make_table({1.0, -1.0}));
}

TEST_CASE("log evaluation stays finite where the value overflows") {
  const auto g = make_geometric(2, 1);
  CHECK(std::isinf(g(5000)));
  CHECK(g.log_eval(5000) == doctest::Approx(5000 * std::log(2.0)));
}

TEST_CASE("subgeometric class membership") {
  CHECK(lambda0_membership(make_polynomial(1, 2), 1000).passes);
  const auto geo = lambda0_membership(make_geometric(2, 1), 100);
  CHECK_FALSE(geo.passes);
  CHECK_FALSE(geo.slope_ok);
  const auto weak = lambda0_membership(make_polynomial(1, 0.75), 100);  // r(1) = 1.5
  CHECK_FALSE(weak.passes);
  CHECK_FALSE(weak.r1_at_least_two);
  const auto dip = lambda0_membership(make_table({2, 3, 2.5, 4, 5}), 10);
  CHECK(dip.first_non_monotone == 2);
  for (double c : {0.7, 1.0, 2.0})
    for (double gamma : {0.25, 0.5, 0.75}) CHECK(lambda0_membership(make_subexponential(c, gamma), 10000).passes);
  for (double alpha : {0.5, 1.0, 3.0, 8.0}) CHECK(lambda0_membership(make_polynomial(alpha, 2), 10000).passes);
  // A large constant makes log r(n)/n fall for a while; the slope test still sees log zeta.
  const auto big = lambda0_membership(make_geometric(1.01, 1e6), 10000);
  CHECK_FALSE(big.slope_ok);
  CHECK(big.final_slope == doctest::Approx(std::log(1.01)));
}

TEST_CASE("submultiplicativity") {
  CHECK(submultiplicativity_check(make_polynomial(2, 2), 1000, 1000));
  CHECK(submultiplicativity_check(make_geometric(2, 1), 1000, 1000));
  CHECK(submultiplicativity_check(make_table({2, 8, 10}), 1, 0));
  CHECK_FALSE(submultiplicativity_check(make_table({1, 1, 3}), 1, 0));
  // c < 1 breaks it: 0.5 (m+n+1) > 0.25 (m+1)(n+1) for small m, n
  CHECK_FALSE(submultiplicativity_check(make_polynomial(1, 0.5), 1000, 10));
}

TEST_CASE("convolution") {
  std::vector<double> ones(10, 1.0), delta(10, 0.0), halves(10), g(10);
  delta[0] = 1.0;
  for (int k = 0; k < 10; ++k) {
    halves[k] = std::pow(2.0, -k - 1);
    g[k] = k * k + 1.0;
  }
  CHECK(convolve(ones, ones, 4) == 5.0);
  CHECK(convolve(delta, g, 6) == g[6]);
  CHECK(convolve(halves, ones, 3) == 15.0 / 16.0);
  for (int n = 0; n < 10; ++n) CHECK(convolve(halves, g, n) == doctest::Approx(convolve(g, halves, n)));
  CHECK_THROWS(convolve(ones, ones, -1));
}

TEST_CASE("Young pairs") {
  const auto y2 = young_pair(2);
  CHECK(y2.psi1(4) * y2.psi2(9) == doctest::Approx(6.0));
  CHECK(y2.psi1(1) * y2.psi2(1) == 1.0);
  const auto y3 = young_pair(3);
  CHECK(y3.psi1(8) * y3.psi2(1) == doctest::Approx(2.0));
  CHECK(und_pair_violations(y3, 10000, 1e6, 99) == 0);
  CHECK_THROWS(young_pair(1.0));
  CHECK_THROWS(make_und_pair([](double) { return 1.0; }, [](double) { return 1.0; }, "flat"));
  CHECK_THROWS(make_und_pair([](double x) { return x; }, [](double y) { return y; }, "too big"));
}

TEST_CASE("composition of ergodicity claims") {
  ErgodicityClaim fc{"chainA", "V", [](const State& x) { return 1.0 + x[0] * x[0]; }, "1",
                     [](std::int64_t) { return 1.0; }, {}};
  const auto r = make_polynomial(2, 2);
  ErgodicityClaim rc{"chainA", "1", [](const State&) { return 1.0; }, r.label(),
                     [r](std::int64_t n) { return r(n); }, {}};
  const auto out = compose_ergodicity(fc, rc, young_pair(2));
  CHECK(out.f(State{3.0}) == doctest::Approx(std::sqrt(10.0)));
  CHECK(out.r(4) == doctest::Approx(std::sqrt(50.0)));
  CHECK(out.provenance.size() == 3);
  rc.chain_id = "chainB";
  CHECK_THROWS(compose_ergodicity(fc, rc, young_pair(2)));
}

TEST_CASE("power of a rate stays in its family") {
  const auto p = power(make_polynomial(2, 4), 0.5);
  CHECK(p.family() == RateFamily::polynomial);
  CHECK(p(3) == doctest::Approx(std::sqrt(4.0 * 16.0)));
  const auto s = power(make_subexponential(2, 0.5), 0.25);
  CHECK(s(9) == doctest::Approx(std::exp(0.5 * 3.0)));
}

TEST_CASE("JSON round trip is exact") {
  for (const auto& r : {make_polynomial(0.1, 2.3), make_geometric(1.0000001, 0.7),
                        make_subexponential(0.3, 0.123456789), make_table({2, 3.3, 1e-7})}) {
    const auto text = to_json(r).dump();
    const auto back = rate_from_json(nlohmann::json::parse(text));
    CHECK(back == r);
  }
}
