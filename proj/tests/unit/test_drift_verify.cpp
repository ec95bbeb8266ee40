#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "driftlab/drift_verify.hpp"
#include "driftlab/finite_oracle.hpp"
#include "oracles.hpp"

using namespace driftlab;

namespace {

std::vector<State> index_grid(std::size_t n) {
  std::vector<State> g;
  for (std::size_t i = 0; i < n; ++i) g.push_back(State::index(i));
  return g;
}

const Clause* find_clause(const DriftCertificate& c, const std::string& name) {
  for (const auto& cl : c.clauses)
    if (cl.name == name) return &cl;
  return nullptr;
}

// Walk on the integers that only ever moves outward.
FunctionKernel outward() {
  return FunctionKernel("outward", 1, [](const State& x, RandomStream&) { return State{x[0] + 1.0}; });
}

FunctionKernel frozen() {
  return FunctionKernel("frozen", 1, [](const State& x, RandomStream&) { return x; });
}

}  // namespace

TEST_CASE("sampled PV under n=1 matches exact PV within 3 sigma") {
  RandomStream rng(7, 0);
  const auto chain = oracle::random_positive_chain(6, rng);
  FiniteKernel k(chain);
  DriftSpec spec;
  spec.V = [](const State& x) { return 1.0 + static_cast<double>(x.as_index() * x.as_index()); };
  spec.C = [](const State& x) { return x.as_index() == 0; };
  std::vector<double> V(6);
  for (std::size_t i = 0; i < 6; ++i) V[i] = spec.V(State::index(i));
  const auto exact = check_univariate_drift(chain, V, mask_of(6, {0}));

  Budget budget;
  budget.n_samples = 20000;
  budget.mode = Budget::Mode::sampled;
  budget.seed = 11;
  const auto est = estimate_sampled_drift(k, StoppingPolicy::every(1), spec, index_grid(6), budget);
  CHECK_FALSE(est.exact);
  for (std::size_t i = 0; i < 6; ++i) {
    const auto& p = est.points[i];
    CHECK(std::fabs(p.value.mean - exact.PV[i]) <= 3.0 * p.value.stderr_of_mean);
    CHECK(p.value.ucb >= p.value.mean);
  }
  CHECK(est.lambda_argmax.has_value());

  budget.mode = Budget::Mode::automatic;
  const auto ex = estimate_sampled_drift(k, StoppingPolicy::every(1), spec, index_grid(6), budget);
  CHECK(ex.exact);
  for (std::size_t i = 0; i < 6; ++i) CHECK(ex.points[i].value.mean == doctest::Approx(exact.PV[i]).epsilon(1e-12));
  CHECK(ex.lambda_hat == doctest::Approx(exact.lambda).epsilon(1e-12));
}

TEST_CASE("V = 1 gives exactly 1 for any policy") {
  DriftSpec spec;
  spec.V = [](const State&) { return 1.0; };
  spec.C = [](const State&) { return false; };
  FiniteKernel k(oracle::birth_death(5, 0.4, 0.2));
  Budget budget;
  budget.n_samples = 500;
  budget.mode = Budget::Mode::sampled;
  for (const auto& policy : {StoppingPolicy::every(3), StoppingPolicy::independent(RenewalLaw::geometric(0.3))}) {
    const auto est = estimate_sampled_drift(k, policy, spec, index_grid(5), budget);
    for (const auto& p : est.points) {
      CHECK(p.value.mean == 1.0);
      CHECK(p.value.ucb == doctest::Approx(1.0));
    }
  }
  // exact mode sums probabilities in floating point
  budget.mode = Budget::Mode::exact;
  const auto ex = estimate_sampled_drift(k, StoppingPolicy::every(3), spec, index_grid(5), budget);
  for (const auto& p : ex.points) CHECK(p.value.mean == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("thm5: f-sum under geometric times is 1/p") {
  const double p = 0.25;
  FiniteKernel k(oracle::birth_death(4, 0.5, 0.1));
  DriftSpec spec;
  spec.V = [](const State&) { return 1.0; };
  spec.C = [](const State&) { return true; };
  spec.b = 1.0;
  spec.delta = [p](const State&) { return 1.0 / p; };
  Budget budget;
  budget.n_samples = 40000;
  budget.seed = 3;
  const auto cert = check_thm5(k, StoppingPolicy::independent(RenewalLaw::geometric(p)), spec, index_grid(4), budget);
  int seen = 0;
  for (const auto& c : cert.clauses) {
    if (c.name != "f-sum") continue;
    ++seen;
    const double se = std::sqrt((1 - p) / (p * p) / static_cast<double>(c.n));
    CHECK(std::fabs(c.estimate - 1.0 / p) <= 3.0 * se);
  }
  CHECK(seen == 4);
  CHECK(cert.evidence == "statistical evidence");
}

TEST_CASE("thm5: outward drift fails with a witness") {
  DriftSpec spec;
  spec.V = [](const State& x) { return 1.0 + std::fabs(x[0]); };
  spec.C = [](const State& x) { return std::fabs(x[0]) <= 1.0; };
  spec.b = 5.0;
  Budget budget;
  budget.n_samples = 200;
  const auto cert = check_thm5(outward(), StoppingPolicy::every(1), spec, {State{0.0}, State{5.0}, State{9.0}}, budget);
  CHECK(cert.verdict == Verdict::fail);
  bool witness = false;
  for (const auto& c : cert.clauses)
    if (c.name == "drift" && c.verdict == Verdict::fail) witness = witness || (c.grid_index && *c.grid_index >= 1);
  CHECK(witness);
  CHECK(cert.conclusion == "no conclusion");
}

TEST_CASE("thm5 with n=1 agrees with the one-step Foster check") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    RandomStream rng(seed, 9);
    const std::size_t n = 8;
    const auto chain = oracle::birth_death(n, 0.3 + 0.1 * rng.uniform(), 0.2);
    FiniteKernel k(chain);
    DriftSpec spec;
    spec.V = [](const State& x) { return 1.0 + 4.0 * static_cast<double>(x.as_index()); };
    spec.C = [](const State& x) { return x.as_index() == 0; };
    spec.b = 4.0;
    std::vector<double> V(n);
    for (std::size_t i = 0; i < n; ++i) V[i] = spec.V(State::index(i));
    const auto ud = check_univariate_drift(chain, V, mask_of(n, {0}));
    bool foster = true;
    for (std::size_t i = 0; i < n; ++i) foster = foster && ud.PV[i] <= V[i] - 1.0 + (i == 0 ? 4.0 : 0.0) + 1e-12;
    const auto cert = check_thm5(k, StoppingPolicy::every(1), spec, index_grid(n), Budget{});
    CHECK(cert.evidence == "exact");
    CHECK((cert.verdict == Verdict::pass) == foster);
  }
}

TEST_CASE("thm8: constant n=2 with r(n) = 2(n+1) needs lambda <= 1/6") {
  FiniteKernel k(oracle::birth_death(6, 0.6, 0.1));
  DriftSpec spec;
  spec.V = [](const State&) { return 1.0; };
  spec.C = [](const State&) { return true; };
  spec.b = 1.0;
  const auto r = make_polynomial(1, 2);
  for (double lambda : {1.0 / 6.0, 0.2}) {
    spec.lambda = lambda;
    const auto cert = check_thm8(k, StoppingPolicy::every(2), spec, r, index_grid(6), Budget{});
    const auto* rm = find_clause(cert, "r-moment");
    REQUIRE(rm);
    CHECK(rm->exact);
    CHECK(rm->estimate == 6.0);
    CHECK((rm->verdict == Verdict::pass) == (lambda <= 1.0 / 6.0));
  }
}

TEST_CASE("thm8: r = 2 under geometric(1/2) times has M near 4") {
  DriftSpec spec;
  spec.V = [](const State&) { return 1.0; };
  spec.C = [](const State&) { return true; };
  spec.b = 1.0;
  spec.lambda = 0.4;
  Budget budget;
  budget.n_samples = 40000;
  budget.blocks = 3;
  const auto cert = check_thm8(frozen(), StoppingPolicy::independent(RenewalLaw::geometric(0.5)), spec,
                               make_polynomial(0, 2), {State{0.0}}, budget);
  int blocks = 0;
  for (const auto& c : cert.clauses) {
    if (c.name != "M") continue;
    ++blocks;
    // sd of 2 dT is 2 sqrt(2)
    CHECK(std::fabs(c.estimate - 4.0) <= 3.0 * 2.0 * std::sqrt(2.0) / std::sqrt(static_cast<double>(c.n)));
    CHECK(c.ucb >= c.estimate);
  }
  CHECK(blocks == 3);
  CHECK(cert.constants.at("M_hat_ucb") >= 4.0 - 0.1);
  CHECK(cert.verdict != Verdict::fail);
}

TEST_CASE("thm8: geometric rate is rejected before sampling") {
  DriftSpec spec;
  spec.V = [](const State&) { return 1.0; };
  spec.C = [](const State&) { return true; };
  const auto cert = check_thm8(frozen(), StoppingPolicy::every(1), spec, make_geometric(2, 1), {State{0.0}}, Budget{});
  CHECK(cert.verdict == Verdict::fail);
  CHECK(cert.sample_sizes.empty());
}

TEST_CASE("jensen helper") {
  const auto j = jensen_rate(make_polynomial(1, 2), 16.0, 0.25);
  CHECK(j.s == doctest::Approx(2.0));
  CHECK(std::pow(16.0, 1.0 / j.s) <= 4.0 + 1e-12);
  CHECK(j.rate(3) == doctest::Approx(std::sqrt(8.0)));
  CHECK(jensen_rate(make_polynomial(1, 2), 2.0, 0.25).s == 1.0);
}

TEST_CASE("corollary 9") {
  const auto r = make_polynomial(1, 2);
  const auto one = [](const State&) -> std::int64_t { return 1; };
  const auto ok = check_corollary9(one, r, 0.25, index_grid(3));
  CHECK(ok.verdict == Verdict::pass);
  CHECK(ok.constants.at("M") == 6.0);
  CHECK(ok.evidence == "exact");
  CHECK(check_corollary9(one, r, 0.26, index_grid(3)).verdict == Verdict::fail);
  CHECK_THROWS_AS(check_corollary9([](const State&) -> std::int64_t { return 0; }, r, 0.25, index_grid(3)),
                  std::invalid_argument);
  CHECK(check_corollary9(one, make_geometric(2, 1), 0.25, index_grid(3)).verdict == Verdict::fail);
  const auto unbounded = check_corollary9(
      [](const State& x) -> std::int64_t { return static_cast<std::int64_t>(x.as_index()) * 1000 + 1; }, r, 1e-9,
      index_grid(5), 2000);
  CHECK(unbounded.verdict == Verdict::inconclusive);
}

TEST_CASE("connor-fort") {
  FiniteKernel k(oracle::birth_death(5, 0.6, 0.1));
  DriftSpec spec;
  spec.V = [](const State& x) { return 10.0 + 2.0 * static_cast<double>(x.as_index()); };
  spec.C = [](const State& x) { return x.as_index() <= 1; };
  spec.lambda = 0.95;
  spec.b = 5.0;
  Budget budget;
  budget.n_samples = 2000;
  budget.horizon = 2000;
  const auto policy = StoppingPolicy::independent(RenewalLaw::geometric(0.5));
  const auto sq = check_connor_fort(k, policy, spec, [](double t) { return 2.0 * std::sqrt(t) + 2.0; }, "2sqrt(t)+2",
                                    index_grid(5), budget);
  CHECK(find_clause(sq, "R(t)/t")->verdict == Verdict::pass);
  CHECK(find_clause(sq, "R increasing")->verdict == Verdict::pass);
  bool caveat = false;
  for (const auto& c : sq.caveats) caveat = caveat || c == "pi(V) finite: statistical";
  CHECK(caveat);
  const auto t2 = check_connor_fort(k, policy, spec, [](double t) { return t * t; }, "t^2", index_grid(5), budget);
  CHECK(find_clause(t2, "R(t)/t")->verdict == Verdict::fail);
  CHECK(t2.verdict == Verdict::fail);
  try {
    check_connor_fort(k, StoppingPolicy::every(1), spec, [](double t) { return t; }, "t", index_grid(5), budget);
    FAIL("expected an error");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("requires independent stopping times") != std::string::npos);
  }
}

TEST_CASE("geo_random recovers beta from geometric inter-times") {
  DriftSpec spec;
  spec.V = [](const State&) { return 1.0; };
  spec.C = [](const State& x) { return x[0] == 0.0; };
  spec.lambda = 0.05;
  spec.b = 1.0;
  Budget budget;
  budget.n_samples = 100000;
  for (double p : {0.5, 0.3}) {
    const auto cert = check_geo_random(frozen(), StoppingPolicy::independent(RenewalLaw::geometric(p)), spec,
                                       {State{1.0}, State{2.0}}, budget);
    CHECK(std::fabs(cert.constants.at("beta_hat") - (1.0 - p)) <= 0.01);
  }
  // p = 0.9 at beta = 0.1: shifted B close to 0.9, literal B close to 9.
  // Both are upper confidence bounds, so they sit slightly above.
  GeoRandomOptions opt;
  opt.beta = 0.1;
  spec.V = [](const State& x) { return x[0] == 0.0 ? 1.0 : 1.0; };
  spec.lambda = 0.05;
  const auto cert = check_geo_random(frozen(), StoppingPolicy::independent(RenewalLaw::geometric(0.9)), spec,
                                     {State{0.0}, State{1.0}}, budget, opt);
  CHECK(cert.constants.at("B") >= 0.9);
  CHECK(cert.constants.at("B") <= 1.0);
  CHECK(cert.constants.at("B_literal") == doctest::Approx(cert.constants.at("B") / 0.1));
  CHECK(cert.constants.at("composite_literal") == doctest::Approx((1 - cert.constants.at("B_literal") * 0.05) / 0.1));
  CHECK(find_clause(cert, "composite")->verdict == Verdict::pass);
  CHECK(find_clause(cert, "a-moment")->verdict == Verdict::pass);
}

TEST_CASE("geo_random: deterministic unit gaps and an impossible lambda") {
  DriftSpec spec;
  spec.V = [](const State&) { return 1.0; };
  spec.C = [](const State&) { return false; };
  spec.lambda = 0.01;
  Budget budget;
  budget.n_samples = 5000;
  const auto good = check_geo_random(frozen(), StoppingPolicy::every(1), spec, {State{1.0}}, budget);
  CHECK(find_clause(good, "composite")->verdict == Verdict::pass);
  spec.lambda = 0.999;
  const auto bad = check_geo_random(frozen(), StoppingPolicy::independent(RenewalLaw::geometric(0.2)), spec,
                                    {State{1.0}}, budget);
  CHECK(find_clause(bad, "composite")->verdict == Verdict::fail);
  CHECK_FALSE(find_clause(bad, "composite")->note.empty());
}

TEST_CASE("douc") {
  const auto chain = oracle::birth_death(8, 0.6, 0.1);
  FiniteKernel k(chain);
  DriftSpec spec;
  spec.V = [](const State& x) { return 1.0 + 3.0 * static_cast<double>(x.as_index()); };
  spec.C = [](const State& x) { return x.as_index() == 0; };
  spec.b = 3.0;
  std::vector<double> V(8);
  for (std::size_t i = 0; i < 8; ++i) V[i] = spec.V(State::index(i));
  const auto ud = check_univariate_drift(chain, V, mask_of(8, {0}));
  for (double c : {0.5, 1.0, 2.0}) {
    bool classical = true;
    for (std::size_t i = 0; i < 8; ++i) classical = classical && ud.PV[i] <= V[i] - c + (i == 0 ? 3.0 : 0.0) + 1e-12;
    const auto cert = check_douc(k, spec, [c](double) { return c; }, "c", index_grid(8), Budget{});
    CHECK(cert.evidence == "exact");
    CHECK((cert.verdict == Verdict::pass) == classical);
  }
  CHECK(concave_on_log_grid([](double v) { return std::sqrt(v); }, 1.0, 1e6));
  CHECK_NOTHROW(check_douc(k, spec, [](double v) { return 0.01 * std::sqrt(v); }, "sqrt", index_grid(8), Budget{}));
  CHECK_THROWS_AS(check_douc(k, spec, [](double v) { return v * v; }, "v^2", index_grid(8), Budget{}),
                  std::invalid_argument);
}

TEST_CASE("certificate json schema") {
  const auto cert = check_corollary9([](const State&) -> std::int64_t { return 1; }, make_polynomial(1, 2), 0.25,
                                     index_grid(2));
  const auto j = to_json(cert);
  for (const char* key : {"theorem", "verdict", "constants", "clauses", "grid", "seeds", "sample_sizes", "censor_rates"})
    CHECK(j.contains(key));
  CHECK(j["verdict"] == "pass");
  CHECK_FALSE(j["metadata"].contains("timestamp"));
  CHECK(to_json(cert, "2026-01-01T00:00:00Z")["metadata"]["timestamp"] == "2026-01-01T00:00:00Z");
}

TEST_CASE("sampled results do not depend on thread count or chunking") {
  FiniteKernel k(oracle::birth_death(5, 0.5, 0.2));
  DriftSpec spec;
  spec.V = [](const State& x) { return 1.0 + static_cast<double>(x.as_index()); };
  spec.C = [](const State& x) { return x.as_index() == 0; };
  Budget a;
  a.n_samples = 3000;
  a.threads = 1;
  a.chunk = 3000;
  Budget b = a;
  b.threads = 4;
  b.chunk = 256;
  const auto policy = StoppingPolicy::independent(RenewalLaw::geometric(0.4));
  const auto ea = estimate_sampled_drift(k, policy, spec, index_grid(5), a);
  const auto eb = estimate_sampled_drift(k, policy, spec, index_grid(5), b);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(ea.points[i].value.mean == doctest::Approx(eb.points[i].value.mean).epsilon(1e-12));
    CHECK(ea.points[i].n == eb.points[i].n);
  }
}
