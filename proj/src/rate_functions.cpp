#include "driftlab/rate_functions.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/core.h>

#include "driftlab/rng.hpp"

namespace driftlab {

std::string to_string(RateFamily f) {
  switch (f) {
    case RateFamily::geometric: return "geometric";
    case RateFamily::polynomial: return "polynomial";
    case RateFamily::subexponential: return "subexponential";
    case RateFamily::table: return "table";
  }
  return "unknown";
}

RateFamily rate_family_from_string(const std::string& s) {
  if (s == "geometric") return RateFamily::geometric;
  if (s == "polynomial") return RateFamily::polynomial;
  if (s == "subexponential") return RateFamily::subexponential;
  if (s == "table") return RateFamily::table;
  throw std::invalid_argument("unknown rate family '" + s + "'");
}

RateFunction make_geometric(double zeta, double M) {
  if (!(zeta > 1.0) || !std::isfinite(zeta)) throw std::invalid_argument("geometric rate needs zeta > 1");
  if (!(M > 0.0) || !std::isfinite(M)) throw std::invalid_argument("geometric rate needs M > 0");
  RateFunction r;
  r.family_ = RateFamily::geometric;
  r.params_ = {{"zeta", zeta}, {"M", M}};
  return r;
}

RateFunction make_polynomial(double alpha, double c) {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw std::invalid_argument("polynomial rate needs alpha >= 0");
  if (!(c > 0.0) || !std::isfinite(c)) throw std::invalid_argument("polynomial rate needs c > 0");
  RateFunction r;
  r.family_ = RateFamily::polynomial;
  r.params_ = {{"alpha", alpha}, {"c", c}};
  return r;
}

RateFunction make_subexponential(double c, double gamma) {
  if (!(c > 0.0) || !std::isfinite(c)) throw std::invalid_argument("subexponential rate needs c > 0");
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("subexponential rate needs gamma in (0,1)");
  RateFunction r;
  r.family_ = RateFamily::subexponential;
  r.params_ = {{"c", c}, {"gamma", gamma}};
  return r;
}

RateFunction make_table(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("table rate needs at least one value");
  for (double v : values) {
    if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument("table rate values must be positive and finite");
  }
  RateFunction r;
  r.family_ = RateFamily::table;
  r.table_ = std::move(values);
  return r;
}

std::optional<std::int64_t> RateFunction::domain_end() const {
  if (family_ != RateFamily::table) return std::nullopt;
  return static_cast<std::int64_t>(table_.size()) - 1;
}

double RateFunction::log_eval(std::int64_t n) const {
  if (n < 0) throw std::out_of_range("rate evaluated at negative n");
  const double x = static_cast<double>(n);
  switch (family_) {
    case RateFamily::geometric:
      return std::log(params_.at("M")) + x * std::log(params_.at("zeta"));
    case RateFamily::polynomial:
      return std::log(params_.at("c")) + params_.at("alpha") * std::log1p(x);
    case RateFamily::subexponential:
      return params_.at("c") * std::pow(x, params_.at("gamma"));
    case RateFamily::table:
      if (n >= static_cast<std::int64_t>(table_.size())) {
        throw std::out_of_range(fmt::format("table rate undefined at n={}", n));
      }
      return std::log(table_[static_cast<std::size_t>(n)]);
  }
  return 0.0;
}

double RateFunction::operator()(std::int64_t n) const {
  if (n < 0) throw std::out_of_range("rate evaluated at negative n");
  const double x = static_cast<double>(n);
  switch (family_) {
    case RateFamily::geometric: return params_.at("M") * std::pow(params_.at("zeta"), x);
    case RateFamily::polynomial: return params_.at("c") * std::pow(x + 1.0, params_.at("alpha"));
    case RateFamily::subexponential: return std::exp(log_eval(n));
    case RateFamily::table:
      if (n >= static_cast<std::int64_t>(table_.size())) {
        throw std::out_of_range(fmt::format("table rate undefined at n={}", n));
      }
      return table_[static_cast<std::size_t>(n)];
  }
  return 0.0;
}

std::string RateFunction::label() const {
  switch (family_) {
    case RateFamily::geometric:
      return fmt::format("{}*{}^n", params_.at("M"), params_.at("zeta"));
    case RateFamily::polynomial:
      return fmt::format("{}*(n+1)^{}", params_.at("c"), params_.at("alpha"));
    case RateFamily::subexponential:
      return fmt::format("exp({}*n^{})", params_.at("c"), params_.at("gamma"));
    case RateFamily::table:
      return fmt::format("table[{}]", table_.size());
  }
  return "?";
}

RateFunction power(const RateFunction& r, double e) {
  if (!(e > 0.0)) throw std::invalid_argument("rate power needs a positive exponent");
  const auto& p = r.params();
  switch (r.family()) {
    case RateFamily::geometric:
      return make_geometric(std::pow(p.at("zeta"), e), std::pow(p.at("M"), e));
    case RateFamily::polynomial:
      return make_polynomial(p.at("alpha") * e, std::pow(p.at("c"), e));
    case RateFamily::subexponential:
      return make_subexponential(p.at("c") * e, p.at("gamma"));
    case RateFamily::table: {
      std::vector<double> v(r.table());
      for (double& x : v) x = std::pow(x, e);
      return make_table(std::move(v));
    }
  }
  return r;
}

Lambda0Report lambda0_membership(const RateFunction& r, std::int64_t N) {
  if (N < 2) throw std::invalid_argument("lambda0_membership needs N >= 2");
  Lambda0Report rep;
  if (auto end = r.domain_end()) N = std::min(N, *end);
  rep.checked_up_to = N;
  if (N < 2) {
    rep.failures.push_back("table domain too short for the check");
    return rep;
  }

  double prev_log = r.log_eval(0);
  double prev_s = 0.0;
  for (std::int64_t n = 1; n <= N; ++n) {
    const double lr = r.log_eval(n);
    if (!rep.first_non_monotone && lr < prev_log) rep.first_non_monotone = n;
    const double s = lr / static_cast<double>(n);
    if (n > 1 && !rep.first_log_ratio_increase && s > prev_s + 1e-12 * std::fabs(prev_s)) {
      rep.first_log_ratio_increase = n;
    }
    prev_log = lr;
    prev_s = s;
  }
  rep.r1_at_least_two = r(1) >= 2.0;

  auto secant = [&r](std::int64_t n) {
    const std::int64_t half = n / 2;
    return (r.log_eval(n) - r.log_eval(half)) / static_cast<double>(n - half);
  };
  rep.final_slope = secant(N);
  rep.reference_slope = secant(std::max<std::int64_t>(2, N / 10));
  rep.slope_ok = rep.final_slope <= kSlopeDecay * rep.reference_slope;

  if (rep.first_non_monotone) {
    rep.failures.push_back(fmt::format("(a) r decreases at n={}", *rep.first_non_monotone));
  }
  if (!rep.r1_at_least_two) rep.failures.push_back(fmt::format("(b) r(1)={} < 2", r(1)));
  if (rep.first_log_ratio_increase) {
    rep.failures.push_back(
        fmt::format("(c) log r(n)/n increases at n={}", *rep.first_log_ratio_increase));
  }
  if (!rep.slope_ok) {
    rep.failures.push_back(fmt::format("(c) log r(n)/n does not vanish: slope of log r is {} at n={} vs {} at n={}",
                                       rep.final_slope, N, rep.reference_slope, std::max<std::int64_t>(2, N / 10)));
  }
  rep.passes = rep.failures.empty();
  return rep;
}

namespace {
bool submult_pair(const RateFunction& r, std::int64_t m, std::int64_t n) {
  return r.log_eval(m + n) <= r.log_eval(m) + r.log_eval(n) + std::log1p(1e-12);
}
}  // namespace

bool submultiplicativity_check(const RateFunction& r, int trials, std::int64_t N,
                               std::uint64_t seed) {
  if (trials < 1) throw std::invalid_argument("submultiplicativity_check needs trials >= 1");
  if (auto end = r.domain_end()) {
    for (std::int64_t m = 0; m <= *end; ++m)
      for (std::int64_t n = 0; m + n <= *end; ++n)
        if (!submult_pair(r, m, n)) return false;
    return true;
  }
  RandomStream rng(seed, 0);
  const auto span = static_cast<std::uint64_t>(N) + 1;
  for (int t = 0; t < trials; ++t) {
    const auto m = static_cast<std::int64_t>(rng.uniform_index(span));
    const auto n = static_cast<std::int64_t>(rng.uniform_index(span));
    if (!submult_pair(r, m, n)) return false;
  }
  return true;
}

double convolve(std::span<const double> f, std::span<const double> g, std::int64_t n) {
  if (n < 0) throw std::invalid_argument("convolve needs n >= 0");
  const auto un = static_cast<std::size_t>(n);
  if (f.size() <= un || g.size() <= un) throw std::invalid_argument("convolve: sequences shorter than n+1");
  double s = 0.0;
  for (std::size_t k = 0; k <= un; ++k) s += f[k] * g[un - k];
  return s;
}

std::int64_t und_pair_violations(const UndPair& pair, std::int64_t trials, double hi,
                                 std::uint64_t seed) {
  RandomStream rng(seed, 0);
  std::int64_t bad = 0;
  for (std::int64_t t = 0; t < trials; ++t) {
    const double x = 1.0 + (hi - 1.0) * rng.uniform();
    const double y = 1.0 + (hi - 1.0) * rng.uniform();
    if (pair.psi1(x) * pair.psi2(y) > (x + y) * (1.0 + 1e-12)) ++bad;
  }
  return bad;
}

UndPair make_und_pair(std::function<double(double)> psi1, std::function<double(double)> psi2,
                      std::string label) {
  UndPair pair{std::move(psi1), std::move(psi2), std::move(label), 0.0};
  if (und_pair_violations(pair, 1000, 1e6, 0x756e64) != 0) {
    throw std::invalid_argument("pair violates psi1(x) psi2(y) <= x + y");
  }
  auto increasing_tail = [](const std::function<double(double)>& psi) {
    double prev = psi(10.0);
    for (int k = 2; k <= 9; ++k) {
      const double cur = psi(std::pow(10.0, k));
      if (!(cur > prev)) return false;
      prev = cur;
    }
    return true;
  };
  if (!increasing_tail(pair.psi1) && !increasing_tail(pair.psi2)) {
    throw std::invalid_argument("neither component of the pair grows without bound");
  }
  return pair;
}

UndPair young_pair(double p) {
  if (!(p > 1.0)) throw std::invalid_argument("young_pair needs p > 1");
  const double q = p / (p - 1.0);
  UndPair pair = make_und_pair([p](double x) { return std::pow(x, 1.0 / p); },
                               [q](double y) { return std::pow(y, 1.0 / q); },
                               fmt::format("young(p={})", p));
  pair.conjugate_p = p;
  return pair;
}

ErgodicityClaim compose_ergodicity(const ErgodicityClaim& f_claim,
                                   const ErgodicityClaim& r_claim, const UndPair& pair) {
  if (f_claim.chain_id != r_claim.chain_id) {
    throw std::invalid_argument("claims refer to different chains: '" + f_claim.chain_id +
                                "' vs '" + r_claim.chain_id + "'");
  }
  if (!f_claim.f || !r_claim.r) throw std::invalid_argument("claims must carry f and r");
  ErgodicityClaim out;
  out.chain_id = f_claim.chain_id;
  out.f_label = pair.label + ".psi1(" + f_claim.f_label + ")";
  out.r_label = pair.label + ".psi2(" + r_claim.r_label + ")";
  out.f = [f = f_claim.f, psi = pair.psi1](const State& x) { return psi(f(x)); };
  out.r = [r = r_claim.r, psi = pair.psi2](std::int64_t n) { return psi(r(n)); };
  out.provenance = {"f-claim: (" + f_claim.f_label + ", " + f_claim.r_label + ")",
                    "r-claim: (" + r_claim.f_label + ", " + r_claim.r_label + ")",
                    "pair: " + pair.label};
  return out;
}

nlohmann::json to_json(const RateFunction& r) {
  nlohmann::json j;
  j["family"] = to_string(r.family());
  if (r.family() == RateFamily::table) {
    j["values"] = r.table();
  } else {
    j["params"] = nlohmann::json::object();
    for (const auto& [k, v] : r.params()) j["params"][k] = v;
  }
  return j;
}

RateFunction rate_from_json(const nlohmann::json& j) {
  const auto family = rate_family_from_string(j.at("family").get<std::string>());
  if (family == RateFamily::table) return make_table(j.at("values").get<std::vector<double>>());
  const auto& p = j.at("params");
  switch (family) {
    case RateFamily::geometric: return make_geometric(p.at("zeta").get<double>(), p.at("M").get<double>());
    case RateFamily::polynomial: return make_polynomial(p.at("alpha").get<double>(), p.at("c").get<double>());
    case RateFamily::subexponential:
      return make_subexponential(p.at("c").get<double>(), p.at("gamma").get<double>());
    default: break;
  }
  throw std::invalid_argument("unreachable rate family");
}

}  // namespace driftlab
