#pragma once

// Rate functions r: {0,1,...} -> (0, inf) and the bookkeeping around the
// subgeometric rate class (non-decreasing, r(1) >= 2, log r(n)/n decreasing
// to zero).

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "driftlab/state.hpp"

namespace driftlab {

enum class RateFamily { geometric, polynomial, subexponential, table };

std::string to_string(RateFamily f);
RateFamily rate_family_from_string(const std::string& s);

class RateFunction {
 public:
  RateFamily family() const { return family_; }
  /// Named parameters: geometric {zeta, M}, polynomial {alpha, c},
  /// subexponential {c, gamma}. Empty for tables.
  const std::map<std::string, double>& params() const { return params_; }
  const std::vector<double>& table() const { return table_; }

  /// Largest n at which the rate is defined (tables only).
  std::optional<std::int64_t> domain_end() const;

  double operator()(std::int64_t n) const;
  /// log r(n); finite even where r(n) itself overflows.
  double log_eval(std::int64_t n) const;

  std::string label() const;

  bool operator==(const RateFunction& o) const {
    return family_ == o.family_ && params_ == o.params_ && table_ == o.table_;
  }

 private:
  friend RateFunction make_geometric(double, double);
  friend RateFunction make_polynomial(double, double);
  friend RateFunction make_subexponential(double, double);
  friend RateFunction make_table(std::vector<double>);

  RateFamily family_ = RateFamily::polynomial;
  std::map<std::string, double> params_;
  std::vector<double> table_;
};

/// r(n) = M zeta^n.
RateFunction make_geometric(double zeta, double M);
/// r(n) = c (n + 1)^alpha.
RateFunction make_polynomial(double alpha, double c);
/// r(n) = exp(c n^gamma), gamma in (0, 1).
RateFunction make_subexponential(double c, double gamma);
/// r(n) = values[n] for n < values.size().
RateFunction make_table(std::vector<double> values);

/// r^e, kept inside the same family (e > 0).
RateFunction power(const RateFunction& r, double e);

struct Lambda0Report {
  bool passes = false;
  std::int64_t checked_up_to = 0;
  std::optional<std::int64_t> first_non_monotone;   // n with r(n) < r(n-1)
  bool r1_at_least_two = false;
  std::optional<std::int64_t> first_log_ratio_increase;  // n with s(n) > s(n-1)
  double final_slope = 0.0;      // (log r(N) - log r(N/2)) / (N - N/2)
  double reference_slope = 0.0;  // same secant at m = max(2, N/10)
  bool slope_ok = false;         // final_slope <= kSlopeDecay * reference_slope
  std::vector<std::string> failures;
};

/// Required decay of the secant slope of log r between N/10 and N. The
/// ratio is exactly 1 for every geometric rate, about 0.1 for polynomial
/// rates and 10^{gamma-1} for exp(c n^gamma).
inline constexpr double kSlopeDecay = 0.95;

/// Finite-N evidence for the subgeometric class: (a) non-decreasing on
/// 0..N, (b) r(1) >= 2, (c) s(n) = log r(n)/n non-increasing on 1..N and
/// the slope of log r still decaying at N (s tends to 0 rather than to a
/// positive constant). Tables are checked on their domain only.
Lambda0Report lambda0_membership(const RateFunction& r, std::int64_t N);

/// r(m+n) <= r(m) r(n) (1 + 1e-12) on `trials` uniform pairs in [0, N]^2.
/// Tables are checked exhaustively on their domain instead.
bool submultiplicativity_check(const RateFunction& r, int trials, std::int64_t N,
                               std::uint64_t seed = 0x5eed);

/// sum_{k=0}^n f(k) g(n-k).
double convolve(std::span<const double> f, std::span<const double> g, std::int64_t n);

/// Pair of functions on [1, inf) with psi1(x) psi2(y) <= x + y.
struct UndPair {
  std::function<double(double)> psi1;
  std::function<double(double)> psi2;
  std::string label;
  double conjugate_p = 0.0;  // 0 when not built by young_pair
};

/// Validates the pair: inequality on a deterministic sample and at least
/// one component strictly increasing along x = 10^k, k = 1..9. Throws
/// std::invalid_argument otherwise.
UndPair make_und_pair(std::function<double(double)> psi1, std::function<double(double)> psi2,
                      std::string label);

/// psi1(x) = x^{1/p}, psi2(y) = y^{1/q}, 1/p + 1/q = 1 (Young's inequality).
UndPair young_pair(double p);

/// Count of violations of psi1(x) psi2(y) <= x + y on `trials` uniform
/// points of [1, hi]^2.
std::int64_t und_pair_violations(const UndPair& pair, std::int64_t trials, double hi,
                                 std::uint64_t seed);

/// An (f, r)-ergodicity claim about one chain.
struct ErgodicityClaim {
  std::string chain_id;
  std::string f_label;
  StateFunction f;
  std::string r_label;
  std::function<double(std::int64_t)> r;
  std::vector<std::string> provenance;
};

/// (f,1) and (1,r) claims on the same chain give (psi1 o f, psi2 o r).
ErgodicityClaim compose_ergodicity(const ErgodicityClaim& f_claim,
                                   const ErgodicityClaim& r_claim, const UndPair& pair);

nlohmann::json to_json(const RateFunction& r);
RateFunction rate_from_json(const nlohmann::json& j);

}  // namespace driftlab
