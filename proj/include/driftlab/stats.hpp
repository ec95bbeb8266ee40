#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

namespace driftlab {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Welford accumulator. Merging is exact up to rounding and order matters
/// only through rounding; callers merge in a fixed (index) order.
class RunningMoments {
 public:
  void add(double x);
  void merge(const RunningMoments& other);

  std::size_t count() const { return n_; }
  double mean() const { return mean_; }
  /// Unbiased sample variance (0 for fewer than two samples).
  double variance() const;
  double stderr_of_mean() const;
  double min() const { return min_; }
  double max() const { return max_; }

 private:
  std::size_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
  double min_ = std::numeric_limits<double>::infinity();
  double max_ = -std::numeric_limits<double>::infinity();
};

double normal_quantile(double p);

/// Maurer–Pontil empirical-Bernstein deviation at confidence 1 - delta for
/// n samples with sample variance `variance` and range `range`.
double empirical_bernstein_radius(double variance, double range, std::size_t n, double delta);

Interval wilson_interval(std::uint64_t successes, std::uint64_t n, double z);
double clopper_pearson_upper(std::uint64_t successes, std::uint64_t n, double alpha);
double clopper_pearson_lower(std::uint64_t successes, std::uint64_t n, double alpha);

/// Hill tail-index estimate from the k largest values (descending order in
/// `top`, which must hold at least k + 1 entries). Returns +inf when the k
/// largest values are all tied with the (k+1)-th.
double hill_tail_index(const std::vector<double>& top_descending, std::size_t k);

/// Tail index for the heavy-tail guard. Uses Hill when the k + 1 largest
/// values are distinct. With ties (lattice-valued samples) Hill is biased
/// low because every exceedance is a full lattice step, so the slope of
/// log survival against log value over the distinct values is used instead.
/// `n` is the total sample count.
double tail_index(const std::vector<double>& top_descending, std::size_t k, std::size_t n);

/// Confidence bound for a mean, with the heavy-tail treatment used by the
/// drift checkers.
struct MeanBound {
  std::size_t n = 0;
  double mean = 0.0;
  double stderr_of_mean = 0.0;
  double truncation_level = 0.0;    // values above it were clipped for the
                                    // Bernstein term
  double tail_contribution = 0.0;   // (1/n) sum (y - level)^+
  double truncated_mean = 0.0;
  double truncated_variance = 0.0;
  double ucb = 0.0;                 // one-sided upper bound
  double lcb = 0.0;                 // one-sided lower bound
  double hill_alpha = std::numeric_limits<double>::infinity();
  bool heavy_tail = false;          // Hill estimate <= guard threshold
};

struct TailOptions {
  double tail_quantile = 1e-6;   // truncate at the 1 - q empirical quantile
  std::size_t hill_k = 200;      // order statistics used by the Hill guard
  double hill_threshold = 1.0;   // tail index at or below this is "heavy"
};

/// Streaming accumulator for non-negative or arbitrary real samples that
/// keeps the largest values needed for truncation and the Hill estimate.
/// Sample sums are carried in long double.
class TailAwareMean {
 public:
  /// `expected_n` sizes the retained top-order-statistics buffer.
  explicit TailAwareMean(std::size_t expected_n = 0, TailOptions options = {});

  void add(double y);
  void merge(const TailAwareMean& other);

  std::size_t count() const { return n_; }
  double mean() const;
  double max() const { return max_; }
  double min() const { return min_; }

  /// One-sided bounds at level 1 - delta.
  MeanBound bound(double delta) const;

 private:
  std::size_t keep_;
  TailOptions options_;
  std::size_t n_ = 0;
  long double sum_ = 0.0L;
  long double sumsq_ = 0.0L;
  double min_ = std::numeric_limits<double>::infinity();
  double max_ = -std::numeric_limits<double>::infinity();
  std::vector<double> top_;  // min-heap of the largest `keep_` values
};

}  // namespace driftlab
