#include "driftlab/stats.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

#include <boost/math/distributions/beta.hpp>
#include <boost/math/distributions/normal.hpp>

namespace driftlab {

void RunningMoments::add(double x) {
  ++n_;
  const double d = x - mean_;
  mean_ += d / static_cast<double>(n_);
  m2_ += d * (x - mean_);
  min_ = std::min(min_, x);
  max_ = std::max(max_, x);
}

void RunningMoments::merge(const RunningMoments& o) {
  if (o.n_ == 0) return;
  if (n_ == 0) {
    *this = o;
    return;
  }
  const double n = static_cast<double>(n_ + o.n_);
  const double d = o.mean_ - mean_;
  mean_ += d * static_cast<double>(o.n_) / n;
  m2_ += o.m2_ + d * d * static_cast<double>(n_) * static_cast<double>(o.n_) / n;
  n_ += o.n_;
  min_ = std::min(min_, o.min_);
  max_ = std::max(max_, o.max_);
}

double RunningMoments::variance() const {
  return n_ < 2 ? 0.0 : m2_ / static_cast<double>(n_ - 1);
}

double RunningMoments::stderr_of_mean() const {
  return n_ == 0 ? 0.0 : std::sqrt(variance() / static_cast<double>(n_));
}

double normal_quantile(double p) {
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

double empirical_bernstein_radius(double variance, double range, std::size_t n, double delta) {
  if (n < 2) return std::numeric_limits<double>::infinity();
  const double log_term = std::log(2.0 / delta);
  const double nd = static_cast<double>(n);
  return std::sqrt(2.0 * std::max(variance, 0.0) * log_term / nd) +
         7.0 * range * log_term / (3.0 * (nd - 1.0));
}

Interval wilson_interval(std::uint64_t k, std::uint64_t n, double z) {
  if (n == 0) return {0.0, 1.0};
  const double nd = static_cast<double>(n);
  const double p = static_cast<double>(k) / nd;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nd;
  const double centre = (p + z2 / (2.0 * nd)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / nd + z2 / (4.0 * nd * nd)) / denom;
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

double clopper_pearson_upper(std::uint64_t k, std::uint64_t n, double alpha) {
  if (k >= n) return 1.0;
  return boost::math::quantile(
      boost::math::beta_distribution<double>(static_cast<double>(k) + 1.0,
                                             static_cast<double>(n - k)),
      1.0 - alpha);
}

double clopper_pearson_lower(std::uint64_t k, std::uint64_t n, double alpha) {
  if (k == 0) return 0.0;
  return boost::math::quantile(
      boost::math::beta_distribution<double>(static_cast<double>(k),
                                             static_cast<double>(n - k) + 1.0),
      alpha);
}

double hill_tail_index(const std::vector<double>& top, std::size_t k) {
  if (k == 0 || top.size() < k + 1) return std::numeric_limits<double>::infinity();
  const double threshold = top[k];
  if (!(threshold > 0.0)) return std::numeric_limits<double>::infinity();
  double s = 0.0;
  for (std::size_t i = 0; i < k; ++i) s += std::log(top[i] / threshold);
  if (s <= 0.0) return std::numeric_limits<double>::infinity();
  return static_cast<double>(k) / s;
}

double tail_index(const std::vector<double>& top, std::size_t k, std::size_t n) {
  if (k == 0 || top.size() < k + 1) return std::numeric_limits<double>::infinity();
  bool ties = false;
  for (std::size_t i = 0; i < k && !ties; ++i) ties = top[i] == top[i + 1];
  if (!ties) return hill_tail_index(top, k);
  // (log v, log S(v)) at each distinct value among the k largest; a value
  // tied with top[k] may have copies outside the buffer, so it is skipped.
  std::vector<std::pair<double, double>> pts;
  for (std::size_t i = 0; i < k; ++i) {
    if (top[i] == top[k] || !(top[i] > 0.0)) break;
    if (i + 1 < k && top[i + 1] == top[i]) continue;
    pts.emplace_back(std::log(top[i]), std::log(static_cast<double>(i + 1) / static_cast<double>(n)));
  }
  if (pts.size() < 2) return std::numeric_limits<double>::infinity();
  double mx = 0, my = 0;
  for (auto [x, y] : pts) mx += x, my += y;
  mx /= static_cast<double>(pts.size());
  my /= static_cast<double>(pts.size());
  double sxx = 0, sxy = 0;
  for (auto [x, y] : pts) sxx += (x - mx) * (x - mx), sxy += (x - mx) * (y - my);
  if (!(sxx > 0.0) || !(sxy < 0.0)) return std::numeric_limits<double>::infinity();
  return -sxy / sxx;
}

TailAwareMean::TailAwareMean(std::size_t expected_n, TailOptions options)
    : options_(options) {
  const auto tail_count =
      static_cast<std::size_t>(std::ceil(static_cast<double>(expected_n) * options.tail_quantile));
  keep_ = std::max(tail_count + 2, options.hill_k + 2);
  top_.reserve(keep_);
}

void TailAwareMean::add(double y) {
  ++n_;
  sum_ += y;
  sumsq_ += static_cast<long double>(y) * y;
  min_ = std::min(min_, y);
  max_ = std::max(max_, y);
  if (top_.size() < keep_) {
    top_.push_back(y);
    std::push_heap(top_.begin(), top_.end(), std::greater<>());
  } else if (y > top_.front()) {
    std::pop_heap(top_.begin(), top_.end(), std::greater<>());
    top_.back() = y;
    std::push_heap(top_.begin(), top_.end(), std::greater<>());
  }
}

void TailAwareMean::merge(const TailAwareMean& o) {
  n_ += o.n_;
  sum_ += o.sum_;
  sumsq_ += o.sumsq_;
  min_ = std::min(min_, o.min_);
  max_ = std::max(max_, o.max_);
  keep_ = std::max(keep_, o.keep_);
  for (double y : o.top_) {
    if (top_.size() < keep_) {
      top_.push_back(y);
      std::push_heap(top_.begin(), top_.end(), std::greater<>());
    } else if (y > top_.front()) {
      std::pop_heap(top_.begin(), top_.end(), std::greater<>());
      top_.back() = y;
      std::push_heap(top_.begin(), top_.end(), std::greater<>());
    }
  }
}

double TailAwareMean::mean() const {
  return n_ == 0 ? 0.0 : static_cast<double>(sum_ / static_cast<long double>(n_));
}

MeanBound TailAwareMean::bound(double delta) const {
  MeanBound b;
  b.n = n_;
  if (n_ == 0) {
    b.ucb = std::numeric_limits<double>::infinity();
    b.lcb = -std::numeric_limits<double>::infinity();
    return b;
  }
  const long double nl = static_cast<long double>(n_);
  b.mean = static_cast<double>(sum_ / nl);
  const long double var_all =
      n_ > 1 ? std::max(0.0L, (sumsq_ - sum_ * sum_ / nl) / (nl - 1.0L)) : 0.0L;
  b.stderr_of_mean = static_cast<double>(std::sqrt(var_all / nl));

  std::vector<double> desc(top_);
  std::sort(desc.begin(), desc.end(), std::greater<>());
  const auto m =
      static_cast<std::size_t>(std::floor(static_cast<double>(n_) * options_.tail_quantile));
  const std::size_t level_index = std::min(m, desc.size() - 1);
  const double level = desc[level_index];
  b.truncation_level = level;

  long double excess = 0.0L;
  long double excess_sq = 0.0L;
  for (std::size_t i = 0; i < level_index; ++i) {
    excess += static_cast<long double>(desc[i]) - level;
    excess_sq += static_cast<long double>(desc[i]) * desc[i] - static_cast<long double>(level) * level;
  }
  const long double tsum = sum_ - excess;
  const long double tsq = sumsq_ - excess_sq;
  b.truncated_mean = static_cast<double>(tsum / nl);
  b.truncated_variance =
      n_ > 1 ? static_cast<double>(std::max(0.0L, (tsq - tsum * tsum / nl) / (nl - 1.0L))) : 0.0;
  b.tail_contribution = static_cast<double>(excess / nl);

  const double range = level - min_;
  const double radius = empirical_bernstein_radius(b.truncated_variance, range, n_, delta);
  b.ucb = b.truncated_mean + radius + b.tail_contribution;
  b.lcb = b.truncated_mean - radius;

  const std::size_t k = std::min(options_.hill_k, n_ / 10);
  if (k >= 10 && desc.size() > k) {
    b.hill_alpha = tail_index(desc, k, n_);
    b.heavy_tail = b.hill_alpha <= options_.hill_threshold;
  }
  return b;
}

}  // namespace driftlab
