#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace driftlab {

/// Row-stochastic N x N matrix stored row-major. Entries must lie in [0, 1]
/// and every row must sum to 1 within 1e-12; both are checked once, at
/// construction.
class FiniteChain {
 public:
  FiniteChain(std::vector<double> row_major, std::size_t n, std::vector<std::string> labels = {});
  static FiniteChain from_rows(const std::vector<std::vector<double>>& rows,
                               std::vector<std::string> labels = {});

  std::size_t size() const { return n_; }
  double operator()(std::size_t i, std::size_t j) const { return p_[i * n_ + j]; }
  std::span<const double> row(std::size_t i) const { return {p_.data() + i * n_, n_}; }
  std::span<const double> matrix() const { return p_; }
  const std::vector<std::string>& labels() const { return labels_; }
  /// Short content hash used as the chain id in reports.
  std::string id() const;

 private:
  std::size_t n_;
  std::vector<double> p_;
  std::vector<std::string> labels_;
};

}  // namespace driftlab
