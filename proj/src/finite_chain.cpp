#include "driftlab/finite_chain.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include <fmt/core.h>

#include "driftlab/rng.hpp"

namespace driftlab {

FiniteChain::FiniteChain(std::vector<double> row_major, std::size_t n,
                         std::vector<std::string> labels)
    : n_(n), p_(std::move(row_major)), labels_(std::move(labels)) {
  if (n_ == 0) throw std::invalid_argument("finite chain needs at least one state");
  if (p_.size() != n_ * n_) throw std::invalid_argument("finite chain: matrix is not N x N");
  for (std::size_t i = 0; i < n_; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n_; ++j) {
      const double v = p_[i * n_ + j];
      if (!(v >= 0.0 && v <= 1.0)) {
        throw std::invalid_argument(fmt::format("finite chain: entry ({},{}) = {} outside [0,1]", i, j, v));
      }
      s += v;
    }
    if (std::fabs(s - 1.0) > 1e-12) {
      throw std::invalid_argument(fmt::format("finite chain: row {} sums to {:.17g}", i, s));
    }
  }
  if (labels_.empty()) {
    labels_.reserve(n_);
    for (std::size_t i = 0; i < n_; ++i) labels_.push_back(std::to_string(i));
  } else if (labels_.size() != n_) {
    throw std::invalid_argument("finite chain: label count does not match N");
  }
}

FiniteChain FiniteChain::from_rows(const std::vector<std::vector<double>>& rows,
                                   std::vector<std::string> labels) {
  const std::size_t n = rows.size();
  std::vector<double> flat;
  flat.reserve(n * n);
  for (const auto& r : rows) {
    if (r.size() != n) throw std::invalid_argument("finite chain: ragged matrix");
    flat.insert(flat.end(), r.begin(), r.end());
  }
  return FiniteChain(std::move(flat), n, std::move(labels));
}

std::string FiniteChain::id() const {
  std::uint64_t h = splitmix64(n_);
  for (double v : p_) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    h = splitmix64(h ^ bits);
  }
  return fmt::format("finite{}-{:016x}", n_, h);
}

}  // namespace driftlab
