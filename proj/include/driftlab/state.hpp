#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <stdexcept>

namespace driftlab {

/// Point of a state space. Finite chains use one coordinate holding the
/// state index; continuous models use up to six real coordinates.
struct State {
  static constexpr std::size_t max_dim = 6;

  std::array<double, max_dim> v{};
  std::uint8_t dim = 0;

  State() = default;
  State(std::initializer_list<double> values) {
    if (values.size() > max_dim) throw std::invalid_argument("State: too many coordinates");
    for (double x : values) v[dim++] = x;
  }

  static State index(std::size_t i) {
    State s;
    s.v[0] = static_cast<double>(i);
    s.dim = 1;
    return s;
  }

  std::size_t as_index() const { return static_cast<std::size_t>(v[0]); }
  double operator[](std::size_t i) const { return v[i]; }
  double& operator[](std::size_t i) { return v[i]; }

  bool operator==(const State& o) const {
    if (dim != o.dim) return false;
    for (std::size_t i = 0; i < dim; ++i)
      if (v[i] != o.v[i]) return false;
    return true;
  }
};

using StateFunction = std::function<double(const State&)>;
using StateSet = std::function<bool(const State&)>;

}  // namespace driftlab
