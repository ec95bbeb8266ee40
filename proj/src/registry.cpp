#include "driftlab/cli/registry.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include <fmt/core.h>
#include <fmt/format.h>

#include "driftlab/cli/io.hpp"

namespace driftlab::cli {

using nlohmann::json;

std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

std::string suggestion(const std::string& name, const std::vector<std::string>& candidates) {
  std::size_t best = 4;
  const std::string* pick = nullptr;
  for (const auto& c : candidates) {
    const auto d = edit_distance(name, c);
    if (d < best) best = d, pick = &c;
  }
  return pick ? fmt::format(" (did you mean '{}'?)", *pick) : std::string();
}

namespace {

std::string name_of(const json& spec, const std::string& path, const std::vector<std::string>& names) {
  require_object(spec, path);
  const std::string field = join_path(path, "name");
  if (!spec.contains("name")) throw ConfigError(field, fmt::format("missing; one of {}", fmt::join(names, ", ")));
  const std::string n = get_string(spec, path, "name", "");
  if (std::find(names.begin(), names.end(), n) == names.end())
    throw ConfigError(field, fmt::format("unknown name '{}'", n) + suggestion(n, names));
  return n;
}

std::size_t coord_of(const json& spec, const std::string& path) {
  const auto c = get_u64(spec, path, "coord", 0);
  if (c >= State::max_dim) throw ConfigError(join_path(path, "coord"), fmt::format("must be < {}", State::max_dim));
  return static_cast<std::size_t>(c);
}

double required(const json& spec, const std::string& path, const char* key) {
  auto v = get_optional_number(spec, path, key);
  if (!v) throw ConfigError(join_path(path, key), "missing");
  return *v;
}

std::string g(double v) { return fmt::format("{}", v); }

}  // namespace

const std::vector<std::string>& function_names() {
  static const std::vector<std::string> n{"one", "const", "power", "exp", "sum_powers", "table", "indicator"};
  return n;
}
const std::vector<std::string>& set_names() {
  static const std::vector<std::string> n{"all", "none", "members", "le", "ge", "abs_le", "flag"};
  return n;
}
const std::vector<std::string>& step_count_names() {
  static const std::vector<std::string> n{"const", "table", "log_scaled"};
  return n;
}
const std::vector<std::string>& scalar_names() {
  static const std::vector<std::string> n{"power", "log1p", "linear"};
  return n;
}
const std::vector<std::string>& scripted_kernel_names() {
  static const std::vector<std::string> n{"ar1", "reflected_walk"};
  return n;
}
const std::vector<std::string>& rate_family_names() {
  static const std::vector<std::string> n{"geometric", "polynomial", "subexponential", "table"};
  return n;
}

Named<StateFunction> make_function(const json& spec, const std::string& path) {
  const std::string name = name_of(spec, path, function_names());
  if (name == "one") {
    check_keys(spec, path, {"name"});
    return {[](const State&) { return 1.0; }, "1"};
  }
  if (name == "const") {
    check_keys(spec, path, {"name", "value"});
    const double v = required(spec, path, "value");
    return {[v](const State&) { return v; }, g(v)};
  }
  if (name == "power") {
    check_keys(spec, path, {"name", "coord", "exponent", "scale", "offset"});
    const auto c = coord_of(spec, path);
    const double e = required(spec, path, "exponent");
    const double s = get_number(spec, path, "scale", 1.0), o = get_number(spec, path, "offset", 0.0);
    return {[=](const State& x) { return o + s * std::pow(std::fabs(x[c]), e); },
            fmt::format("{} + {} |x{}|^{}", o, s, c, e)};
  }
  if (name == "exp") {
    check_keys(spec, path, {"name", "coord", "rate", "scale", "offset"});
    const auto c = coord_of(spec, path);
    const double r = required(spec, path, "rate");
    const double s = get_number(spec, path, "scale", 1.0), o = get_number(spec, path, "offset", 0.0);
    return {[=](const State& x) { return o + s * std::exp(r * std::fabs(x[c])); },
            fmt::format("{} + {} exp({} |x{}|)", o, s, r, c)};
  }
  if (name == "sum_powers") {
    check_keys(spec, path, {"name", "coords", "exponent", "scale", "offset"});
    std::vector<std::size_t> coords;
    for (double c : get_numbers(spec, path, "coords")) {
      if (c < 0 || c >= State::max_dim || c != std::floor(c))
        throw ConfigError(join_path(path, "coords"), "coordinates must be integers in [0, 6)");
      coords.push_back(static_cast<std::size_t>(c));
    }
    const double e = required(spec, path, "exponent");
    const double s = get_number(spec, path, "scale", 1.0), o = get_number(spec, path, "offset", 0.0);
    return {[=](const State& x) {
              double sum = 0.0;
              for (auto c : coords) sum += std::pow(std::fabs(x[c]), e);
              return o + s * sum;
            },
            fmt::format("{} + {} sum |x_c|^{} over c in {{{}}}", o, s, e, fmt::join(coords, ","))};
  }
  if (name == "table") {
    check_keys(spec, path, {"name", "values"});
    auto values = get_numbers(spec, path, "values");
    if (values.empty()) throw ConfigError(join_path(path, "values"), "must not be empty");
    return {[values](const State& x) {
              const auto i = x.as_index();
              if (i >= values.size()) throw std::out_of_range("table function: state outside the table");
              return values[i];
            },
            fmt::format("table[{}]", values.size())};
  }
  // indicator
  check_keys(spec, path, {"name", "set", "value"});
  if (!spec.contains("set")) throw ConfigError(join_path(path, "set"), "missing");
  auto set = make_set(spec.at("set"), join_path(path, "set"));
  const double v = get_number(spec, path, "value", 1.0);
  return {[s = set.fn, v](const State& x) { return s(x) ? v : 0.0; }, fmt::format("{} 1[{}]", v, set.label)};
}

Named<StateSet> make_set(const json& spec, const std::string& path) {
  const std::string name = name_of(spec, path, set_names());
  if (name == "all") {
    check_keys(spec, path, {"name"});
    return {[](const State&) { return true; }, "all"};
  }
  if (name == "none") {
    check_keys(spec, path, {"name"});
    return {[](const State&) { return false; }, "none"};
  }
  if (name == "members") {
    check_keys(spec, path, {"name", "indices"});
    std::vector<std::size_t> idx;
    for (double v : get_numbers(spec, path, "indices")) {
      if (v < 0 || v != std::floor(v)) throw ConfigError(join_path(path, "indices"), "indices must be non-negative integers");
      idx.push_back(static_cast<std::size_t>(v));
    }
    return {[idx](const State& x) { return std::find(idx.begin(), idx.end(), x.as_index()) != idx.end(); },
            fmt::format("{{{}}}", fmt::join(idx, ","))};
  }
  if (name == "flag") {
    check_keys(spec, path, {"name", "coord"});
    const auto c = coord_of(spec, path);
    return {[c](const State& x) { return x[c] != 0.0; }, fmt::format("x{} != 0", c)};
  }
  check_keys(spec, path, {"name", "coord", "value"});
  const auto c = coord_of(spec, path);
  const double v = required(spec, path, "value");
  if (name == "le") return {[c, v](const State& x) { return x[c] <= v; }, fmt::format("x{} <= {}", c, v)};
  if (name == "ge") return {[c, v](const State& x) { return x[c] >= v; }, fmt::format("x{} >= {}", c, v)};
  return {[c, v](const State& x) { return std::fabs(x[c]) <= v; }, fmt::format("|x{}| <= {}", c, v)};
}

Named<StoppingPolicy::StepCount> make_step_count(const json& spec, const std::string& path) {
  const std::string name = name_of(spec, path, step_count_names());
  if (name == "const") {
    check_keys(spec, path, {"name", "value"});
    const auto v = get_i64(spec, path, "value", 1);
    if (v < 1) throw ConfigError(join_path(path, "value"), "must be >= 1");
    return {[v](const State&) { return v; }, fmt::format("{}", v)};
  }
  if (name == "table") {
    check_keys(spec, path, {"name", "values"});
    std::vector<std::int64_t> values;
    for (double v : get_numbers(spec, path, "values")) {
      if (v < 1 || v != std::floor(v)) throw ConfigError(join_path(path, "values"), "step counts must be integers >= 1");
      values.push_back(static_cast<std::int64_t>(v));
    }
    return {[values](const State& x) {
              const auto i = x.as_index();
              if (i >= values.size()) throw std::out_of_range("step table: state outside the table");
              return values[i];
            },
            fmt::format("table[{}]", values.size())};
  }
  check_keys(spec, path, {"name", "coord", "scale"});
  const auto c = coord_of(spec, path);
  const double s = get_number(spec, path, "scale", 1.0);
  if (!(s > 0)) throw ConfigError(join_path(path, "scale"), "must be > 0");
  return {[c, s](const State& x) {
            return std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(s * std::log1p(std::fabs(x[c])))));
          },
          fmt::format("max(1, ceil({} log(1 + |x{}|)))", s, c)};
}

Named<std::function<double(double)>> make_scalar(const json& spec, const std::string& path) {
  const std::string name = name_of(spec, path, scalar_names());
  if (name == "power") {
    check_keys(spec, path, {"name", "exponent", "scale", "offset"});
    const double e = required(spec, path, "exponent");
    const double s = get_number(spec, path, "scale", 1.0), o = get_number(spec, path, "offset", 0.0);
    return {[=](double v) { return o + s * std::pow(v, e); }, fmt::format("{} + {} v^{}", o, s, e)};
  }
  if (name == "log1p") {
    check_keys(spec, path, {"name", "scale"});
    const double s = get_number(spec, path, "scale", 1.0);
    return {[s](double v) { return s * std::log1p(v); }, fmt::format("{} log(1 + v)", s)};
  }
  check_keys(spec, path, {"name", "slope", "intercept"});
  const double a = required(spec, path, "slope"), b = get_number(spec, path, "intercept", 0.0);
  return {[a, b](double v) { return b + a * v; }, fmt::format("{} + {} v", b, a)};
}

std::unique_ptr<TransitionKernel> make_scripted_kernel(const json& spec, const std::string& path) {
  require_object(spec, path);
  const std::string field = join_path(path, "id");
  const std::string id = get_string(spec, path, "id", "");
  const auto& names = scripted_kernel_names();
  if (std::find(names.begin(), names.end(), id) == names.end())
    throw ConfigError(field, fmt::format("unknown scripted kernel '{}'", id) + suggestion(id, names));
  const json params = spec.value("params", json::object());
  const std::string ppath = join_path(path, "params");
  if (id == "ar1") {
    check_keys(params, ppath, {"rho", "sigma"});
    const double rho = get_number(params, ppath, "rho", 0.5), sigma = get_number(params, ppath, "sigma", 1.0);
    if (!(sigma >= 0)) throw ConfigError(join_path(ppath, "sigma"), "must be >= 0");
    return std::make_unique<FunctionKernel>(fmt::format("ar1(rho={},sigma={})", rho, sigma), 1,
                                            [rho, sigma](const State& x, RandomStream& rng) {
                                              return State{rho * x[0] + sigma * rng.normal()};
                                            });
  }
  check_keys(params, ppath, {"up", "down"});
  const double up = get_number(params, ppath, "up", 0.3), down = get_number(params, ppath, "down", 0.5);
  if (!(up >= 0 && down >= 0 && up + down <= 1))
    throw ConfigError(ppath, "need up, down >= 0 and up + down <= 1");
  return std::make_unique<FunctionKernel>(fmt::format("reflected_walk(up={},down={})", up, down), 1,
                                          [up, down](const State& x, RandomStream& rng) {
                                            const double u = rng.uniform();
                                            if (u < up) return State{x[0] + 1.0};
                                            if (u < up + down) return State{std::max(0.0, x[0] - 1.0)};
                                            return x;
                                          });
}

RateFunction make_rate(const json& spec, const std::string& path) {
  require_object(spec, path);
  const std::string family = get_string(spec, path, "family", "");
  const auto& names = rate_family_names();
  if (std::find(names.begin(), names.end(), family) == names.end())
    throw ConfigError(join_path(path, "family"), fmt::format("unknown rate family '{}'", family) + suggestion(family, names));
  try {
    if (family == "table") {
      check_keys(spec, path, {"family", "values"});
      return make_table(get_numbers(spec, path, "values"));
    }
    check_keys(spec, path, {"family", "params"});
    const json p = spec.value("params", json::object());
    const std::string pp = join_path(path, "params");
    if (family == "geometric") {
      check_keys(p, pp, {"zeta", "M"});
      return make_geometric(required(p, pp, "zeta"), get_number(p, pp, "M", 1.0));
    }
    if (family == "polynomial") {
      check_keys(p, pp, {"alpha", "c"});
      return make_polynomial(required(p, pp, "alpha"), get_number(p, pp, "c", 2.0));
    }
    check_keys(p, pp, {"c", "gamma"});
    return make_subexponential(required(p, pp, "c"), required(p, pp, "gamma"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path, e.what());
  }
}

}  // namespace driftlab::cli
