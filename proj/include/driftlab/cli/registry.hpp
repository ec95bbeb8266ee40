#pragma once

// Closed registry of named building blocks a config may reference. Nothing
// in a config is evaluated as code; every function comes from here.

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"

#include "driftlab/chain_core.hpp"
#include "driftlab/rate_functions.hpp"

namespace driftlab::cli {

/// Levenshtein distance.
std::size_t edit_distance(const std::string& a, const std::string& b);
/// " (did you mean 'x'?)" for the closest candidate within distance 3, else "".
std::string suggestion(const std::string& name, const std::vector<std::string>& candidates);

template <class F>
struct Named {
  F fn;
  std::string label;
};

const std::vector<std::string>& function_names();
const std::vector<std::string>& set_names();
const std::vector<std::string>& step_count_names();
const std::vector<std::string>& scalar_names();
const std::vector<std::string>& scripted_kernel_names();
const std::vector<std::string>& rate_family_names();

/// {"name": "power", "coord": 0, "exponent": 2, ...}
Named<StateFunction> make_function(const nlohmann::json& spec, const std::string& path);
Named<StateSet> make_set(const nlohmann::json& spec, const std::string& path);
Named<StoppingPolicy::StepCount> make_step_count(const nlohmann::json& spec, const std::string& path);
/// Functions of one real variable (phi for Douc, R for Connor-Fort).
Named<std::function<double(double)>> make_scalar(const nlohmann::json& spec, const std::string& path);
std::unique_ptr<TransitionKernel> make_scripted_kernel(const nlohmann::json& spec, const std::string& path);
RateFunction make_rate(const nlohmann::json& spec, const std::string& path);

}  // namespace driftlab::cli
