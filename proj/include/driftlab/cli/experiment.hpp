#pragma once

// Config-driven experiments behind the command-line subcommands.
//
// Exit codes: 0 pass, 1 fail, 2 inconclusive, 3 config or usage error.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "driftlab/chain_core.hpp"
#include "driftlab/cli/io.hpp"
#include "driftlab/cli/registry.hpp"
#include "driftlab/drift_verify.hpp"
#include "driftlab/netctl.hpp"

namespace driftlab::cli {

enum ExitCode : int { kExitPass = 0, kExitFail = 1, kExitInconclusive = 2, kExitConfig = 3 };

int exit_code(Verdict v);

/// Command-line values that override the config.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::optional<std::string> out;
};

struct Model {
  std::string type;  // "finite", "netctl" or "scripted"
  std::unique_ptr<TransitionKernel> kernel;
  const FiniteChain* chain = nullptr;  // finite only, owned by kernel
  std::optional<netctl::PlantParams> plant;
  std::optional<netctl::CoderParams> coder;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  unsigned threads = 0;
  std::filesystem::path output = "out";

  Model model;
  State x0;
  StoppingPolicy policy;
  DriftSpec drift;
  std::optional<Named<std::function<double(double)>>> phi;  // Douc
  std::optional<Named<std::function<double(double)>>> R;    // Connor-Fort
  std::optional<RateFunction> rate;
  Budget budget;
  std::vector<State> grid;
  std::string theorem;

  std::int64_t horizon = 100;  // simulate
  std::size_t count = 1;
  GeoRandomOptions geo;
  nlohmann::json convergence = nlohmann::json::object();
  nlohmann::json netctl_demo = nlohmann::json::object();
};

/// Validates the whole document up front; relative paths resolve against
/// `base_dir`. Throws ConfigError naming the offending field.
ExperimentConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir,
                              const Overrides& overrides = {});
ExperimentConfig load_config(const std::filesystem::path& path, const Overrides& overrides = {});

const std::vector<std::string>& theorem_ids();

/// Each runner writes its artifacts through `manifest` and returns an exit code.
int run_simulate(const ExperimentConfig& cfg, Manifest& manifest);
DriftCertificate verify(const ExperimentConfig& cfg, const std::string& theorem);
int run_verify(const ExperimentConfig& cfg, const std::string& theorem, Manifest& manifest);
int run_rate(const ExperimentConfig& cfg, Manifest& manifest);
int run_netctl_demo(const ExperimentConfig& cfg, Manifest& manifest);
int run_selftest(std::uint64_t seed, Manifest& manifest);

}  // namespace driftlab::cli
