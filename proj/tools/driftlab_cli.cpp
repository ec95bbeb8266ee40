// driftlab command-line runner.

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "driftlab/cli/experiment.hpp"

namespace cli = driftlab::cli;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::optional<std::string> out;
  bool no_timestamp = false;

  void attach(CLI::App* app, bool need_config) {
    auto* c = app->add_option("--config", config, "JSON experiment config");
    if (need_config) c->required()->check(CLI::ExistingFile);
    else c->check(CLI::ExistingFile);
    app->add_option("--seed", seed, "root seed (overrides the config)");
    app->add_option("--threads", threads, "worker cap; results do not depend on it");
    app->add_option("--out", out, "output directory");
    app->add_flag("--no-timestamp", no_timestamp, "omit the timestamp from manifest.json");
  }

  cli::ExperimentConfig load() const {
    cli::Overrides o{seed, threads, out};
    if (config.empty()) return cli::parse_config(nlohmann::json::object(), ".", o);
    return cli::load_config(config, o);
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"driftlab: drift criteria, convergence rates and networked-control experiments"};
  app.require_subcommand(1);

  Common sim_o, ver_o, rate_o, demo_o, self_o;
  auto* sim = app.add_subcommand("simulate", "write trajectory CSV files");
  sim_o.attach(sim, true);
  auto* ver = app.add_subcommand("verify", "check a drift theorem and write a certificate");
  ver_o.attach(ver, true);
  std::string theorem;
  ver->add_option("--theorem", theorem, "theorem id (overrides the config)");
  auto* rate = app.add_subcommand("rate", "estimate a convergence curve and fit its rate");
  rate_o.attach(rate, true);
  auto* demo = app.add_subcommand("netctl-demo", "networked control stability experiment");
  demo_o.attach(demo, false);
  auto* self = app.add_subcommand("selftest", "quick built-in consistency checks");
  self_o.attach(self, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return cli::kExitConfig;
  }

  try {
    auto run = [](const Common& o, const std::string& command, auto&& body) {
      const auto cfg = o.load();
      cli::Manifest manifest(cfg.output);
      const int code = body(cfg, manifest);
      manifest.finish(command, cfg.seed, o.no_timestamp ? std::string() : cli::utc_timestamp());
      return code;
    };
    if (*sim) return run(sim_o, "simulate", [](const auto& c, auto& m) { return cli::run_simulate(c, m); });
    if (*ver)
      return run(ver_o, "verify", [&](const auto& c, auto& m) {
        const std::string id = theorem.empty() ? c.theorem : theorem;
        if (id.empty()) throw cli::ConfigError("theorem", "missing; pass --theorem or set it in the config");
        return cli::run_verify(c, id, m);
      });
    if (*rate) return run(rate_o, "rate", [](const auto& c, auto& m) { return cli::run_rate(c, m); });
    if (*demo) return run(demo_o, "netctl-demo", [](const auto& c, auto& m) { return cli::run_netctl_demo(c, m); });
    return run(self_o, "selftest", [](const auto& c, auto& m) { return cli::run_selftest(c.seed, m); });
  } catch (const cli::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return cli::kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::kExitConfig;
  }
}
