#include "driftlab/cli/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <sstream>

#include <fmt/core.h>
#include <fmt/format.h>

#include "driftlab/ergodicity_lab.hpp"
#include "driftlab/finite_oracle.hpp"
#include "driftlab/parallel.hpp"
#include "driftlab/simd/kernels.hpp"

namespace driftlab::cli {

namespace fs = std::filesystem;
using nlohmann::json;

int exit_code(Verdict v) {
  switch (v) {
    case Verdict::pass: return kExitPass;
    case Verdict::fail: return kExitFail;
    default: return kExitInconclusive;
  }
}

const std::vector<std::string>& theorem_ids() {
  static const std::vector<std::string> ids{"thm5", "thm8", "corollary9", "connor_fort", "geo_random", "douc"};
  return ids;
}

namespace {

// Separate seeds for the independent parts of one experiment.
constexpr std::uint64_t kDescentTag = 0x64657363656e74ULL;
constexpr std::uint64_t kStationaryTag = 0x73746174696f6eULL;
constexpr std::uint64_t kTraceTag = 0x7472616365ULL;

std::uint64_t derived_seed(std::uint64_t seed, std::uint64_t tag) { return splitmix64(seed ^ tag); }

const json& section(const json& doc, const char* key) {
  static const json empty = json::object();
  auto it = doc.find(key);
  return it == doc.end() || it->is_null() ? empty : *it;
}

// --- model ------------------------------------------------------------------

Model parse_model(const json& m, const fs::path& base_dir) {
  const std::string path = "model";
  require_object(m, path);
  Model model;
  model.type = get_string(m, path, "type", "");
  static const std::vector<std::string> types{"finite", "netctl", "scripted"};
  if (std::find(types.begin(), types.end(), model.type) == types.end())
    throw ConfigError("model.type", fmt::format("unknown model type '{}'", model.type) + suggestion(model.type, types));

  if (model.type == "finite") {
    check_keys(m, path, {"type", "matrix", "file", "labels"});
    std::optional<FiniteChain> chain;
    if (m.contains("matrix") == m.contains("file"))
      throw ConfigError(path, "a finite model needs exactly one of 'matrix' or 'file'");
    std::vector<std::string> labels;
    if (m.contains("labels")) {
      if (!m["labels"].is_array()) throw ConfigError("model.labels", "expected an array of strings");
      for (const auto& l : m["labels"]) {
        if (!l.is_string()) throw ConfigError("model.labels", "expected an array of strings");
        labels.push_back(l.get<std::string>());
      }
    }
    if (m.contains("file")) {
      fs::path p = get_string(m, path, "file", "");
      if (p.is_relative()) p = base_dir / p;
      FiniteChain c = read_matrix_file(p);
      chain.emplace(std::vector<double>(c.matrix().begin(), c.matrix().end()), c.size(), labels);
    } else {
      const json& rows = m["matrix"];
      if (!rows.is_array()) throw ConfigError("model.matrix", "expected an array of rows");
      std::vector<std::vector<double>> r;
      for (std::size_t i = 0; i < rows.size(); ++i) r.push_back(as_numbers(rows[i], fmt::format("model.matrix[{}]", i)));
      try {
        chain.emplace(FiniteChain::from_rows(r, labels));
      } catch (const std::invalid_argument& e) {
        throw ConfigError("model.matrix", e.what());
      }
    }
    model.kernel = std::make_unique<FiniteKernel>(std::move(*chain));
    model.chain = model.kernel->finite();
    return model;
  }

  if (model.type == "netctl") {
    check_keys(m, path, {"type", "a", "b", "noise_std", "x0_mean", "x0_std", "K", "Delta0", "alpha", "delta_zoom",
                         "L", "p", "F"});
    netctl::PlantParams plant;
    plant.a = get_number(m, path, "a", plant.a);
    plant.b = get_number(m, path, "b", plant.b);
    plant.noise_std = get_number(m, path, "noise_std", plant.noise_std);
    plant.x0.mean = get_number(m, path, "x0_mean", 0.0);
    plant.x0.std = get_number(m, path, "x0_std", 0.0);
    plant.x0.kind = plant.x0.std > 0 ? netctl::InitialLaw::Kind::normal : netctl::InitialLaw::Kind::point;
    netctl::CoderParams coder;
    const auto K = get_i64(m, path, "K", coder.K);
    if (K < 1 || K > 1 << 20) throw ConfigError("model.K", "must be in [1, 2^20]");
    coder.K = static_cast<int>(K);
    coder.Delta0 = get_number(m, path, "Delta0", coder.Delta0);
    coder.alpha = get_number(m, path, "alpha", coder.alpha);
    coder.delta_zoom = get_number(m, path, "delta_zoom", coder.delta_zoom);
    coder.L = get_number(m, path, "L", coder.L);
    coder.p = get_number(m, path, "p", coder.p);
    coder.F = get_optional_number(m, path, "F");
    try {
      plant.validate();
      coder.validate(plant);
    } catch (const std::exception& e) {
      throw ConfigError(path, e.what());
    }
    model.kernel = std::make_unique<netctl::NetKernel>(plant, coder);
    model.plant = plant;
    model.coder = coder;
    return model;
  }

  check_keys(m, path, {"type", "id", "params"});
  model.kernel = make_scripted_kernel(m, path);
  return model;
}

Model default_netctl_model() { return parse_model(json{{"type", "netctl"}}, {}); }

// Coordinates of a point in the model's own terms: a state index for finite
// chains, (x, Delta) for netctl, raw coordinates otherwise.
State parse_point(const json& j, const std::string& path, const Model& model) {
  std::vector<double> v;
  if (j.is_number()) {
    v.push_back(j.get<double>());
  } else if (j.is_array()) {
    v = as_numbers(j, path);
  } else {
    throw ConfigError(path, fmt::format("expected a number or an array of numbers, got {}", j.type_name()));
  }
  if (model.type == "finite") {
    if (v.size() != 1 || v[0] < 0 || v[0] != std::floor(v[0]) || v[0] >= static_cast<double>(model.chain->size()))
      throw ConfigError(path, fmt::format("expected a state index in [0, {})", model.chain->size()));
    return State::index(static_cast<std::size_t>(v[0]));
  }
  if (model.type == "netctl") {
    if (v.size() != 2 || !(v[1] > 0)) throw ConfigError(path, "expected [x, Delta] with Delta > 0");
    return netctl::grid_state(v[0], v[1]);
  }
  const auto dim = model.kernel->space().dim;
  if (v.size() != dim) throw ConfigError(path, fmt::format("expected {} coordinate(s)", dim));
  State s;
  for (double x : v) s.v[s.dim++] = x;
  return s;
}

// --- policy -------------------------------------------------------------------

StoppingPolicy parse_policy(const json& p, const Model& model) {
  const std::string path = "policy";
  if (p.empty()) return model.type == "netctl" ? netctl::success_policy() : StoppingPolicy::every(1);
  require_object(p, path);
  static const std::vector<std::string> kinds{"every", "deterministic", "independent", "event", "netctl_success"};
  const std::string kind = get_string(p, path, "kind", "");
  if (std::find(kinds.begin(), kinds.end(), kind) == kinds.end())
    throw ConfigError("policy.kind", fmt::format("unknown policy kind '{}'", kind) + suggestion(kind, kinds));
  if (kind == "every") {
    check_keys(p, path, {"kind", "n"});
    const auto n = get_i64(p, path, "n", 1);
    if (n < 1) throw ConfigError("policy.n", "must be >= 1");
    return StoppingPolicy::every(n);
  }
  if (kind == "deterministic") {
    check_keys(p, path, {"kind", "n"});
    if (!p.contains("n")) throw ConfigError("policy.n", "missing");
    auto n = make_step_count(p["n"], "policy.n");
    return StoppingPolicy::deterministic(n.fn, n.label);
  }
  if (kind == "independent") {
    check_keys(p, path, {"kind", "law"});
    const json& law = section(p, "law");
    check_keys(law, "policy.law", {"geometric", "fixed", "pmf"});
    if (law.size() != 1) throw ConfigError("policy.law", "give exactly one of geometric, fixed, pmf");
    try {
      if (law.contains("geometric")) {
        const double q = get_number(law, "policy.law", "geometric", 0.0);
        if (!(q > 0 && q <= 1)) throw ConfigError("policy.law.geometric", "must be in (0, 1]");
        return StoppingPolicy::independent(RenewalLaw::geometric(q));
      }
      if (law.contains("fixed")) {
        const auto n = get_i64(law, "policy.law", "fixed", 1);
        if (n < 1) throw ConfigError("policy.law.fixed", "must be >= 1");
        return StoppingPolicy::independent(RenewalLaw::fixed(n));
      }
      return StoppingPolicy::independent(RenewalLaw::from_pmf(get_numbers(law, "policy.law", "pmf")));
    } catch (const std::invalid_argument& e) {
      throw ConfigError("policy.law", e.what());
    }
  }
  if (kind == "event") {
    check_keys(p, path, {"kind", "set"});
    if (!p.contains("set")) throw ConfigError("policy.set", "missing");
    auto s = make_set(p["set"], "policy.set");
    return StoppingPolicy::event_triggered(s.fn, s.label);
  }
  check_keys(p, path, {"kind"});
  if (model.type != "netctl") throw ConfigError("policy.kind", "netctl_success needs a netctl model");
  return netctl::success_policy();
}

// --- drift ----------------------------------------------------------------------

void parse_drift(const json& d, ExperimentConfig& cfg) {
  const std::string path = "drift";
  check_keys(d, path, {"V", "f", "delta", "C", "lambda", "epsilon", "b", "V_bound_on_C", "C_inside_events", "phi", "R"});
  DriftSpec& s = cfg.drift;
  const bool net = cfg.model.type == "netctl";
  if (net) {
    // Quadratic Lyapunov function in the bin size, C = {Delta <= F}.
    const double F = cfg.model.coder->small_set_threshold();
    s.V = [](const State& x) { return x[1] * x[1]; };
    s.V_label = "Delta^2";
    s.C = netctl::small_set(*cfg.model.coder);
    s.C_label = fmt::format("Delta <= {}", F);
    s.epsilon = 0.2;
    s.lambda = 0.8;
    s.b = 2.0 * F * F;
    s.V_bound_on_C = F * F;
  }
  auto fn = [&](const char* key, StateFunction& out, std::string& label) {
    if (!d.contains(key)) return;
    auto f = make_function(d[key], join_path(path, key));
    out = f.fn;
    label = f.label;
  };
  fn("V", s.V, s.V_label);
  fn("f", s.f, s.f_label);
  fn("delta", s.delta, s.delta_label);
  if (d.contains("C")) {
    auto c = make_set(d["C"], "drift.C");
    s.C = c.fn;
    s.C_label = c.label;
    if (net && !d.contains("V_bound_on_C")) s.V_bound_on_C.reset();
  }
  if (!s.C) s.C = [](const State&) { return false; }, s.C_label = "none";
  if (!s.f) s.f = [](const State&) { return 1.0; };
  if (!s.delta) s.delta = [](const State&) { return 1.0; };
  const auto eps = get_optional_number(d, path, "epsilon");
  const auto lambda = get_optional_number(d, path, "lambda");
  if (eps) s.epsilon = *eps;
  if (lambda) s.lambda = *lambda;
  else if (eps) s.lambda = 1.0 - *eps;
  if (!(s.lambda > 0 && s.lambda < 1)) throw ConfigError("drift.lambda", "must be in (0, 1)");
  s.b = get_number(d, path, "b", s.b);
  if (auto v = get_optional_number(d, path, "V_bound_on_C")) s.V_bound_on_C = *v;
  s.C_inside_events = get_bool(d, path, "C_inside_events", s.C_inside_events);
  if (d.contains("phi")) cfg.phi = make_scalar(d["phi"], "drift.phi");
  if (d.contains("R")) cfg.R = make_scalar(d["R"], "drift.R");
}

// --- budget ---------------------------------------------------------------------

void parse_budget(const json& b, ExperimentConfig& cfg) {
  const std::string path = "budget";
  check_keys(b, path, {"n_samples", "horizon", "confidence", "blocks", "mode", "max_censor_rate", "grid"});
  Budget& B = cfg.budget;
  const bool net = cfg.model.type == "netctl";
  B.n_samples = get_u64(b, path, "n_samples", net ? 100000000 : B.n_samples);
  B.horizon = get_i64(b, path, "horizon", B.horizon);
  B.confidence = get_number(b, path, "confidence", B.confidence);
  const auto blocks = get_i64(b, path, "blocks", B.blocks);
  B.max_censor_rate = get_number(b, path, "max_censor_rate", B.max_censor_rate);
  if (B.n_samples < 100) throw ConfigError("budget.n_samples", "must be >= 100");
  if (B.horizon < 1) throw ConfigError("budget.horizon", "must be >= 1");
  if (!(B.confidence > 0 && B.confidence < 1)) throw ConfigError("budget.confidence", "must be in (0, 1)");
  if (blocks < 1 || blocks > 64) throw ConfigError("budget.blocks", "must be in [1, 64]");
  B.blocks = static_cast<int>(blocks);
  const std::string mode = get_string(b, path, "mode", "auto");
  static const std::vector<std::string> modes{"auto", "exact", "sampled"};
  if (mode == "auto") B.mode = Budget::Mode::automatic;
  else if (mode == "exact") B.mode = Budget::Mode::exact;
  else if (mode == "sampled") B.mode = Budget::Mode::sampled;
  else throw ConfigError("budget.mode", fmt::format("unknown mode '{}'", mode) + suggestion(mode, modes));
  B.seed = cfg.seed;
  B.threads = cfg.threads;

  if (b.contains("grid")) {
    const json& g = b["grid"];
    if (!g.is_array() || g.empty()) throw ConfigError("budget.grid", "expected a non-empty array of points");
    for (std::size_t i = 0; i < g.size(); ++i) cfg.grid.push_back(parse_point(g[i], fmt::format("budget.grid[{}]", i), cfg.model));
  } else if (cfg.model.type == "finite") {
    for (std::size_t i = 0; i < cfg.model.chain->size(); ++i) cfg.grid.push_back(State::index(i));
  } else if (net) {
    for (double D : {5.0, 1e3, 1e6}) cfg.grid.push_back(netctl::grid_state(0.0, D));
  } else {
    for (double x : {0.0, 1.0, 10.0, 100.0}) cfg.grid.push_back(State{x});
  }
}

}  // namespace

ExperimentConfig parse_config(const json& doc, const fs::path& base_dir, const Overrides& overrides) {
  check_keys(doc, "", {"seed", "threads", "output", "model", "x0", "policy", "drift", "rate", "budget", "theorem",
                       "simulate", "geo_random", "convergence", "netctl_demo"});
  ExperimentConfig cfg;
  cfg.seed = overrides.seed ? *overrides.seed : get_u64(doc, "", "seed", cfg.seed);
  const auto threads = get_u64(doc, "", "threads", 0);
  if (threads > 4096) throw ConfigError("threads", "must be <= 4096");
  cfg.threads = overrides.threads ? *overrides.threads : static_cast<unsigned>(threads);
  cfg.output = overrides.out ? fs::path(*overrides.out) : fs::path(get_string(doc, "", "output", "out"));

  cfg.model = doc.contains("model") ? parse_model(doc["model"], base_dir) : default_netctl_model();
  if (doc.contains("x0")) {
    cfg.x0 = parse_point(doc["x0"], "x0", cfg.model);
  } else if (cfg.model.type == "finite") {
    cfg.x0 = State::index(0);
  } else if (cfg.model.type == "netctl") {
    cfg.x0 = netctl::grid_state(cfg.model.plant->x0.mean, cfg.model.coder->Delta0);
  } else {
    cfg.x0 = State{0.0};
  }
  cfg.policy = parse_policy(section(doc, "policy"), cfg.model);
  parse_drift(section(doc, "drift"), cfg);
  if (doc.contains("rate")) cfg.rate = make_rate(doc["rate"], "rate");
  parse_budget(section(doc, "budget"), cfg);
  cfg.theorem = get_string(doc, "", "theorem", "");

  const json& sim = section(doc, "simulate");
  check_keys(sim, "simulate", {"horizon", "count"});
  cfg.horizon = get_i64(sim, "simulate", "horizon", cfg.horizon);
  if (cfg.horizon < 0) throw ConfigError("simulate.horizon", "must be >= 0");
  const auto count = get_u64(sim, "simulate", "count", 1);
  if (count < 1 || count > 100000) throw ConfigError("simulate.count", "must be in [1, 100000]");
  cfg.count = static_cast<std::size_t>(count);

  const json& geo = section(doc, "geo_random");
  check_keys(geo, "geo_random", {"a_test", "beta", "min_count"});
  if (cfg.model.type == "netctl") cfg.geo.beta = 1.0 - cfg.model.coder->p;
  cfg.geo.a_test = get_number(geo, "geo_random", "a_test", cfg.geo.a_test);
  if (auto b = get_optional_number(geo, "geo_random", "beta")) cfg.geo.beta = *b;
  cfg.geo.min_count = get_u64(geo, "geo_random", "min_count", cfg.geo.min_count);
  if (cfg.geo.beta && !(*cfg.geo.beta > 0 && *cfg.geo.beta < 1)) throw ConfigError("geo_random.beta", "must be in (0, 1)");

  cfg.convergence = section(doc, "convergence");
  check_keys(cfg.convergence, "convergence",
             {"mode", "n_max", "start", "n_pairs", "minorization", "n_samples", "bootstrap", "burn_in",
              "reference_length", "partition", "stride"});
  cfg.netctl_demo = section(doc, "netctl_demo");
  check_keys(cfg.netctl_demo, "netctl_demo",
             {"n_traj", "steps", "record_at", "trace_steps", "moment_tolerance", "descent_runs", "descent_delta0",
              "descent_stop_below", "stationary_runs", "stationary_steps", "stopbound_grid", "geo_random"});
  return cfg;
}

ExperimentConfig load_config(const fs::path& path, const Overrides& overrides) {
  return parse_config(read_json_file(path), path.parent_path(), overrides);
}

// --- simulate ------------------------------------------------------------------------

int run_simulate(const ExperimentConfig& cfg, Manifest& manifest) {
  if (cfg.model.type == "netctl") {
    const auto& plant = *cfg.model.plant;
    const auto& coder = *cfg.model.coder;
    for (std::size_t i = 0; i < cfg.count; ++i) {
      RandomStream rng(cfg.seed, i);
      auto s = netctl::initial_state(plant, coder, rng);
      const auto events = netctl::run(s, plant, coder, cfg.horizon, rng);
      std::ostringstream out;
      netctl::write_events_csv(out, events);
      manifest.write(fmt::format("netctl_trajectory_{:04}.csv", i), out.str());
    }
    std::cout << fmt::format("wrote {} netctl trajectory file(s) of {} steps to {}\n", cfg.count, cfg.horizon,
                             manifest.dir().string());
    return kExitPass;
  }
  auto paths = simulate_batch(*cfg.model.kernel, cfg.x0, cfg.horizon, cfg.seed, cfg.count, cfg.threads);
  for (std::size_t i = 0; i < paths.size(); ++i) {
    auto traj = annotate_stopping_times(std::move(paths[i]), cfg.policy, cfg.seed);
    std::ostringstream out;
    write_trajectory_csv(out, traj);
    manifest.write(fmt::format("trajectory_{:04}.csv", i), out.str());
  }
  std::cout << fmt::format("wrote {} trajectory file(s) with {} rows each to {}\n", cfg.count, cfg.horizon + 1,
                           manifest.dir().string());
  return kExitPass;
}

// --- verify ----------------------------------------------------------------------------

DriftCertificate verify(const ExperimentConfig& cfg, const std::string& theorem) {
  const auto& ids = theorem_ids();
  if (std::find(ids.begin(), ids.end(), theorem) == ids.end())
    throw ConfigError("theorem", fmt::format("unknown theorem id '{}'", theorem) + suggestion(theorem, ids) +
                                     fmt::format("; valid ids: {}", fmt::join(ids, ", ")));
  const auto& kernel = *cfg.model.kernel;
  const auto& spec = cfg.drift;
  if (!spec.V && theorem != "corollary9") throw ConfigError("drift.V", "missing");
  try {
    if (theorem == "thm5") return check_thm5(kernel, cfg.policy, spec, cfg.grid, cfg.budget);
    if (theorem == "thm8") {
      if (!cfg.rate) throw ConfigError("rate", "thm8 needs a rate block");
      return check_thm8(kernel, cfg.policy, spec, *cfg.rate, cfg.grid, cfg.budget);
    }
    if (theorem == "corollary9") {
      if (!cfg.rate) throw ConfigError("rate", "corollary9 needs a rate block");
      if (cfg.policy.kind() != StoppingPolicy::Kind::deterministic)
        throw ConfigError("policy", "corollary9 needs a deterministic policy");
      return check_corollary9(cfg.policy.step_count(), *cfg.rate, spec.lambda, cfg.grid);
    }
    if (theorem == "connor_fort") {
      if (!cfg.R) throw ConfigError("drift.R", "connor_fort needs R");
      return check_connor_fort(kernel, cfg.policy, spec, cfg.R->fn, cfg.R->label, cfg.grid, cfg.budget);
    }
    if (theorem == "geo_random") return check_geo_random(kernel, cfg.policy, spec, cfg.grid, cfg.budget, cfg.geo);
    if (!cfg.phi) throw ConfigError("drift.phi", "douc needs phi");
    return check_douc(kernel, spec, cfg.phi->fn, cfg.phi->label, cfg.grid, cfg.budget);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(theorem, e.what());
  }
}

int run_verify(const ExperimentConfig& cfg, const std::string& theorem, Manifest& manifest) {
  const auto cert = verify(cfg, theorem);
  manifest.write("certificate.json", dump(to_json(cert)));
  std::cout << fmt::format("{}: {} ({})\n", cert.theorem, to_string(cert.verdict), cert.evidence);
  for (const auto& [k, v] : cert.constants) std::cout << fmt::format("  {} = {}\n", k, v);
  for (const auto& c : cert.clauses) {
    if (c.verdict == Verdict::pass) continue;
    std::string where = c.grid_index ? fmt::format(" at grid point {}", *c.grid_index) : "";
    if (c.block) where += fmt::format(" block {}", *c.block);
    std::cout << fmt::format("  clause {}{} [{}]: {} (ucb {:.6g} vs bound {:.6g}){}\n", c.name, where,
                             to_string(c.verdict), c.inequality, c.ucb, c.bound, c.note.empty() ? "" : "; " + c.note);
  }
  for (const auto& c : cert.caveats) std::cout << "  caveat: " << c << "\n";
  return exit_code(cert.verdict);
}

// --- rate --------------------------------------------------------------------------------

int run_rate(const ExperimentConfig& cfg, Manifest& manifest) {
  const json& c = cfg.convergence;
  const std::string path = "convergence";
  static const std::vector<std::string> modes{"exact", "coupling", "empirical"};
  const std::string mode = get_string(c, path, "mode", cfg.model.type == "finite" ? "exact" : "empirical");
  if (std::find(modes.begin(), modes.end(), mode) == modes.end())
    throw ConfigError("convergence.mode", fmt::format("unknown mode '{}'", mode) + suggestion(mode, modes));
  const auto n_max = get_i64(c, path, "n_max", 50);
  if (n_max < 1 || n_max > 1000000) throw ConfigError("convergence.n_max", "must be in [1, 1e6]");
  const State start = c.contains("start") ? parse_point(c["start"], "convergence.start", cfg.model) : cfg.x0;

  DecayCurve curve;
  json extra = json::object();
  if (mode == "exact" || mode == "coupling") {
    if (!cfg.model.chain) throw ConfigError("convergence.mode", fmt::format("{} mode needs a finite model", mode));
    const auto& chain = *cfg.model.chain;
    if (mode == "exact") {
      curve = exact_decay_curve(chain, start.as_index(), n_max);
    } else {
      if (!c.contains("minorization"))
        throw ConfigError("convergence.minorization", "coupling mode requires a minorization block");
      const json& m = c["minorization"];
      check_keys(m, "convergence.minorization", {"members", "n0"});
      const auto n0 = get_i64(m, "convergence.minorization", "n0", 1);
      if (n0 != 1) throw ConfigError("convergence.minorization.n0", "only one-step minorization is supported");
      StateMask C(chain.size(), false);
      for (double v : get_numbers(m, "convergence.minorization", "members")) {
        if (v < 0 || v != std::floor(v) || v >= static_cast<double>(chain.size()))
          throw ConfigError("convergence.minorization.members", "expected state indices");
        C[static_cast<std::size_t>(v)] = true;
      }
      MinorizationWitness w;
      try {
        w = find_minorization(chain, C, 1);
      } catch (const std::exception& e) {
        throw ConfigError("convergence.minorization", e.what());
      }
      CouplingOptions opt;
      opt.n_max = n_max;
      opt.n_pairs = get_u64(c, path, "n_pairs", opt.n_pairs);
      opt.seed = cfg.seed;
      opt.threads = cfg.threads;
      const auto run = coupled_tv_bound(chain, w, start.as_index(), stationary_sampler(chain), opt);
      curve = coupling_curve(run);
      extra["epsilon"] = w.epsilon;
      extra["n_pairs"] = opt.n_pairs;
      extra["censored"] = run.censored;
      extra["censor_rate"] = run.censor_rate;
    }
  } else {
    Partition part;
    if (cfg.model.chain) {
      part = singleton_partition(cfg.model.chain->size());
    } else {
      const json& p = section(c, "partition");
      check_keys(p, "convergence.partition", {"dim_a", "lo_a", "hi_a", "dim_b", "lo_b", "hi_b", "bins"});
      const std::string pp = "convergence.partition";
      const bool net = cfg.model.type == "netctl";
      part = log_grid_partition(get_u64(p, pp, "dim_a", 0), get_number(p, pp, "lo_a", 1e-2),
                                get_number(p, pp, "hi_a", 1e2), get_u64(p, pp, "dim_b", net ? 1 : 0),
                                get_number(p, pp, "lo_b", net ? 0.5 : 1e-2), get_number(p, pp, "hi_b", 1e2),
                                get_u64(p, pp, "bins", 8));
    }
    ReferenceOptions ref;
    ref.burn_in = get_i64(c, path, "burn_in", ref.burn_in);
    ref.length = get_i64(c, path, "reference_length", ref.length);
    ref.seed = derived_seed(cfg.seed, kStationaryTag);
    const auto reference = reference_histogram(*cfg.model.kernel, start, part, ref);
    DistanceOptions opt;
    opt.n_samples = get_u64(c, path, "n_samples", 20000);
    opt.bootstrap = get_u64(c, path, "bootstrap", opt.bootstrap);
    opt.seed = cfg.seed;
    opt.threads = cfg.threads;
    const auto stride = std::max<std::int64_t>(1, get_i64(c, path, "stride", 1));
    std::size_t undersampled = 0;
    for (std::int64_t n = 0; n <= n_max; n += stride) {
      const auto d = empirical_distance(*cfg.model.kernel, start, n, part, reference, opt);
      curve.push(n, d.distance, d.ci.lo, d.ci.hi, false);
      undersampled += d.undersampled ? 1 : 0;
    }
    extra["cells"] = part.cells;
    extra["undersampled_points"] = undersampled;
  }
  const auto fit = fit_rate(curve);
  std::ostringstream csv;
  write_decay_csv(csv, curve);
  manifest.write("decay_curve.csv", csv.str());
  json report = to_json(fit);
  report["mode"] = mode;
  report["n_max"] = n_max;
  report["chain_id"] = cfg.model.kernel->id();
  report["seed"] = cfg.seed;
  if (!extra.empty()) report["details"] = extra;
  manifest.write("rate_fit.json", dump(report));
  std::cout << fmt::format("rate ({}): best family {} (geometric rate {:.6g}, R2 {:.4f}; polynomial exponent {:.4g}, R2 {:.4f})\n",
                           mode, fit.family, fit.geometric_rate, fit.geometric_r2, fit.polynomial_exponent,
                           fit.polynomial_r2);
  return fit.family == "inconclusive" ? kExitInconclusive : kExitPass;
}

// --- netctl demo --------------------------------------------------------------------------

int run_netctl_demo(const ExperimentConfig& cfg, Manifest& manifest) {
  if (cfg.model.type != "netctl") throw ConfigError("model.type", "netctl-demo needs a netctl model");
  const auto& plant = *cfg.model.plant;
  const auto& coder = *cfg.model.coder;
  const json& d = cfg.netctl_demo;
  const std::string path = "netctl_demo";
  json report;
  Verdict verdict = Verdict::pass;

  const auto rv = netctl::rate_variables(coder.K);
  const double margin = netctl::stability_margin(plant.a, coder.p, rv.R);
  report["stability_margin"] = margin;
  report["R"] = rv.R;
  if (!(margin < 1.0)) verdict = Verdict::fail;
  try {
    report["epsilon_budget"] = netctl::epsilon_budget(coder, plant.a);
  } catch (const std::domain_error& e) {
    report["epsilon_budget"] = nullptr;
    report["epsilon_note"] = e.what();
    verdict = Verdict::fail;
  }

  // One short trace for inspection.
  {
    RandomStream rng(derived_seed(cfg.seed, kTraceTag), 0);
    const auto events = netctl::run(netctl::initial_state(plant, coder, rng), plant, coder,
                                    get_i64(d, path, "trace_steps", 200), rng);
    std::ostringstream out;
    netctl::write_events_csv(out, events);
    manifest.write("netctl_trajectory.csv", out.str());
  }

  // Second moments across trajectories.
  netctl::BatchOptions bo;
  bo.n_traj = get_u64(d, path, "n_traj", bo.n_traj);
  bo.steps = get_i64(d, path, "steps", bo.steps);
  bo.seed = cfg.seed;
  bo.threads = cfg.threads;
  if (d.contains("record_at")) {
    for (double t : get_numbers(d, path, "record_at")) bo.record_at.push_back(static_cast<std::int64_t>(t));
  } else {
    bo.record_at = {bo.steps / 2, bo.steps};
  }
  if (bo.record_at.size() < 2) throw ConfigError("netctl_demo.record_at", "need at least two times");
  const auto batch = netctl::simulate_batch(plant, coder, bo);
  std::ostringstream moments;
  moments << "t,mean_x2,mean_delta2,max_delta\n";
  for (const auto& s : batch.snapshots)
    moments << fmt::format("{},{},{},{}\n", s.t, s.mean_x2, s.mean_delta2, s.max_delta);
  manifest.write("moments.csv", moments.str());
  const auto& a = batch.snapshots[batch.snapshots.size() - 2];
  const auto& b = batch.snapshots.back();
  const double tol = get_number(d, path, "moment_tolerance", 0.05);
  const double change_x2 = std::fabs(b.mean_x2 - a.mean_x2) / a.mean_x2;
  const double change_d2 = std::fabs(b.mean_delta2 - a.mean_delta2) / a.mean_delta2;
  report["moments"] = {{"t0", a.t}, {"t1", b.t}, {"mean_x2", {a.mean_x2, b.mean_x2}},
                       {"mean_delta2", {a.mean_delta2, b.mean_delta2}}, {"relative_change_x2", change_x2},
                       {"relative_change_delta2", change_d2}, {"tolerance", tol},
                       {"pass", change_x2 < tol && change_d2 < tol}};
  if (!(change_x2 < tol && change_d2 < tol)) verdict = combine(verdict, Verdict::inconclusive);

  // Inter-time tails: descents from a huge bin size cover the large-Delta
  // groups, stationary runs the small ones.
  auto samples = netctl::large_delta_inter_times(
      plant, coder, get_number(d, path, "descent_delta0", 1e9), get_number(d, path, "descent_stop_below", 1.0),
      get_u64(d, path, "descent_runs", 100000), derived_seed(cfg.seed, kDescentTag), cfg.threads);
  const auto st_runs = get_u64(d, path, "stationary_runs", 64);
  const auto st_steps = get_i64(d, path, "stationary_steps", 20000);
  std::vector<std::vector<netctl::InterTime>> per(st_runs);
  const auto st_seed = derived_seed(cfg.seed, kStationaryTag);
  parallel_for(st_runs, cfg.threads, [&](std::size_t r) {
    RandomStream rng(st_seed, r);
    per[r] = netctl::inter_times(netctl::run(netctl::initial_state(plant, coder, rng), plant, coder, st_steps, rng));
  });
  for (auto& v : per) samples.insert(samples.end(), v.begin(), v.end());
  std::vector<double> grid = {0.0, coder.L, 10 * coder.L, 100 * coder.L, 1000 * coder.L};
  if (d.contains("stopbound_grid")) grid = get_numbers(d, path, "stopbound_grid");
  netctl::StopBoundReport sb;
  try {
    sb = netctl::verify_stopbound(samples, coder.p, grid);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("netctl_demo.stopbound_grid", e.what());
  }
  report["stopbound"] = netctl::to_json(sb);
  verdict = combine(verdict, sb.verdict);

  if (get_bool(d, path, "geo_random", true)) {
    const auto cert = verify(cfg, "geo_random");
    manifest.write("certificate.json", dump(to_json(cert)));
    report["geo_random"] = {{"verdict", to_string(cert.verdict)}, {"constants", cert.constants}};
    verdict = combine(verdict, cert.verdict);
  }
  report["verdict"] = to_string(verdict);
  report["seed"] = cfg.seed;
  manifest.write("netctl_demo.json", dump(report));

  std::cout << fmt::format("stability margin {} (R = {}), epsilon budget {}\n", margin, rv.R,
                           report["epsilon_budget"].dump());
  std::cout << fmt::format("E x^2: {:.6g} -> {:.6g} ({:.2f}%), E Delta^2: {:.6g} -> {:.6g} ({:.2f}%)\n", a.mean_x2,
                           b.mean_x2, 100 * change_x2, a.mean_delta2, b.mean_delta2, 100 * change_d2);
  std::cout << fmt::format("inter-time tails: {}\n", to_string(sb.verdict));
  if (report.contains("geo_random"))
    std::cout << fmt::format("geo_random: {}\n", report["geo_random"]["verdict"].get<std::string>());
  std::cout << fmt::format("overall: {}\n", to_string(verdict));
  return exit_code(verdict);
}

// --- selftest -------------------------------------------------------------------------------

int run_selftest(std::uint64_t seed, Manifest& manifest) {
  json checks = json::array();
  bool ok = true;
  auto record = [&](const std::string& name, bool pass, double value) {
    checks.push_back({{"name", name}, {"pass", pass}, {"value", value}});
    std::cout << fmt::format("{:<28} {} ({:.6g})\n", name, pass ? "PASS" : "FAIL", value);
    ok = ok && pass;
  };

  const auto two = FiniteChain::from_rows({{0.9, 0.1}, {0.2, 0.8}});
  const auto pi = stationary(two);
  record("stationary residual", stationary_residual(two, pi) <= 1e-10, stationary_residual(two, pi));
  record("stationary mass", std::fabs(pi[0] - 2.0 / 3.0) <= 1e-12, pi[0]);
  record("slem", std::fabs(slem(two) - 0.7) <= 1e-9, slem(two));

  // Active SIMD table against scalar on a random chain.
  RandomStream rng(seed, 0);
  const std::size_t n = 37;
  std::vector<double> m(n * n), row(n), out_a(n), out_s(n);
  for (auto& v : m) v = rng.uniform();
  for (auto& v : row) v = rng.uniform();
  simd::active().vecmat(row.data(), m.data(), n, out_a.data());
  simd::kernels_for(simd::Isa::scalar).vecmat(row.data(), m.data(), n, out_s.data());
  record(fmt::format("simd {} == scalar", simd::isa_name(simd::detect_isa())), out_a == out_s, 0.0);

  // Stream determinism.
  RandomStream r1(seed, 7), r2(seed, 7);
  bool same = true;
  for (int i = 0; i < 1000; ++i) same = same && r1.next_u64() == r2.next_u64();
  record("rng determinism", same, 0.0);

  const auto lam = lambda0_membership(make_polynomial(2.0, 2.0), 10000);
  record("polynomial rate in class", lam.passes, 0.0);
  const auto geo = lambda0_membership(make_geometric(1.1, 2.0), 10000);
  record("geometric rate rejected", !geo.passes, 0.0);

  record("netctl margin", netctl::stability_margin(2.0, 0.9, netctl::rate_variables(3).R) < 1.0,
         netctl::stability_margin(2.0, 0.9, netctl::rate_variables(3).R));

  manifest.write("selftest.json", dump(json{{"checks", checks}, {"pass", ok}, {"seed", seed}}));
  return ok ? kExitPass : kExitFail;
}

}  // namespace driftlab::cli
