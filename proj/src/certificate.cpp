#include <cmath>

#include "driftlab/drift_verify.hpp"

namespace driftlab {

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::pass: return "pass";
    case Verdict::fail: return "fail";
    case Verdict::inconclusive: return "inconclusive";
  }
  return "unknown";
}

Verdict combine(Verdict a, Verdict b) {
  if (a == Verdict::fail || b == Verdict::fail) return Verdict::fail;
  if (a == Verdict::inconclusive || b == Verdict::inconclusive) return Verdict::inconclusive;
  return Verdict::pass;
}

namespace {

// JSON has no infinities; encode them as strings so reports stay valid.
nlohmann::json number(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

nlohmann::json state_json(const State& s) {
  auto a = nlohmann::json::array();
  for (std::size_t i = 0; i < s.dim; ++i) a.push_back(number(s[i]));
  return a;
}

}  // namespace

nlohmann::json to_json(const DriftCertificate& c, const std::string& timestamp) {
  nlohmann::json j;
  j["theorem"] = c.theorem;
  j["verdict"] = to_string(c.verdict);
  j["evidence"] = c.evidence;
  j["chain_id"] = c.chain_id;
  j["policy"] = c.policy;
  j["constants"] = nlohmann::json::object();
  for (const auto& [k, v] : c.constants) j["constants"][k] = number(v);
  j["clauses"] = nlohmann::json::array();
  for (const auto& cl : c.clauses) {
    nlohmann::json o;
    o["name"] = cl.name;
    o["inequality"] = cl.inequality;
    if (cl.grid_index) o["grid_index"] = *cl.grid_index;
    if (cl.block) o["block"] = *cl.block;
    o["estimate"] = number(cl.estimate);
    o["ucb"] = number(cl.ucb);
    o["lcb"] = number(cl.lcb);
    o["bound"] = number(cl.bound);
    o["exact"] = cl.exact;
    o["n"] = cl.n;
    o["censor_rate"] = number(cl.censor_rate);
    o["verdict"] = to_string(cl.verdict);
    if (!cl.note.empty()) o["note"] = cl.note;
    j["clauses"].push_back(std::move(o));
  }
  j["grid"] = nlohmann::json::array();
  for (const auto& s : c.grid) j["grid"].push_back(state_json(s));
  j["seeds"] = {{"root", c.seed}};
  j["sample_sizes"] = c.sample_sizes;
  j["censor_rates"] = nlohmann::json::array();
  for (double r : c.censor_rates) j["censor_rates"].push_back(number(r));
  j["conclusion"] = c.conclusion;
  j["caveats"] = c.caveats;
  j["metadata"] = nlohmann::json::object();
  if (!timestamp.empty()) j["metadata"]["timestamp"] = timestamp;
  return j;
}

}  // namespace driftlab
