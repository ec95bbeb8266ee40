#include "driftlab/cli/io.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <sstream>

#include <fmt/core.h>
#include <openssl/evp.h>

#include "driftlab/cli/registry.hpp"

namespace driftlab::cli {

namespace fs = std::filesystem;

ConfigError::ConfigError(std::string field, const std::string& message)
    : std::runtime_error(field.empty() ? message : field + ": " + message), field_(std::move(field)) {}

std::string join_path(const std::string& parent, const std::string& key) {
  return parent.empty() ? key : parent + "." + key;
}

void require_object(const json& j, const std::string& path) {
  if (!j.is_object()) throw ConfigError(path, fmt::format("expected an object, got {}", j.type_name()));
}

void check_keys(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
  require_object(obj, path);
  std::vector<std::string> names(allowed.begin(), allowed.end());
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const auto& n : names) ok = ok || n == key;
    if (!ok) throw ConfigError(join_path(path, key), "unknown field" + suggestion(key, names));
  }
}

namespace {

const json* find(const json& obj, const char* key) {
  auto it = obj.find(key);
  return it == obj.end() || it->is_null() ? nullptr : &*it;
}

}  // namespace

double get_number(const json& obj, const std::string& path, const char* key, double fallback) {
  auto v = get_optional_number(obj, path, key);
  return v ? *v : fallback;
}

std::optional<double> get_optional_number(const json& obj, const std::string& path, const char* key) {
  const json* v = find(obj, key);
  if (!v) return std::nullopt;
  if (!v->is_number()) throw ConfigError(join_path(path, key), fmt::format("expected a number, got {}", v->type_name()));
  return v->get<double>();
}

std::uint64_t get_u64(const json& obj, const std::string& path, const char* key, std::uint64_t fallback) {
  const json* v = find(obj, key);
  if (!v) return fallback;
  if (v->is_number_unsigned()) return v->get<std::uint64_t>();
  if (v->is_number_integer() && v->get<std::int64_t>() >= 0) return static_cast<std::uint64_t>(v->get<std::int64_t>());
  throw ConfigError(join_path(path, key), fmt::format("expected an unsigned integer, got {}",
                                                      v->is_number() ? v->dump() : std::string(v->type_name())));
}

std::int64_t get_i64(const json& obj, const std::string& path, const char* key, std::int64_t fallback) {
  const json* v = find(obj, key);
  if (!v) return fallback;
  if (v->is_number_integer()) return v->get<std::int64_t>();
  throw ConfigError(join_path(path, key), fmt::format("expected an integer, got {}",
                                                      v->is_number() ? v->dump() : std::string(v->type_name())));
}

std::string get_string(const json& obj, const std::string& path, const char* key, const std::string& fallback) {
  const json* v = find(obj, key);
  if (!v) return fallback;
  if (!v->is_string()) throw ConfigError(join_path(path, key), fmt::format("expected a string, got {}", v->type_name()));
  return v->get<std::string>();
}

bool get_bool(const json& obj, const std::string& path, const char* key, bool fallback) {
  const json* v = find(obj, key);
  if (!v) return fallback;
  if (!v->is_boolean()) throw ConfigError(join_path(path, key), fmt::format("expected a boolean, got {}", v->type_name()));
  return v->get<bool>();
}

std::vector<double> as_numbers(const json& v, const std::string& field) {
  if (!v.is_array()) throw ConfigError(field, fmt::format("expected an array of numbers, got {}", v.type_name()));
  std::vector<double> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number()) throw ConfigError(fmt::format("{}[{}]", field, i), "expected a number");
    out.push_back(v[i].get<double>());
  }
  return out;
}

std::vector<double> get_numbers(const json& obj, const std::string& path, const char* key) {
  const json* v = find(obj, key);
  if (!v) throw ConfigError(join_path(path, key), "missing");
  return as_numbers(*v, join_path(path, key));
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", fmt::format("cannot open {}", path.string()));
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("", fmt::format("{}: {}", path.string(), e.what()));
  }
}

FiniteChain read_matrix_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("model.file", fmt::format("cannot open {}", path.string()));
  std::vector<std::vector<double>> rows;
  if (path.extension() == ".json") {
    json j;
    try {
      j = json::parse(in);
      rows = j.get<std::vector<std::vector<double>>>();
    } catch (const json::exception& e) {
      throw ConfigError("model.file", e.what());
    }
  } else {
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      std::vector<double> row;
      std::stringstream ss(line);
      std::string cell;
      while (std::getline(ss, cell, ',')) {
        try {
          row.push_back(std::stod(cell));
        } catch (const std::exception&) {
          throw ConfigError("model.file", fmt::format("bad number '{}' in {}", cell, path.string()));
        }
      }
      rows.push_back(std::move(row));
    }
  }
  try {
    return FiniteChain::from_rows(rows);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("model.file", e.what());
  }
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 failed");
  std::string out;
  for (unsigned i = 0; i < len; ++i) out += fmt::format("{:02x}", digest[i]);
  return out;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

Manifest::Manifest(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

void Manifest::write(const std::string& name, const std::string& content) {
  const fs::path p = dir_ / name;
  std::ofstream out(p, std::ios::binary);
  out << content;
  if (!out) throw std::runtime_error("cannot write " + p.string());
  artifacts_.push_back({{"path", name}, {"bytes", content.size()}, {"sha256", sha256_hex(content)}});
}

void Manifest::finish(const std::string& command, std::uint64_t seed, const std::string& timestamp) const {
  json m = {{"command", command}, {"seed", seed}, {"artifacts", artifacts_}};
  if (!timestamp.empty()) m["metadata"] = {{"timestamp", timestamp}};
  std::ofstream out(dir_ / "manifest.json", std::ios::binary);
  out << dump(m);
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace driftlab::cli
