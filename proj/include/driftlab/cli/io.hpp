#pragma once

// Config access with field-path errors, artifact writing and the manifest.

#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "driftlab/finite_chain.hpp"

namespace driftlab::cli {

using nlohmann::json;

/// Schema or value problem in a config. `field` is a dotted path such as
/// "budget.n_samples".
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& message);
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

std::string join_path(const std::string& parent, const std::string& key);

/// Throws ConfigError for keys outside `allowed`, suggesting the closest one.
void check_keys(const json& obj, const std::string& path, std::initializer_list<const char*> allowed);
void require_object(const json& j, const std::string& path);

double get_number(const json& obj, const std::string& path, const char* key, double fallback);
std::optional<double> get_optional_number(const json& obj, const std::string& path, const char* key);
std::uint64_t get_u64(const json& obj, const std::string& path, const char* key, std::uint64_t fallback);
std::int64_t get_i64(const json& obj, const std::string& path, const char* key, std::int64_t fallback);
std::string get_string(const json& obj, const std::string& path, const char* key, const std::string& fallback);
bool get_bool(const json& obj, const std::string& path, const char* key, bool fallback);
std::vector<double> as_numbers(const json& v, const std::string& field);
std::vector<double> get_numbers(const json& obj, const std::string& path, const char* key);

json read_json_file(const std::filesystem::path& path);
/// Matrix from a JSON array of rows or a CSV file with one row per line.
FiniteChain read_matrix_file(const std::filesystem::path& path);

std::string sha256_hex(std::string_view bytes);

/// Pretty JSON with a trailing newline; keys come out sorted, so equal
/// documents give equal bytes.
std::string dump(const json& j);

/// Records every artifact written under one output directory.
class Manifest {
 public:
  explicit Manifest(std::filesystem::path dir);

  const std::filesystem::path& dir() const { return dir_; }
  /// Writes `content` to dir/name and records its hash.
  void write(const std::string& name, const std::string& content);
  /// Writes manifest.json. The timestamp goes under "metadata" only.
  void finish(const std::string& command, std::uint64_t seed, const std::string& timestamp) const;

  const json& artifacts() const { return artifacts_; }

 private:
  std::filesystem::path dir_;
  json artifacts_ = json::array();
};

std::string utc_timestamp();

}  // namespace driftlab::cli
