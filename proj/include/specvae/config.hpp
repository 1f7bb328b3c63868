#pragma once

// TOML-subset run configuration: [section] headers, `key = value` lines with
// string/number/boolean/array values, and # comments. Keys flatten to
// "section.key"; commands reject keys outside their declared set so typos
// fail loudly. CLI overrides replace file values before the resolved
// snapshot is written.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace specvae {

struct ConfigValue {
  enum class Kind { boolean, number, string, array };
  Kind kind = Kind::string;
  bool boolean = false;
  double number = 0.0;
  std::string text;
  std::vector<ConfigValue> items;  // arrays hold scalars only

  static ConfigValue make_bool(bool v);
  static ConfigValue make_number(double v);
  static ConfigValue make_string(std::string v);
  static ConfigValue make_array(std::vector<ConfigValue> v);
};

struct RunConfig {
  std::map<std::string, ConfigValue> values;  // flattened "section.key"

  bool has(const std::string& key) const { return values.count(key) > 0; }

  // Typed getters return the default when the key is absent and throw
  // naming the key when the stored kind does not match.
  bool get_bool(const std::string& key, bool fallback) const;
  double get_number(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::vector<double> get_numbers(const std::string& key,
                                  const std::vector<double>& fallback) const;
  std::vector<std::string> get_strings(const std::string& key,
                                       const std::vector<std::string>& fallback) const;

  void set(const std::string& key, ConfigValue value) { values[key] = std::move(value); }
};

RunConfig parse_config(const std::string& text);
RunConfig load_config_file(const std::string& path);

// Rejects any key not in `allowed`, naming the first offender.
void reject_unknown_keys(const RunConfig& cfg, const std::vector<std::string>& allowed);

// Resolved snapshot; keys are already sorted by the map so output is stable.
nlohmann::ordered_json config_json(const RunConfig& cfg);

}  // namespace specvae
