#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace adscreen {

struct ConfigKey {
  const char* key;
  const char* fallback;
  const char* doc;
};

// Flat key=value run configuration. Every key has a registered default and
// unknown keys are rejected, so a typo fails fast instead of silently using
// a default. Precedence, lowest to highest: defaults, config file (with
// `include` processed inline), ADSCREEN_* environment variables, CLI flags.
class RunConfig {
 public:
  RunConfig();

  static const std::vector<ConfigKey>& keys();
  static bool known(const std::string& key);
  // ADSCREEN_ prefix, upper case, '.' and '-' become '_'.
  static std::string env_name(const std::string& key);

  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;
  int get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;  // "true" | "false"
  uint64_t get_seed(const std::string& key) const;
  std::vector<double> get_list(const std::string& key) const;  // comma-separated

  // FNV-1a over the sorted resolved key=value lines; stable across runs with
  // identical settings, independent of how they were supplied.
  uint64_t hash() const;
  std::string resolved_text() const;  // one sorted "key = value" per line

 private:
  std::map<std::string, std::string> values_;
};

// Parses a config file into `cfg`. Lines: blank, "# comment",
// "include RELATIVE_OR_ABSOLUTE_PATH", or "key = value".
void load_config_file(RunConfig& cfg, const std::string& path);

// Applies ADSCREEN_* environment overrides for every registered key.
void apply_env_overrides(RunConfig& cfg);

}  // namespace adscreen
