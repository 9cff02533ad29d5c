#pragma once

// Command-line front end. Commands: simulate, build-dataset, train, deploy,
// eval, ig. Global flags --config, --seed, --out, --set section.key=value.
//
// Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
// failure.

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace raeid::cli {

/// Sectioned key/value configuration with a fixed schema.
class RunConfig {
 public:
  /// Parses INI text; throws ConfigError on syntax errors or unknown keys.
  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);

  /// Applies "section.key=value"; the key must exist in the schema.
  void set(const std::string& assignment);

  std::optional<std::string> raw(const std::string& section, const std::string& key) const;
  std::string str(const std::string& section, const std::string& key,
                  const std::string& fallback) const;
  double real(const std::string& section, const std::string& key, double fallback) const;
  long long integer(const std::string& section, const std::string& key, long long fallback) const;
  bool flag(const std::string& section, const std::string& key, bool fallback) const;
  std::vector<double> reals(const std::string& section, const std::string& key,
                            std::vector<double> fallback) const;
  std::vector<int> integers(const std::string& section, const std::string& key,
                            std::vector<int> fallback) const;

  /// Sorted "section.key=value" lines; hashed into manifests.
  std::string canonical() const;

 private:
  std::map<std::string, std::map<std::string, std::string>> values_;
};

/// Known sections and their keys.
const std::map<std::string, std::vector<std::string>>& config_schema();

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace raeid::cli
