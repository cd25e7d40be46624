#pragma once

#include <map>
#include <stdexcept>
#include <string>

namespace gpais {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Line-oriented `section.key = value` configuration.  '#' starts a comment.
/// A serialized config with all defaults resolved doubles as the run
/// manifest and reproduces the run.
class Config {
 public:
  static Config from_file(const std::string& path);
  static Config from_string(const std::string& text);

  /// `key=value` command-line override; flags win over file values.
  void apply_override(const std::string& assignment);

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key,
                         const std::string& fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  void set(const std::string& key, const std::string& value);
  /// Writes the value only if the key is absent; used to resolve defaults
  /// into the manifest.
  void set_default(const std::string& key, const std::string& value);

  std::string serialize() const;
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace gpais
