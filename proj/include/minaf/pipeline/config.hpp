#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace minaf::pipeline {

struct KeySpec {
  std::string key;
  std::string default_value;
  std::string doc;
};

/// Commands with a config section, in pipeline order.
const std::vector<std::string>& commands();
/// Documented keys and defaults of one section. Throws InvalidArgument for an
/// unknown command.
const std::vector<KeySpec>& section_keys(const std::string& command);

/// Values for every section. Precedence, lowest first: built-in defaults,
/// the config file, `--set` overrides, dedicated flags (--seed, --out).
class RunConfig {
 public:
  explicit RunConfig(std::string command);

  const std::string& command() const { return command_; }
  /// INI file with [section] headers. Unknown sections or keys are rejected.
  void load_file(const std::filesystem::path& path);
  /// "key" addresses the command's section, "section.key" any section.
  void set(const std::string& key, const std::string& value);
  /// "key=value" or "section.key=value".
  void set_assignment(const std::string& assignment);

  const std::string& get(const std::string& key) const;
  std::string get(const std::string& section, const std::string& key) const;
  double get_double(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  std::size_t get_size(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  /// Comma-separated list, entries trimmed; empty string gives an empty list.
  std::vector<std::string> get_list(const std::string& key) const;
  std::vector<double> get_doubles(const std::string& key) const;

  /// The command's section as INI text, each key preceded by its doc line.
  std::string effective_ini() const;
  void write_effective(const std::filesystem::path& path) const;

 private:
  std::string command_;
  std::map<std::string, std::map<std::string, std::string>> values_;
};

}  // namespace minaf::pipeline
