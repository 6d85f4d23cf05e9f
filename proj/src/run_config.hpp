#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mdbert {

// Merged view of config-file keys and command-line overrides. Precedence:
// override > file > default. Every key is validated against the known-key
// list so typos fail loudly.
class RunConfig {
 public:
  RunConfig() = default;

  // "key = value" lines, '#' comments.
  static RunConfig from_file(const std::string& path);
  void apply_override(const std::string& key, const std::string& value);
  void apply_override_expr(const std::string& expr);  // "key=value"

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::size_t get_size(const std::string& key, std::size_t fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  const std::map<std::string, std::string>& values() const { return values_; }

  static const std::vector<std::string>& known_keys();

 private:
  void set_checked(const std::string& key, const std::string& value);
  std::map<std::string, std::string> values_;
};

}  // namespace mdbert
