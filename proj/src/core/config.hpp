#pragma once

#include <map>
#include <string>
#include <vector>

namespace papercut {

// Plain-text configuration: one `key value...` per line, `#` comments,
// dotted keys, SI units throughout. Unknown keys are rejected at load time
// so typos cannot silently fall back to defaults.
class ConfigMap {
 public:
  static ConfigMap parse_string(const std::string& text);
  static ConfigMap parse_file(const std::string& path);

  // Built-in defaults for every known key.
  static ConfigMap defaults();

  // Defaults overlaid with the entries from `path` (empty path: defaults).
  static ConfigMap load(const std::string& path);

  bool has(const std::string& key) const;
  double get_double(const std::string& key) const;
  int get_int(const std::string& key) const;
  std::string get_string(const std::string& key) const;
  std::vector<double> get_doubles(const std::string& key, size_t count) const;

  void set(const std::string& key, const std::string& value);
  void set_double(const std::string& key, double value);

  void merge_from(const ConfigMap& other);  // other wins
  std::string serialize() const;

  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
};

}  // namespace papercut
