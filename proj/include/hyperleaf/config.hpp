#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace hyperleaf {

// Locale-independent number <-> text. All emitted files (configs, manifests,
// CSV reports, checkpoint indexes) go through these so decimal points stay
// decimal points everywhere.
std::string format_double(double v);   // shortest round-trip representation
std::string format_u64(uint64_t v);
double parse_double(const std::string& s);
int64_t parse_i64(const std::string& s);
uint64_t parse_u64(const std::string& s);

// Flat key=value config: one "key=value" pair per line, '#' starts a
// comment, blank lines ignored. Keys are namespaced by module, e.g.
// "gen.side_min=4".
class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig from_file(const std::string& path);
  static KeyValueConfig from_string(const std::string& text);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::string require_string(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  int64_t get_i64(const std::string& key, int64_t fallback) const;
  uint64_t get_u64(const std::string& key, uint64_t fallback) const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

std::string trim(const std::string& s);
std::vector<std::string> split(const std::string& s, char sep);

}  // namespace hyperleaf
