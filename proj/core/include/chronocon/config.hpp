#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace chronocon {

// Plain key/value config file:
//   one `key = value` per line, '#' starts a comment, blank lines ignored.
// Keys are case-sensitive. Unknown keys are rejected by callers via
// check_consumed() so typos in experiment configs fail loudly.
class Config {
 public:
  Config() = default;
  static Config parse_file(const std::string& path);
  static Config parse_string(const std::string& text);

  bool has(const std::string& key) const;

  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  // Comma-separated list of doubles, e.g. "0.10,0.22,0.33".
  std::vector<double> get_double_list(const std::string& key,
                                      const std::vector<double>& fallback) const;

  void set(const std::string& key, const std::string& value);

  // Throws if any key present in the file was never read.
  void check_consumed() const;

  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
  mutable std::map<std::string, bool> consumed_;
};

}  // namespace chronocon
