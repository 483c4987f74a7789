#include "chronocon/config.hpp"

#include <algorithm>
#include <stdexcept>

#include "chronocon/csv.hpp"

namespace chronocon {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

}  // namespace

Config Config::parse_file(const std::string& path) {
  return parse_string(csv::read_file(path));
}

Config Config::parse_string(const std::string& text) {
  Config cfg;
  size_t line_no = 0;
  size_t pos = 0;
  while (pos <= text.size()) {
    size_t nl = text.find('\n', pos);
    std::string line = text.substr(pos, nl == std::string::npos ? std::string::npos : nl - pos);
    pos = nl == std::string::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error("config line " + std::to_string(line_no) +
                               ": expected 'key = value', got '" + line + "'");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw std::runtime_error("config line " + std::to_string(line_no) + ": empty key");
    }
    if (cfg.entries_.count(key)) {
      throw std::runtime_error("config line " + std::to_string(line_no) +
                               ": duplicate key '" + key + "'");
    }
    cfg.entries_[key] = value;
  }
  return cfg;
}

bool Config::has(const std::string& key) const {
  auto it = entries_.find(key);
  if (it != entries_.end()) consumed_[key] = true;
  return it != entries_.end();
}

double Config::get_double(const std::string& key, double fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  consumed_[key] = true;
  return csv::parse_double(it->second, "config key '" + key + "'");
}

long long Config::get_int(const std::string& key, long long fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  consumed_[key] = true;
  return csv::parse_int(it->second, "config key '" + key + "'");
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  consumed_[key] = true;
  std::string v = it->second;
  std::transform(v.begin(), v.end(), v.begin(), ::tolower);
  if (v == "on" || v == "true" || v == "1" || v == "yes") return true;
  if (v == "off" || v == "false" || v == "0" || v == "no") return false;
  throw std::runtime_error("config key '" + key + "': expected boolean, got '" + it->second + "'");
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  consumed_[key] = true;
  return it->second;
}

std::vector<double> Config::get_double_list(const std::string& key,
                                            const std::vector<double>& fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  consumed_[key] = true;
  std::vector<double> out;
  for (const auto& field : csv::split_line(it->second)) {
    out.push_back(csv::parse_double(field, "config key '" + key + "'"));
  }
  return out;
}

void Config::set(const std::string& key, const std::string& value) {
  entries_[key] = value;
}

void Config::check_consumed() const {
  for (const auto& [key, value] : entries_) {
    (void)value;
    if (!consumed_.count(key)) {
      throw std::runtime_error("config: unknown key '" + key + "'");
    }
  }
}

}  // namespace chronocon
