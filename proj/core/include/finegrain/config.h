#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace finegrain {

// Flat key-value configuration.
//
// Text grammar, one item per line:
//   # comment            (also ';')
//   [section]            prefixes following keys with "section."
//   key = value          value is trimmed; lists are comma-separated
//
// Keys are dotted paths such as "threshold.bright", "split.seed" or
// "cost.attr.funny". Later assignments override earlier ones.
class Config {
 public:
  static Config parse(std::string_view text);
  static Config load(const std::string& path);

  // Applies variables named <prefix><KEY> where KEY is the dotted key
  // upper-cased with '.' replaced by '_'; only keys already present or listed
  // in `known_keys` are considered.
  void apply_environment(std::string_view prefix, const std::vector<std::string>& known_keys);

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  void merge(const Config& overrides);

  bool contains(const std::string& key) const { return values_.count(key) > 0; }
  std::optional<std::string> get(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const;
  std::vector<std::string> get_strings(const std::string& key,
                                       const std::vector<std::string>& fallback) const;

  // All keys beginning with `prefix`, with the prefix removed.
  std::map<std::string, std::string> with_prefix(const std::string& prefix) const;

  const std::map<std::string, std::string>& values() const { return values_; }

  // Canonical "key = value" dump, sorted by key.
  std::string dump() const;

 private:
  std::map<std::string, std::string> values_;
};

double parse_double(std::string_view text);
std::int64_t parse_int(std::string_view text);
std::vector<std::string> split_list(std::string_view text, char separator = ',');
std::string trim(std::string_view text);

}  // namespace finegrain
