#include "finegrain/config.h"

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <charconv>
#include <cstdlib>
#include <sstream>

#include "finegrain/error.h"
#include "finegrain/io.h"

namespace finegrain {

std::string trim(std::string_view text) {
  std::size_t begin = 0;
  std::size_t end = text.size();
  while (begin < end && std::isspace(static_cast<unsigned char>(text[begin]))) ++begin;
  while (end > begin && std::isspace(static_cast<unsigned char>(text[end - 1]))) --end;
  return std::string(text.substr(begin, end - begin));
}

std::vector<std::string> split_list(std::string_view text, char separator) {
  std::vector<std::string> items;
  if (trim(text).empty()) return items;
  std::size_t start = 0;
  while (true) {
    std::size_t end = text.find(separator, start);
    items.push_back(trim(text.substr(start, end == std::string_view::npos ? text.size() - start
                                                                          : end - start)));
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return items;
}

double parse_double(std::string_view text) {
  std::string s = trim(text);
  char* end = nullptr;
  errno = 0;
  double value = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE) {
    throw Error(ErrorKind::kParse, "not a number: '" + s + "'");
  }
  return value;
}

std::int64_t parse_int(std::string_view text) {
  std::string s = trim(text);
  std::int64_t value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    throw Error(ErrorKind::kParse, "not an integer: '" + s + "'");
  }
  return value;
}

Config Config::parse(std::string_view text) {
  Config config;
  std::string section;
  int line_no = 0;
  for (const std::string& raw : split_lines(text)) {
    ++line_no;
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw Error(ErrorKind::kParse, "line " + std::to_string(line_no) + ": unterminated section");
      }
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      continue;
    }
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw Error(ErrorKind::kParse, "line " + std::to_string(line_no) + ": expected key = value");
    }
    std::string key = trim(std::string_view(line).substr(0, eq));
    if (key.empty()) {
      throw Error(ErrorKind::kParse, "line " + std::to_string(line_no) + ": empty key");
    }
    if (!section.empty()) key = section + "." + key;
    config.values_[key] = trim(std::string_view(line).substr(eq + 1));
  }
  return config;
}

Config Config::load(const std::string& path) { return parse(read_file(path)); }

void Config::apply_environment(std::string_view prefix, const std::vector<std::string>& known_keys) {
  std::vector<std::string> keys = known_keys;
  for (const auto& [key, value] : values_) keys.push_back(key);
  for (const std::string& key : keys) {
    std::string name(prefix);
    for (char c : key) {
      name += (c == '.' || c == '-') ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    }
    if (const char* value = std::getenv(name.c_str())) values_[key] = value;
  }
}

void Config::merge(const Config& overrides) {
  for (const auto& [key, value] : overrides.values_) values_[key] = value;
}

std::optional<std::string> Config::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  return get(key).value_or(fallback);
}

double Config::get_double(const std::string& key, double fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  try {
    return parse_double(*v);
  } catch (const Error& e) {
    throw Error(ErrorKind::kParse, key + ": " + e.what());
  }
}

std::int64_t Config::get_int(const std::string& key, std::int64_t fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  try {
    return parse_int(*v);
  } catch (const Error& e) {
    throw Error(ErrorKind::kParse, key + ": " + e.what());
  }
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  std::string s = trim(*v);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw Error(ErrorKind::kParse, key + ": not a boolean: '" + s + "'");
}

std::vector<double> Config::get_doubles(const std::string& key,
                                        const std::vector<double>& fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  std::vector<double> out;
  for (const std::string& item : split_list(*v)) out.push_back(parse_double(item));
  return out;
}

std::vector<std::string> Config::get_strings(const std::string& key,
                                             const std::vector<std::string>& fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  return split_list(*v);
}

std::map<std::string, std::string> Config::with_prefix(const std::string& prefix) const {
  std::map<std::string, std::string> out;
  for (auto it = values_.lower_bound(prefix); it != values_.end(); ++it) {
    if (it->first.compare(0, prefix.size(), prefix) != 0) break;
    out[it->first.substr(prefix.size())] = it->second;
  }
  return out;
}

std::string Config::dump() const {
  std::ostringstream out;
  for (const auto& [key, value] : values_) out << key << " = " << value << "\n";
  return out.str();
}

}  // namespace finegrain
