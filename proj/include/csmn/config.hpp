#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace csmn {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flat `key = value` configuration. `#` starts a comment, `[section]` lines
// are allowed as visual grouping but keys stay flat. Later assignments and
// command-line overrides win. Keys under the reserved `manifest.` prefix are
// written by the harness and ignored by consumers.
class Config {
 public:
  Config() = default;

  static Config from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    Config c;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      c.parse_line(line, path, lineno);
    }
    return c;
  }

  static Config from_string(const std::string& text) {
    Config c;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      c.parse_line(line, "<string>", lineno);
    }
    return c;
  }

  // "key=value" tokens, e.g. trailing CLI arguments.
  void apply_override(const std::string& token) {
    auto eq = token.find('=');
    if (eq == std::string::npos || eq == 0)
      throw ConfigError("override must look like key=value, got: " + token);
    set(trim(token.substr(0, eq)), trim(token.substr(eq + 1)));
  }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& dflt) const {
    auto it = values_.find(key);
    return it == values_.end() ? dflt : it->second;
  }
  std::string require_string(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("config: missing required key " + key);
    return it->second;
  }

  long long get_int(const std::string& key, long long dflt) const {
    auto it = values_.find(key);
    if (it == values_.end()) return dflt;
    return parse_int(key, it->second);
  }
  double get_double(const std::string& key, double dflt) const {
    auto it = values_.find(key);
    if (it == values_.end()) return dflt;
    return parse_double(key, it->second);
  }
  bool get_bool(const std::string& key, bool dflt) const {
    auto it = values_.find(key);
    if (it == values_.end()) return dflt;
    const std::string& v = it->second;
    if (v == "on" || v == "true" || v == "1" || v == "yes") return true;
    if (v == "off" || v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config: key " + key + " is not a boolean: " + v);
  }
  std::vector<double> get_double_list(const std::string& key,
                                      std::vector<double> dflt) const {
    auto it = values_.find(key);
    if (it == values_.end()) return dflt;
    std::vector<double> out;
    for (const auto& tok : split(it->second, ',')) out.push_back(parse_double(key, tok));
    return out;
  }
  std::vector<long long> get_int_list(const std::string& key,
                                      std::vector<long long> dflt) const {
    auto it = values_.find(key);
    if (it == values_.end()) return dflt;
    std::vector<long long> out;
    for (const auto& tok : split(it->second, ',')) out.push_back(parse_int(key, tok));
    return out;
  }

  const std::map<std::string, std::string>& entries() const { return values_; }

  // Resolved form, sorted by key; suitable as a replayable config file.
  std::string serialize() const {
    std::ostringstream out;
    for (const auto& [k, v] : values_) out << k << " = " << v << '\n';
    return out.str();
  }

  static std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
      if (c == sep) {
        out.push_back(trim(cur));
        cur.clear();
      } else {
        cur += c;
      }
    }
    if (!cur.empty() || !out.empty()) out.push_back(trim(cur));
    return out;
  }

 private:
  void parse_line(const std::string& raw, const std::string& src, std::size_t lineno) {
    std::string line = raw;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) return;
    if (line.front() == '[' && line.back() == ']') return;  // section marker
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: " + src + ":" + std::to_string(lineno) +
                        ": expected key = value");
    set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }

  static long long parse_int(const std::string& key, const std::string& v) {
    try {
      std::size_t pos = 0;
      long long r = std::stoll(v, &pos);
      if (pos != v.size()) throw std::invalid_argument("trailing");
      return r;
    } catch (const std::exception&) {
      throw ConfigError("config: key " + key + " is not an integer: " + v);
    }
  }
  static double parse_double(const std::string& key, const std::string& v) {
    try {
      std::size_t pos = 0;
      double r = std::stod(v, &pos);
      if (pos != v.size()) throw std::invalid_argument("trailing");
      return r;
    } catch (const std::exception&) {
      throw ConfigError("config: key " + key + " is not a number: " + v);
    }
  }

  static std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  std::map<std::string, std::string> values_;
};

}  // namespace csmn
