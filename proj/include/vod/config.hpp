#ifndef VOD_CONFIG_HPP
#define VOD_CONFIG_HPP

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>

// Flat `key = value` configuration with [section] headers. Keys are
// addressed as "section.key". Unknown keys are hard errors so experiment
// configs cannot drift silently.

namespace vod {

struct ConfigError : std::runtime_error {
  int line;
  ConfigError(int line_no, const std::string& message)
      : std::runtime_error("config line " + std::to_string(line_no) + ": " + message),
        line(line_no) {}
};

class ConfigFile {
 public:
  static ConfigFile parse_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_string(buffer.str());
  }

  static ConfigFile parse_string(const std::string& text) {
    ConfigFile config;
    std::istringstream in(text);
    std::string line, section;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const std::string trimmed = trim(line);
      if (trimmed.empty() || trimmed[0] == '#') continue;
      if (trimmed.front() == '[') {
        if (trimmed.back() != ']') throw ConfigError(line_no, "unterminated section header");
        section = trim(trimmed.substr(1, trimmed.size() - 2));
        if (section.empty()) throw ConfigError(line_no, "empty section name");
        continue;
      }
      const auto eq = trimmed.find('=');
      if (eq == std::string::npos) throw ConfigError(line_no, "expected key = value");
      const std::string key = trim(trimmed.substr(0, eq));
      const std::string value = trim(trimmed.substr(eq + 1));
      if (key.empty()) throw ConfigError(line_no, "empty key");
      const std::string full = section.empty() ? key : section + "." + key;
      if (config.values_.count(full)) throw ConfigError(line_no, "duplicate key '" + full + "'");
      config.values_[full] = value;
      config.lines_[full] = line_no;
    }
    return config;
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  std::string require_string(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw std::runtime_error("config: missing required key '" + key + "'");
    return it->second;
  }

  long long get_int(const std::string& key, long long fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      std::size_t used = 0;
      const long long v = std::stoll(it->second, &used);
      if (used != it->second.size()) throw std::invalid_argument("trailing characters");
      return v;
    } catch (const std::exception&) {
      throw ConfigError(lines_.at(key), "expected an integer for '" + key + "'");
    }
  }

  double get_double(const std::string& key, double fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      std::size_t used = 0;
      const double v = std::stod(it->second, &used);
      if (used != it->second.size()) throw std::invalid_argument("trailing characters");
      return v;
    } catch (const std::exception&) {
      throw ConfigError(lines_.at(key), "expected a number for '" + key + "'");
    }
  }

  bool get_bool(const std::string& key, bool fallback) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw ConfigError(lines_.at(key), "expected true/false for '" + key + "'");
  }

  /// Every present key must be in the allow list.
  void check_known_keys(const std::set<std::string>& known) const {
    for (const auto& [key, value] : values_) {
      if (!known.count(key))
        throw ConfigError(lines_.at(key), "unknown key '" + key + "'");
    }
  }

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  static std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
  }

  std::map<std::string, std::string> values_;
  std::map<std::string, int> lines_;
};

}  // namespace vod

#endif  // VOD_CONFIG_HPP
