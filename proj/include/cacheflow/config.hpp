#pragma once

// INI-style configuration with a canonical form whose SHA-256 hash is
// embedded in every derived artifact, so outputs can be traced back to the
// exact settings that produced them.

#include <cstddef>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <string>
#include <vector>

#include "cacheflow/detail/sha256.hpp"
#include "cacheflow/error.hpp"

namespace cacheflow {

class Config {
 public:
  Config() = default;

  // Parses `[section]` headers and `key = value` lines.  `#` and `;` start
  // comments; blank lines are skipped.  Keys before any section header live
  // in the unnamed section "".
  static Config parse(const std::string& text, const std::string& origin = "<string>") {
    Config cfg;
    std::string section;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
      std::size_t eol = text.find('\n', pos);
      if (eol == std::string::npos) eol = text.size();
      std::string line = text.substr(pos, eol - pos);
      pos = eol + 1;
      ++line_no;
      strip_comment(line);
      trim(line);
      if (line.empty()) {
        if (pos > text.size()) break;
        continue;
      }
      if (line.front() == '[') {
        if (line.back() != ']' || line.size() < 3) {
          throw ConfigError(origin + ":" + std::to_string(line_no) +
                            ": malformed section header '" + line + "'");
        }
        section = line.substr(1, line.size() - 2);
        trim(section);
        if (section.empty()) {
          throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty section name");
        }
      } else {
        std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
          throw ConfigError(origin + ":" + std::to_string(line_no) +
                            ": expected 'key = value', got '" + line + "'");
        }
        std::string key = line.substr(0, eq);
        std::string value = line.substr(eq + 1);
        trim(key);
        trim(value);
        if (key.empty()) {
          throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
        }
        cfg.values_[qualify(section, key)] = value;
      }
      if (pos > text.size()) break;
    }
    return cfg;
  }

  static Config parse_file(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw IoError("cannot open config file " + path);
    std::string text;
    char buf[4096];
    std::size_t got;
    while ((got = std::fread(buf, 1, sizeof buf, f)) > 0) text.append(buf, got);
    std::fclose(f);
    return parse(text, path);
  }

  bool has(const std::string& section, const std::string& key) const {
    return values_.count(qualify(section, key)) != 0;
  }

  // CLI overrides land here after file parsing; last write wins.
  void set(const std::string& section, const std::string& key, const std::string& value) {
    values_[qualify(section, key)] = value;
  }

  std::string get_string(const std::string& section, const std::string& key,
                         const std::string& fallback) const {
    auto it = values_.find(qualify(section, key));
    return it == values_.end() ? fallback : it->second;
  }

  std::string require_string(const std::string& section, const std::string& key) const {
    auto it = values_.find(qualify(section, key));
    if (it == values_.end()) {
      throw ConfigError("missing required config key " + qualify(section, key));
    }
    return it->second;
  }

  double get_double(const std::string& section, const std::string& key, double fallback) const {
    auto it = values_.find(qualify(section, key));
    return it == values_.end() ? fallback : to_double(it->first, it->second);
  }

  double require_double(const std::string& section, const std::string& key) const {
    return to_double(qualify(section, key), require_string(section, key));
  }

  long long get_int(const std::string& section, const std::string& key, long long fallback) const {
    auto it = values_.find(qualify(section, key));
    return it == values_.end() ? fallback : to_int(it->first, it->second);
  }

  long long require_int(const std::string& section, const std::string& key) const {
    return to_int(qualify(section, key), require_string(section, key));
  }

  bool get_bool(const std::string& section, const std::string& key, bool fallback) const {
    auto it = values_.find(qualify(section, key));
    return it == values_.end() ? fallback : to_bool(it->first, it->second);
  }

  // Comma-separated integer list, e.g. flow_hidden = 256,256.
  std::vector<std::size_t> get_size_list(const std::string& section, const std::string& key,
                                         const std::vector<std::size_t>& fallback) const {
    auto it = values_.find(qualify(section, key));
    if (it == values_.end()) return fallback;
    std::vector<std::size_t> out;
    std::string item;
    const std::string& raw = it->second;
    for (std::size_t i = 0; i <= raw.size(); ++i) {
      if (i == raw.size() || raw[i] == ',') {
        trim(item);
        if (item.empty()) {
          throw ConfigError("empty element in list " + it->first + " = '" + raw + "'");
        }
        long long v = to_int(it->first, item);
        if (v <= 0) {
          throw ConfigError("list element must be positive in " + it->first + " = '" + raw + "'");
        }
        out.push_back(static_cast<std::size_t>(v));
        item.clear();
      } else {
        item.push_back(raw[i]);
      }
    }
    return out;
  }

  // Canonical form: sorted "section.key=value" lines.  Two configs that set
  // the same effective values hash identically regardless of file ordering.
  std::string canonical() const {
    std::string out;
    for (const auto& [k, v] : values_) {
      out += k;
      out += '=';
      out += v;
      out += '\n';
    }
    return out;
  }

  std::string hash_hex() const {
    std::string c = canonical();
    auto digest = detail::sha256(c.data(), c.size());
    return detail::hex(digest.data(), digest.size());
  }

 private:
  static std::string qualify(const std::string& section, const std::string& key) {
    return section.empty() ? key : section + "." + key;
  }

  static void strip_comment(std::string& s) {
    std::size_t cut = s.size();
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s[i] == '#' || s[i] == ';') {
        cut = i;
        break;
      }
    }
    s.resize(cut);
  }

  static void trim(std::string& s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
    s = s.substr(b, e - b);
  }

  static double to_double(const std::string& qkey, const std::string& raw) {
    if (raw.empty()) throw ConfigError("empty value for " + qkey);
    char* end = nullptr;
    double v = std::strtod(raw.c_str(), &end);
    if (end != raw.c_str() + raw.size()) {
      throw ConfigError("cannot parse '" + raw + "' as number for " + qkey);
    }
    return v;
  }

  static long long to_int(const std::string& qkey, const std::string& raw) {
    if (raw.empty()) throw ConfigError("empty value for " + qkey);
    char* end = nullptr;
    long long v = std::strtoll(raw.c_str(), &end, 10);
    if (end != raw.c_str() + raw.size()) {
      throw ConfigError("cannot parse '" + raw + "' as integer for " + qkey);
    }
    return v;
  }

  static bool to_bool(const std::string& qkey, const std::string& raw) {
    if (raw == "true" || raw == "1" || raw == "yes" || raw == "on") return true;
    if (raw == "false" || raw == "0" || raw == "no" || raw == "off") return false;
    throw ConfigError("cannot parse '" + raw + "' as bool for " + qkey);
  }

  std::map<std::string, std::string> values_;
};

}  // namespace cacheflow
