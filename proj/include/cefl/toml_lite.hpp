#pragma once

// Minimal TOML subset used for config and parameter files: [table] headers,
// key = value with doubles, integers, booleans, strings and flat arrays of
// numbers. Nested tables are addressed as "table.key".

#include <cctype>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cefl/common.hpp"

namespace cefl {

struct TomlValue {
  enum class Kind { Number, Boolean, String, Array } kind = Kind::Number;
  double num = 0.0;
  bool boolean = false;
  std::string str;
  std::vector<double> array;
};

class TomlDoc {
 public:
  static TomlDoc parse(const std::string& text);
  static TomlDoc parse_file(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  double number(const std::string& key) const {
    return get(key, TomlValue::Kind::Number).num;
  }
  double number_or(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second.num;
  }
  long long integer_or(const std::string& key, long long fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : static_cast<long long>(it->second.num);
  }
  bool boolean_or(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    return it->second.kind == TomlValue::Kind::Boolean ? it->second.boolean
                                                       : it->second.num != 0.0;
  }
  std::string string_or(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second.str;
  }
  std::vector<double> array_or(const std::string& key, std::vector<double> fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? std::move(fallback) : it->second.array;
  }

  void set_number(const std::string& key, double v) {
    TomlValue t;
    t.kind = TomlValue::Kind::Number;
    t.num = v;
    values_[key] = t;
  }
  void set_string(const std::string& key, const std::string& v) {
    TomlValue t;
    t.kind = TomlValue::Kind::String;
    t.str = v;
    values_[key] = t;
  }
  void set_array(const std::string& key, const std::vector<double>& v) {
    TomlValue t;
    t.kind = TomlValue::Kind::Array;
    t.array = v;
    values_[key] = t;
  }

  const std::map<std::string, TomlValue>& entries() const { return values_; }

  // Serializes grouped by table prefix, deterministic key order.
  std::string dump() const;

 private:
  const TomlValue& get(const std::string& key, TomlValue::Kind kind) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("missing TOML key: " + key);
    if (it->second.kind != kind && kind == TomlValue::Kind::Number &&
        it->second.kind != TomlValue::Kind::Boolean)
      throw ConfigError("TOML key has wrong type: " + key);
    return it->second;
  }

  std::map<std::string, TomlValue> values_;
};

}  // namespace cefl
