#include "cefl/toml_lite.hpp"

#include <cstdio>
#include <fstream>

namespace cefl {
namespace {

std::string strip(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

// Removes a trailing comment that is not inside a string literal.
std::string strip_comment(const std::string& s) {
  bool in_str = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"') in_str = !in_str;
    if (s[i] == '#' && !in_str) return s.substr(0, i);
  }
  return s;
}

TomlValue parse_value(const std::string& raw, int line_no) {
  TomlValue v;
  std::string s = strip(raw);
  if (s.empty()) throw ConfigError("empty TOML value at line " + std::to_string(line_no));
  if (s.front() == '"') {
    if (s.size() < 2 || s.back() != '"')
      throw ConfigError("unterminated string at line " + std::to_string(line_no));
    v.kind = TomlValue::Kind::String;
    v.str = s.substr(1, s.size() - 2);
    return v;
  }
  if (s == "true" || s == "false") {
    v.kind = TomlValue::Kind::Boolean;
    v.boolean = (s == "true");
    v.num = v.boolean ? 1.0 : 0.0;
    return v;
  }
  if (s.front() == '[') {
    if (s.back() != ']')
      throw ConfigError("unterminated array at line " + std::to_string(line_no));
    v.kind = TomlValue::Kind::Array;
    std::string body = s.substr(1, s.size() - 2);
    std::stringstream ss(body);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = strip(item);
      if (item.empty()) continue;
      try {
        v.array.push_back(std::stod(item));
      } catch (const std::exception&) {
        throw ConfigError("bad array element '" + item + "' at line " +
                          std::to_string(line_no));
      }
    }
    return v;
  }
  try {
    std::size_t pos = 0;
    v.num = std::stod(s, &pos);
    if (pos != s.size())
      throw ConfigError("trailing characters after number at line " +
                        std::to_string(line_no));
    v.kind = TomlValue::Kind::Number;
    return v;
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    throw ConfigError("cannot parse TOML value '" + s + "' at line " +
                      std::to_string(line_no));
  }
}

std::string format_number(double x) {
  long long as_int = static_cast<long long>(x);
  char buf[64];
  if (static_cast<double>(as_int) == x && std::abs(x) < 1e15) {
    std::snprintf(buf, sizeof(buf), "%lld", as_int);
  } else {
    std::snprintf(buf, sizeof(buf), "%.17g", x);
  }
  return buf;
}

}  // namespace

TomlDoc TomlDoc::parse(const std::string& text) {
  TomlDoc doc;
  std::stringstream ss(text);
  std::string line;
  std::string table;
  int line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    line = strip(strip_comment(line));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("bad table header at line " + std::to_string(line_no));
      table = strip(line.substr(1, line.size() - 2));
      continue;
    }
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("expected key = value at line " + std::to_string(line_no));
    std::string key = strip(line.substr(0, eq));
    if (key.empty()) throw ConfigError("empty key at line " + std::to_string(line_no));
    std::string full = table.empty() ? key : table + "." + key;
    doc.values_[full] = parse_value(line.substr(eq + 1), line_no);
  }
  return doc;
}

TomlDoc TomlDoc::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open TOML file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string TomlDoc::dump() const {
  std::string out;
  std::string current_table;
  bool first = true;
  for (const auto& [key, val] : values_) {
    std::size_t dot = key.rfind('.');
    std::string table = dot == std::string::npos ? "" : key.substr(0, dot);
    std::string leaf = dot == std::string::npos ? key : key.substr(dot + 1);
    if (table != current_table || first) {
      if (!table.empty()) {
        if (!first) out += "\n";
        out += "[" + table + "]\n";
      }
      current_table = table;
      first = false;
    }
    out += leaf + " = ";
    switch (val.kind) {
      case TomlValue::Kind::Number:
        out += format_number(val.num);
        break;
      case TomlValue::Kind::Boolean:
        out += val.boolean ? "true" : "false";
        break;
      case TomlValue::Kind::String:
        out += "\"" + val.str + "\"";
        break;
      case TomlValue::Kind::Array: {
        out += "[";
        for (std::size_t i = 0; i < val.array.size(); ++i) {
          if (i) out += ", ";
          out += format_number(val.array[i]);
        }
        out += "]";
        break;
      }
    }
    out += "\n";
  }
  return out;
}

}  // namespace cefl
