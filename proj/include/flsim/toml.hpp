#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <variant>
#include <vector>

namespace flsim {

// Minimal TOML reader covering what experiment files use: comments, [table]
// headers with dotted names, `key = value` pairs (dotted keys too), basic
// strings, integers, floats, booleans and flat arrays.  No dates, inline
// tables or multi-line strings.  Everything else is a ConfigError carrying
// the line number.
struct TomlValue;
using TomlArray = std::vector<TomlValue>;
using TomlTable = std::map<std::string, TomlValue>;

struct TomlValue {
  std::variant<bool, std::int64_t, double, std::string, TomlArray,
               std::shared_ptr<TomlTable>>
      data;

  bool is_table() const {
    return std::holds_alternative<std::shared_ptr<TomlTable>>(data);
  }
  TomlTable& table() { return *std::get<std::shared_ptr<TomlTable>>(data); }
  const TomlTable& table() const {
    return *std::get<std::shared_ptr<TomlTable>>(data);
  }
};

TomlTable parse_toml(std::istream& in, const std::string& origin);
TomlTable parse_toml_file(const std::string& path);
TomlTable parse_toml_string(const std::string& text, const std::string& origin);

}  // namespace flsim
