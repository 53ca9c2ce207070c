#include "flsim/toml.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "flsim/errors.hpp"

namespace flsim {

namespace {

struct Parser {
  std::string origin;
  std::size_t line_no = 0;

  [[noreturn]] void fail(const std::string& msg) const {
    throw ConfigError(origin + ":" + std::to_string(line_no) + ": " + msg);
  }

  static bool bare_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
  }

  void skip_ws(const std::string& s, std::size_t& i) const {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
  }

  std::string parse_key_part(const std::string& s, std::size_t& i) const {
    skip_ws(s, i);
    std::string key;
    if (i < s.size() && s[i] == '"') {
      key = parse_basic_string(s, i);
    } else {
      while (i < s.size() && bare_char(s[i])) key += s[i++];
    }
    if (key.empty()) fail("expected a key");
    skip_ws(s, i);
    return key;
  }

  std::vector<std::string> parse_dotted_key(const std::string& s,
                                            std::size_t& i) const {
    std::vector<std::string> parts{parse_key_part(s, i)};
    while (i < s.size() && s[i] == '.') {
      ++i;
      parts.push_back(parse_key_part(s, i));
    }
    return parts;
  }

  std::string parse_basic_string(const std::string& s, std::size_t& i) const {
    if (s[i] != '"') fail("expected '\"'");
    ++i;
    std::string out;
    while (i < s.size() && s[i] != '"') {
      char c = s[i++];
      if (c == '\\') {
        if (i >= s.size()) fail("dangling escape in string");
        switch (s[i++]) {
          case '"': out += '"'; break;
          case '\\': out += '\\'; break;
          case 'n': out += '\n'; break;
          case 't': out += '\t'; break;
          case 'r': out += '\r'; break;
          default: fail("unsupported string escape");
        }
      } else {
        out += c;
      }
    }
    if (i >= s.size()) fail("unterminated string");
    ++i;  // closing quote
    return out;
  }

  TomlValue parse_value(const std::string& s, std::size_t& i) const {
    skip_ws(s, i);
    if (i >= s.size()) fail("expected a value");
    if (s[i] == '"') return TomlValue{parse_basic_string(s, i)};
    if (s[i] == '[') {
      ++i;
      TomlArray arr;
      skip_ws(s, i);
      while (i < s.size() && s[i] != ']') {
        arr.push_back(parse_value(s, i));
        skip_ws(s, i);
        if (i < s.size() && s[i] == ',') {
          ++i;
          skip_ws(s, i);
        }
      }
      if (i >= s.size()) fail("unterminated array");
      ++i;
      return TomlValue{arr};
    }
    // bare token: bool, int, or float
    std::size_t start = i;
    while (i < s.size() && s[i] != ',' && s[i] != ']' && s[i] != '#' &&
           s[i] != ' ' && s[i] != '\t')
      ++i;
    std::string tok = s.substr(start, i - start);
    if (tok == "true") return TomlValue{true};
    if (tok == "false") return TomlValue{false};
    if (tok.empty()) fail("expected a value");

    std::string digits = tok;
    digits.erase(std::remove(digits.begin(), digits.end(), '_'), digits.end());
    const bool looks_float = digits.find_first_of(".eE") != std::string::npos &&
                             digits.find_first_not_of("+-0123456789.eE") ==
                                 std::string::npos;
    if (!looks_float) {
      std::int64_t iv = 0;
      auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), iv);
      if (ec == std::errc() && p == digits.data() + digits.size())
        return TomlValue{iv};
    }
    try {
      std::size_t used = 0;
      const double dv = std::stod(digits, &used);
      if (used == digits.size()) return TomlValue{dv};
    } catch (const std::exception&) {
    }
    fail("cannot parse value '" + tok + "'");
  }
};

// Comment handling and bracket balancing both have to ignore '#', '[' and
// ']' inside quoted strings.
std::string strip_comment(const std::string& s) {
  bool in_string = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (in_string) {
      if (c == '\\')
        ++i;
      else if (c == '"')
        in_string = false;
    } else if (c == '"') {
      in_string = true;
    } else if (c == '#') {
      return s.substr(0, i);
    }
  }
  return s;
}

int bracket_depth(const std::string& s) {
  bool in_string = false;
  int depth = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char c = s[i];
    if (in_string) {
      if (c == '\\')
        ++i;
      else if (c == '"')
        in_string = false;
    } else if (c == '"') {
      in_string = true;
    } else if (c == '[') {
      ++depth;
    } else if (c == ']') {
      --depth;
    }
  }
  return depth;
}

TomlTable* descend(TomlTable& root, const std::vector<std::string>& path,
                   std::size_t count, const Parser& p) {
  TomlTable* t = &root;
  for (std::size_t k = 0; k < count; ++k) {
    auto it = t->find(path[k]);
    if (it == t->end()) {
      TomlValue v;
      v.data = std::make_shared<TomlTable>();
      it = t->emplace(path[k], std::move(v)).first;
    } else if (!it->second.is_table()) {
      p.fail("key '" + path[k] + "' is already a non-table value");
    }
    t = &it->second.table();
  }
  return t;
}

}  // namespace

TomlTable parse_toml(std::istream& in, const std::string& origin) {
  TomlTable root;
  Parser p{origin};
  TomlTable* current = &root;
  std::string raw;
  while (std::getline(in, raw)) {
    ++p.line_no;
    if (!raw.empty() && raw.back() == '\r') raw.pop_back();
    std::string line = strip_comment(raw);

    // Arrays may span physical lines; join until brackets balance.
    while (bracket_depth(line) > 0 && std::getline(in, raw)) {
      ++p.line_no;
      if (!raw.empty() && raw.back() == '\r') raw.pop_back();
      line += " " + strip_comment(raw);
    }
    if (bracket_depth(line) > 0) p.fail("unterminated array");

    std::size_t i = 0;
    p.skip_ws(line, i);
    if (i >= line.size() || line[i] == '#') continue;

    if (line[i] == '[') {
      if (i + 1 < line.size() && line[i + 1] == '[')
        p.fail("arrays of tables are not supported by this reader");
      ++i;
      auto path = p.parse_dotted_key(line, i);
      if (i >= line.size() || line[i] != ']') p.fail("expected ']'");
      ++i;
      p.skip_ws(line, i);
      if (i < line.size() && line[i] != '#') p.fail("junk after table header");
      current = descend(root, path, path.size(), p);
      continue;
    }

    auto path = p.parse_dotted_key(line, i);
    if (i >= line.size() || line[i] != '=') p.fail("expected '='");
    ++i;
    TomlValue value = p.parse_value(line, i);
    p.skip_ws(line, i);
    if (i < line.size() && line[i] != '#') p.fail("junk after value");

    TomlTable* t = current;
    if (path.size() > 1) t = descend(*current, path, path.size() - 1, p);
    if (!t->emplace(path.back(), std::move(value)).second)
      p.fail("duplicate key '" + path.back() + "'");
  }
  return root;
}

TomlTable parse_toml_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse_toml(in, path);
}

TomlTable parse_toml_string(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  return parse_toml(in, origin);
}

}  // namespace flsim
