#pragma once

// The small TOML subset used by experiment spec files: [table] headers, `key = value`
// pairs, '#' comments, and values that are strings, numbers, booleans or one-line arrays
// of those. Dotted keys, inline tables, multi-line strings and dates are not supported.

#include <cctype>
#include <charconv>
#include <istream>
#include <limits>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "gdml/error.hpp"

namespace gdml::toml {

struct Value;
using Array = std::vector<Value>;

struct Value {
  std::variant<std::string, double, bool, Array> v;
  std::size_t line = 0;

  bool is_string() const { return std::holds_alternative<std::string>(v); }
  bool is_number() const { return std::holds_alternative<double>(v); }
  bool is_bool() const { return std::holds_alternative<bool>(v); }
  bool is_array() const { return std::holds_alternative<Array>(v); }

  const std::string& as_string() const {
    if (!is_string()) throw ParseError(line, "expected a string");
    return std::get<std::string>(v);
  }
  double as_number() const {
    if (!is_number()) throw ParseError(line, "expected a number");
    return std::get<double>(v);
  }
  bool as_bool() const {
    if (!is_bool()) throw ParseError(line, "expected true or false");
    return std::get<bool>(v);
  }
  const Array& as_array() const {
    if (!is_array()) throw ParseError(line, "expected an array");
    return std::get<Array>(v);
  }

  // Scalars as written (strings unquoted); arrays as comma-separated items.
  std::string text() const {
    if (is_string()) return as_string();
    if (is_bool()) return as_bool() ? "true" : "false";
    if (is_number()) {
      char buf[64];
      auto r = std::to_chars(buf, buf + sizeof(buf), as_number());
      return std::string(buf, r.ptr);
    }
    std::string out;
    for (const auto& item : as_array()) {
      if (!out.empty()) out += ",";
      out += item.text();
    }
    return out;
  }
};

using Table = std::map<std::string, Value>;
using Document = std::map<std::string, Table>;  // "" holds keys before the first header

namespace detail {

class LineParser {
 public:
  LineParser(std::string_view s, std::size_t line) : s_(s), line_(line) {}

  void skip_ws() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t' || s_[pos_] == '\r')) ++pos_;
  }
  bool at_end_or_comment() {
    skip_ws();
    return pos_ >= s_.size() || s_[pos_] == '#';
  }
  [[noreturn]] void fail(const std::string& what) const { throw ParseError(line_, what); }

  std::string key() {
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == '"') return quoted();
    std::size_t b = pos_;
    while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_' || s_[pos_] == '-'))
      ++pos_;
    if (b == pos_) fail("expected a key");
    return std::string(s_.substr(b, pos_ - b));
  }

  void expect(char c) {
    skip_ws();
    if (pos_ >= s_.size() || s_[pos_] != c) fail(std::string("expected '") + c + "'");
    ++pos_;
  }

  Value value() {
    skip_ws();
    if (pos_ >= s_.size()) fail("missing value");
    Value out;
    out.line = line_;
    const char c = s_[pos_];
    if (c == '"') {
      out.v = quoted();
    } else if (c == '[') {
      ++pos_;
      Array items;
      for (;;) {
        skip_ws();
        if (pos_ < s_.size() && s_[pos_] == ']') {
          ++pos_;
          break;
        }
        items.push_back(value());
        skip_ws();
        if (pos_ < s_.size() && s_[pos_] == ',') {
          ++pos_;
        } else if (pos_ < s_.size() && s_[pos_] == ']') {
          ++pos_;
          break;
        } else {
          fail("expected ',' or ']' in array");
        }
      }
      out.v = std::move(items);
    } else {
      std::size_t b = pos_;
      while (pos_ < s_.size() && s_[pos_] != ',' && s_[pos_] != ']' && s_[pos_] != '#' && s_[pos_] != ' ' &&
             s_[pos_] != '\t' && s_[pos_] != '\r')
        ++pos_;
      std::string tok(s_.substr(b, pos_ - b));
      if (tok == "true") {
        out.v = true;
      } else if (tok == "false") {
        out.v = false;
      } else if (tok == "inf" || tok == "+inf") {
        out.v = std::numeric_limits<double>::infinity();
      } else {
        std::string digits;
        for (char ch : tok)
          if (ch != '_') digits += ch;
        if (!digits.empty() && digits[0] == '+') digits.erase(0, 1);
        double x = 0.0;
        auto r = std::from_chars(digits.data(), digits.data() + digits.size(), x);
        if (digits.empty() || r.ec != std::errc() || r.ptr != digits.data() + digits.size())
          fail("bad value '" + tok + "'");
        out.v = x;
      }
    }
    return out;
  }

 private:
  std::string quoted() {
    ++pos_;
    std::string out;
    while (pos_ < s_.size() && s_[pos_] != '"') {
      char ch = s_[pos_++];
      if (ch == '\\' && pos_ < s_.size()) {
        char e = s_[pos_++];
        switch (e) {
          case 'n': out += '\n'; break;
          case 't': out += '\t'; break;
          case '"': out += '"'; break;
          case '\\': out += '\\'; break;
          default: fail(std::string("unsupported escape '\\") + e + "'");
        }
      } else {
        out += ch;
      }
    }
    if (pos_ >= s_.size()) fail("unterminated string");
    ++pos_;
    return out;
  }

  std::string_view s_;
  std::size_t line_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline Document parse(std::istream& in) {
  Document doc;
  std::string current;
  doc[current];
  std::string line;
  for (std::size_t no = 1; std::getline(in, line); ++no) {
    detail::LineParser p(line, no);
    if (p.at_end_or_comment()) continue;
    if (line.find_first_not_of(" \t") != std::string::npos && line[line.find_first_not_of(" \t")] == '[') {
      p.expect('[');
      current = p.key();
      p.expect(']');
      if (!p.at_end_or_comment()) p.fail("unexpected text after table header");
      if (doc.count(current) && !doc[current].empty()) p.fail("table [" + current + "] defined twice");
      doc[current];
      continue;
    }
    std::string k = p.key();
    p.expect('=');
    Value v = p.value();
    if (!p.at_end_or_comment()) p.fail("unexpected text after value");
    auto& table = doc[current];
    if (table.count(k)) p.fail("duplicate key '" + k + "'");
    table.emplace(std::move(k), std::move(v));
  }
  return doc;
}

}  // namespace gdml::toml
