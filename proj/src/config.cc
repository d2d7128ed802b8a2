// Copyright 2026 The R2D2 Engine Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "r2d2/config.h"

#include <cctype>
#include <charconv>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include "r2d2/errors.h"

namespace r2d2 {
namespace {

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  Json Run() {
    Json root = Json::object();
    Json* table = &root;
    while (!AtEnd()) {
      SkipBlank();
      if (AtEnd()) break;
      if (Peek() == '[') {
        table = OpenTable(root);
      } else {
        ParseKeyValue(*table);
      }
      EndLine();
    }
    return root;
  }

 private:
  bool AtEnd() const { return pos_ >= text_.size(); }
  char Peek() const { return text_[pos_]; }

  [[noreturn]] void Error(const std::string& message) const {
    Fail(ErrorCode::kParse, "config line " + std::to_string(line_) + ": " + message);
  }

  void SkipSpaces() {
    while (!AtEnd() && (Peek() == ' ' || Peek() == '\t')) ++pos_;
  }

  void SkipComment() {
    if (!AtEnd() && Peek() == '#') {
      while (!AtEnd() && Peek() != '\n') ++pos_;
    }
  }

  // Whitespace, newlines and comments.
  void SkipBlank() {
    while (!AtEnd()) {
      SkipSpaces();
      SkipComment();
      if (AtEnd()) return;
      if (Peek() == '\n') {
        ++line_;
        ++pos_;
      } else if (Peek() == '\r') {
        ++pos_;
      } else {
        return;
      }
    }
  }

  void EndLine() {
    SkipSpaces();
    SkipComment();
    if (AtEnd()) return;
    if (Peek() == '\r') ++pos_;
    if (AtEnd() || Peek() != '\n') Error("unexpected trailing characters");
    ++pos_;
    ++line_;
  }

  std::vector<std::string> ParseKeyPath() {
    std::vector<std::string> parts;
    while (true) {
      SkipSpaces();
      if (AtEnd()) Error("expected a key");
      if (Peek() == '"' || Peek() == '\'') {
        parts.push_back(ParseString());
      } else {
        const size_t begin = pos_;
        while (!AtEnd() && (std::isalnum(static_cast<unsigned char>(Peek())) ||
                            Peek() == '_' || Peek() == '-')) {
          ++pos_;
        }
        if (pos_ == begin) Error("expected a key");
        parts.emplace_back(text_.substr(begin, pos_ - begin));
      }
      SkipSpaces();
      if (AtEnd() || Peek() != '.') return parts;
      ++pos_;
    }
  }

  Json* Descend(Json& root, const std::vector<std::string>& path, size_t count) {
    Json* node = &root;
    for (size_t i = 0; i < count; ++i) {
      Json& child = (*node)[path[i]];
      if (child.is_null()) child = Json::object();
      if (!child.is_object()) Error("key '" + path[i] + "' is not a table");
      node = &child;
    }
    return node;
  }

  Json* OpenTable(Json& root) {
    ++pos_;
    const std::vector<std::string> path = ParseKeyPath();
    if (AtEnd() || Peek() != ']') Error("expected ']'");
    ++pos_;
    Json* parent = Descend(root, path, path.size() - 1);
    Json& table = (*parent)[path.back()];
    if (table.is_object() && defined_tables_.contains(&table)) {
      Error("table '" + path.back() + "' defined twice");
    }
    if (table.is_null()) table = Json::object();
    if (!table.is_object()) Error("key '" + path.back() + "' is not a table");
    defined_tables_.insert(&table);
    return &table;
  }

  void ParseKeyValue(Json& table) {
    const std::vector<std::string> path = ParseKeyPath();
    if (AtEnd() || Peek() != '=') Error("expected '='");
    ++pos_;
    SkipSpaces();
    Json* parent = Descend(table, path, path.size() - 1);
    if (parent->contains(path.back())) Error("duplicate key '" + path.back() + "'");
    (*parent)[path.back()] = ParseValue();
  }

  Json ParseValue() {
    if (AtEnd()) Error("missing value");
    const char c = Peek();
    if (c == '"' || c == '\'') return ParseString();
    if (c == '[') return ParseArray();
    if (c == '{') Error("inline tables are not supported");
    const size_t begin = pos_;
    while (!AtEnd() && Peek() != ',' && Peek() != ']' && Peek() != '#' &&
           !std::isspace(static_cast<unsigned char>(Peek()))) {
      ++pos_;
    }
    return ParseScalar(text_.substr(begin, pos_ - begin));
  }

  Json ParseScalar(std::string_view token) {
    if (token == "true") return true;
    if (token == "false") return false;
    if (token.empty()) Error("missing value");
    std::string digits;
    for (size_t i = 0; i < token.size(); ++i) {
      if (token[i] == '_') {
        const bool ok = i > 0 && i + 1 < token.size() &&
                        std::isdigit(static_cast<unsigned char>(token[i - 1])) &&
                        std::isdigit(static_cast<unsigned char>(token[i + 1]));
        if (!ok) Error("misplaced '_' in number");
        continue;
      }
      digits.push_back(token[i]);
    }
    std::string_view body = digits;
    const bool negative = !body.empty() && body[0] == '-';
    if (!body.empty() && (body[0] == '+' || body[0] == '-')) body.remove_prefix(1);
    if (body == "inf") return negative ? -INFINITY : INFINITY;
    if (body == "nan") return NAN;
    const bool is_float = body.find_first_of(".eE") != std::string_view::npos;
    if (!is_float) {
      int64_t value = 0;
      auto [end, ec] = std::from_chars(body.data(), body.data() + body.size(), value);
      if (ec != std::errc() || end != body.data() + body.size()) {
        Error("bad value '" + std::string(token) + "'");
      }
      return negative ? -value : value;
    }
    double value = 0.0;
    auto [end, ec] = std::from_chars(body.data(), body.data() + body.size(), value);
    if (ec != std::errc() || end != body.data() + body.size()) {
      Error("bad value '" + std::string(token) + "'");
    }
    return negative ? -value : value;
  }

  char32_t ParseHex(size_t digits) {
    uint32_t cp = 0;
    for (size_t i = 0; i < digits; ++i) {
      if (AtEnd()) Error("unterminated unicode escape");
      const char h = Peek();
      ++pos_;
      uint32_t v = 0;
      if (h >= '0' && h <= '9') {
        v = h - '0';
      } else if (h >= 'a' && h <= 'f') {
        v = h - 'a' + 10;
      } else if (h >= 'A' && h <= 'F') {
        v = h - 'A' + 10;
      } else {
        Error("bad hex digit in unicode escape");
      }
      cp = cp * 16 + v;
    }
    if (cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) Error("unicode escape is not a scalar value");
    return static_cast<char32_t>(cp);
  }

  static void AppendUtf8(std::string& out, char32_t cp) {
    if (cp < 0x80) {
      out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
      out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
      out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
      out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
  }

  std::string ParseString() {
    const char quote = Peek();
    ++pos_;
    std::string out;
    while (true) {
      if (AtEnd() || Peek() == '\n') Error("unterminated string");
      const char c = Peek();
      ++pos_;
      if (c == quote) return out;
      if (c != '\\' || quote == '\'') {
        out.push_back(c);
        continue;
      }
      if (AtEnd()) Error("unterminated string");
      const char esc = Peek();
      ++pos_;
      switch (esc) {
        case 'n': out.push_back('\n'); break;
        case 't': out.push_back('\t'); break;
        case 'r': out.push_back('\r'); break;
        case '"': out.push_back('"'); break;
        case '\\': out.push_back('\\'); break;
        case 'b': out.push_back('\b'); break;
        case 'f': out.push_back('\f'); break;
        case 'u':
        case 'U': AppendUtf8(out, ParseHex(esc == 'u' ? 4 : 8)); break;
        default: Error(std::string("unsupported escape '\\") + esc + "'");
      }
    }
  }

  Json ParseArray() {
    ++pos_;
    Json out = Json::array();
    while (true) {
      SkipBlank();
      if (AtEnd()) Error("unterminated array");
      if (Peek() == ']') {
        ++pos_;
        return out;
      }
      out.push_back(ParseValue());
      SkipBlank();
      if (AtEnd()) Error("unterminated array");
      if (Peek() == ',') {
        ++pos_;
      } else if (Peek() != ']') {
        Error("expected ',' or ']' in array");
      }
    }
  }

  std::string_view text_;
  size_t pos_ = 0;
  size_t line_ = 1;
  std::set<const Json*> defined_tables_;
};

}  // namespace

Json ParseToml(std::string_view text) { return Parser(text).Run(); }

Json LoadToml(const std::filesystem::path& path) {
  try {
    return ParseToml(ReadFileBytes(path));
  } catch (const r2d2::Error& e) {
    if (e.code() != ErrorCode::kParse) throw;
    Fail(ErrorCode::kParse, path.string() + ": " + e.what());
  }
}

}  // namespace r2d2
