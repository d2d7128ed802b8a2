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

#include "r2d2/jsonl.h"

#include <boost/beast/core/detail/base64.hpp>
#include <fstream>
#include <sstream>

#include "r2d2/errors.h"

namespace r2d2 {

namespace base64 = boost::beast::detail::base64;

void ForEachJsonLine(const std::filesystem::path& path,
                     const std::function<void(const Json&, size_t)>& fn) {
  std::ifstream in(path);
  if (!in) Fail(ErrorCode::kIo, "cannot open " + path.string());
  std::string line;
  size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Json record;
    try {
      record = Json::parse(line);
    } catch (const Json::parse_error& e) {
      Fail(ErrorCode::kParse, path.string() + ":" +
                                  std::to_string(line_number) + ": " +
                                  e.what());
    }
    fn(record, line_number);
  }
}

void WriteJsonLines(const std::filesystem::path& path,
                    std::span<const Json> records) {
  std::ofstream out(path);
  if (!out) Fail(ErrorCode::kIo, "cannot write " + path.string());
  for (const Json& record : records) out << record.dump() << '\n';
}

Json ReadJsonFile(const std::filesystem::path& path) {
  const std::string bytes = ReadFileBytes(path);
  try {
    return Json::parse(bytes);
  } catch (const Json::parse_error& e) {
    Fail(ErrorCode::kParse, path.string() + ": " + e.what());
  }
}

void WriteJsonFile(const std::filesystem::path& path, const Json& value) {
  std::ofstream out(path);
  if (!out) Fail(ErrorCode::kIo, "cannot write " + path.string());
  out << value.dump(2) << '\n';
}

std::string Base64Encode(std::span<const unsigned char> bytes) {
  std::string out(base64::encoded_size(bytes.size()), '\0');
  out.resize(base64::encode(out.data(), bytes.data(), bytes.size()));
  return out;
}

std::vector<unsigned char> Base64Decode(const std::string& text) {
  // Padding is optional, but when present the length must be a multiple of 4.
  size_t body = text.size();
  while (body > 0 && text.size() - body < 2 && text[body - 1] == '=') --body;
  if (body != text.size() && text.size() % 4 != 0) {
    Fail(ErrorCode::kFormat, "invalid base64 padding");
  }
  std::vector<unsigned char> out(base64::decoded_size(body + 3));
  const auto [written, read] = base64::decode(out.data(), text.data(), body);
  if (read != body) Fail(ErrorCode::kFormat, "invalid base64 payload");
  out.resize(written);
  return out;
}

std::string ReadFileBytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return std::move(buffer).str();
}

uint64_t StableHash(std::string_view bytes) {
  uint64_t hash = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 1099511628211ULL;
  }
  return hash;
}

}  // namespace r2d2
