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

#ifndef R2D2_JSONL_H_
#define R2D2_JSONL_H_

#include <cstddef>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace r2d2 {

using Json = nlohmann::json;

// Calls `fn(record, line_number)` for each non-blank line. Line numbers are
// 1-based. Malformed JSON raises kParse with the line number in the message.
void ForEachJsonLine(const std::filesystem::path& path,
                     const std::function<void(const Json&, size_t)>& fn);

void WriteJsonLines(const std::filesystem::path& path,
                    std::span<const Json> records);

Json ReadJsonFile(const std::filesystem::path& path);
void WriteJsonFile(const std::filesystem::path& path, const Json& value);

std::string Base64Encode(std::span<const unsigned char> bytes);
std::vector<unsigned char> Base64Decode(const std::string& text);

std::string ReadFileBytes(const std::filesystem::path& path);

// FNV-1a over the bytes; used for config fingerprints and stable hashing.
uint64_t StableHash(std::string_view bytes);

}  // namespace r2d2

#endif  // R2D2_JSONL_H_
