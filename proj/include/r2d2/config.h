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

#ifndef R2D2_CONFIG_H_
#define R2D2_CONFIG_H_

#include <filesystem>
#include <string_view>

#include "r2d2/jsonl.h"

namespace r2d2 {

// Reads the TOML subset used by engine config files into a JSON object:
// [table] and [dotted.table] headers, bare or quoted keys, basic and literal
// strings, integers, floats, booleans and (possibly multi-line) arrays.
// Inline tables, dates and multi-line strings raise kParse with the line.
Json ParseToml(std::string_view text);
Json LoadToml(const std::filesystem::path& path);

}  // namespace r2d2

#endif  // R2D2_CONFIG_H_
