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

#include "r2d2/stage_cache.h"

#include <fstream>

#include "r2d2/errors.h"

namespace r2d2 {

StageCache::StageCache(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec) Fail(ErrorCode::kIo, "cannot create cache directory " + dir_.string());
}

std::filesystem::path StageCache::FileFor(const std::string& stage,
                                          const std::string& config_hash) const {
  return dir_ / (stage + "." + config_hash + ".jsonl");
}

std::map<std::string, Json>& StageCache::Table(const std::string& stage,
                                               const std::string& config_hash) {
  const std::string name = stage + "." + config_hash;
  auto it = tables_.find(name);
  if (it != tables_.end()) return it->second;
  std::map<std::string, Json>& table = tables_[name];
  const std::filesystem::path path = FileFor(stage, config_hash);
  if (std::filesystem::exists(path)) {
    ForEachJsonLine(path, [&](const Json& rec, size_t line) {
      if (!rec.contains("question_key") || !rec.contains("value")) {
        Fail(ErrorCode::kFormat, path.string() + ":" + std::to_string(line) +
                                     ": cache record needs question_key and value");
      }
      table[rec.at("question_key").get<std::string>()] = rec.at("value");
    });
  }
  return table;
}

std::optional<Json> StageCache::Get(const std::string& stage,
                                    const std::string& config_hash,
                                    const std::string& question_key) {
  std::lock_guard<std::mutex> lock(mu_);
  const auto& table = Table(stage, config_hash);
  auto it = table.find(question_key);
  if (it == table.end()) {
    ++misses_;
    return std::nullopt;
  }
  ++hits_;
  return it->second;
}

void StageCache::Put(const std::string& stage, const std::string& config_hash,
                     const std::string& question_key, const Json& value) {
  std::lock_guard<std::mutex> lock(mu_);
  Table(stage, config_hash)[question_key] = value;
  const std::filesystem::path path = FileFor(stage, config_hash);
  std::ofstream out(path, std::ios::app);
  if (!out) Fail(ErrorCode::kIo, "cannot append to " + path.string());
  out << Json{{"question_key", question_key}, {"value", value}}.dump() << '\n';
}

}  // namespace r2d2
