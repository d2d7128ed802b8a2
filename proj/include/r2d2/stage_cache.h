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

#ifndef R2D2_STAGE_CACHE_H_
#define R2D2_STAGE_CACHE_H_

#include <atomic>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>

#include "r2d2/jsonl.h"

namespace r2d2 {

// Persists per-question stage outputs between runs. Each (stage, config
// hash) pair owns one JSON-lines file <dir>/<stage>.<hash>.jsonl of
// {"question_key": str, "value": ...} records. Safe for concurrent use.
class StageCache {
 public:
  explicit StageCache(std::filesystem::path dir);

  std::optional<Json> Get(const std::string& stage, const std::string& config_hash,
                          const std::string& question_key);
  // Later puts for the same key win on reload.
  void Put(const std::string& stage, const std::string& config_hash,
           const std::string& question_key, const Json& value);

  std::filesystem::path FileFor(const std::string& stage,
                                const std::string& config_hash) const;
  size_t hits() const { return hits_; }
  size_t misses() const { return misses_; }

 private:
  std::map<std::string, Json>& Table(const std::string& stage,
                                     const std::string& config_hash);

  std::filesystem::path dir_;
  std::mutex mu_;
  std::map<std::string, std::map<std::string, Json>> tables_;
  std::atomic<size_t> hits_{0};
  std::atomic<size_t> misses_{0};
};

}  // namespace r2d2

#endif  // R2D2_STAGE_CACHE_H_
