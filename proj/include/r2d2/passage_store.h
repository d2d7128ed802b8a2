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

#ifndef R2D2_PASSAGE_STORE_H_
#define R2D2_PASSAGE_STORE_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace r2d2 {

using PassageId = uint64_t;

struct Passage {
  PassageId id = 0;
  std::string title;
  std::string context;
};

struct QAExample {
  std::string question;
  std::vector<std::string> answers;
  std::optional<PassageId> golden_passage_id;

  // Key used by score files and the stage cache. Defaults to the question.
  std::string key;
};

inline const std::string& QuestionKey(const QAExample& example) {
  return example.key.empty() ? example.question : example.key;
}

// Immutable after construction; safe to share across threads.
class PassageStore {
 public:
  PassageStore() = default;
  // Throws kDuplicateKey on repeated ids and kInvalidArgument on passages
  // whose title or context is blank.
  explicit PassageStore(std::vector<Passage> passages);

  size_t size() const { return passages_.size(); }
  bool empty() const { return passages_.empty(); }
  bool contains(PassageId id) const { return index_.contains(id); }

  // Throws kLookup for unknown ids.
  const Passage& at(PassageId id) const;
  const Passage* find(PassageId id) const;

  const std::vector<Passage>& passages() const { return passages_; }

 private:
  std::vector<Passage> passages_;
  std::unordered_map<PassageId, size_t> index_;
};

// JSON-lines, one {"id", "title", "context"} object per line.
PassageStore LoadPassages(const std::filesystem::path& path);
void SavePassages(const std::filesystem::path& path,
                  const std::vector<Passage>& passages);

// JSON-lines with "question", "answers" and optional "golden_passage_id"
// (integer or null). An optional "key" field overrides the question key.
std::vector<QAExample> LoadExamples(const std::filesystem::path& path);
void SaveExamples(const std::filesystem::path& path,
                  const std::vector<QAExample>& examples);

// Checks every golden id resolves in `store`.
void ValidateExamples(const std::vector<QAExample>& examples,
                      const PassageStore& store);

}  // namespace r2d2

#endif  // R2D2_PASSAGE_STORE_H_
