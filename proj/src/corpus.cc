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

#include "r2d2/corpus.h"

#include <algorithm>
#include <random>
#include <unordered_set>

#include "r2d2/errors.h"
#include "r2d2/jsonl.h"

namespace r2d2 {
namespace {

bool IsBlank(const std::string& s) {
  return s.find_first_not_of(" \t\r\n\f\v") == std::string::npos;
}

std::unordered_set<PassageId> GoldenIds(std::span<const QAExample> examples) {
  std::unordered_set<PassageId> ids;
  for (const QAExample& ex : examples) {
    if (ex.golden_passage_id) ids.insert(*ex.golden_passage_id);
  }
  return ids;
}

std::vector<PassageId> NegativePool(const PassageStore& store,
                                    const std::unordered_set<PassageId>& golden) {
  std::vector<PassageId> pool;
  for (const Passage& p : store.passages()) {
    if (!golden.contains(p.id)) pool.push_back(p.id);
  }
  std::sort(pool.begin(), pool.end());
  return pool;
}

// `count` distinct elements of `pool`, uniformly, in draw order.
std::vector<PassageId> SampleDistinct(const std::vector<PassageId>& pool,
                                      size_t count, std::mt19937_64& rng) {
  std::vector<PassageId> out;
  std::unordered_set<size_t> taken;
  std::uniform_int_distribution<size_t> pick(0, pool.size() - 1);
  while (out.size() < count) {
    const size_t i = pick(rng);
    if (taken.insert(i).second) out.push_back(pool[i]);
  }
  return out;
}

}  // namespace

PassageStore::PassageStore(std::vector<Passage> passages)
    : passages_(std::move(passages)) {
  index_.reserve(passages_.size());
  for (size_t i = 0; i < passages_.size(); ++i) {
    const Passage& p = passages_[i];
    if (IsBlank(p.title) || IsBlank(p.context)) {
      Fail(ErrorCode::kInvalidArgument,
           "passage " + std::to_string(p.id) + " has a blank title or context");
    }
    if (!index_.emplace(p.id, i).second) {
      Fail(ErrorCode::kDuplicateKey,
           "duplicate passage id " + std::to_string(p.id));
    }
  }
}

const Passage& PassageStore::at(PassageId id) const {
  const Passage* p = find(id);
  if (p == nullptr) {
    Fail(ErrorCode::kLookup, "unknown passage id " + std::to_string(id));
  }
  return *p;
}

const Passage* PassageStore::find(PassageId id) const {
  auto it = index_.find(id);
  return it == index_.end() ? nullptr : &passages_[it->second];
}

PassageStore LoadPassages(const std::filesystem::path& path) {
  std::vector<Passage> passages;
  std::unordered_set<PassageId> seen;
  ForEachJsonLine(path, [&](const Json& rec, size_t line) {
    Passage p;
    try {
      p.id = rec.at("id").get<PassageId>();
      p.title = rec.at("title").get<std::string>();
      p.context = rec.at("context").get<std::string>();
    } catch (const Json::exception& e) {
      Fail(ErrorCode::kParse, path.string() + ":" + std::to_string(line) +
                                  ": " + e.what());
    }
    if (!seen.insert(p.id).second) {
      Fail(ErrorCode::kDuplicateKey, path.string() + ":" +
                                         std::to_string(line) +
                                         ": duplicate passage id " +
                                         std::to_string(p.id));
    }
    passages.push_back(std::move(p));
  });
  return PassageStore(std::move(passages));
}

void SavePassages(const std::filesystem::path& path,
                  const std::vector<Passage>& passages) {
  std::vector<Json> records;
  records.reserve(passages.size());
  for (const Passage& p : passages) {
    records.push_back({{"id", p.id}, {"title", p.title}, {"context", p.context}});
  }
  WriteJsonLines(path, records);
}

std::vector<QAExample> LoadExamples(const std::filesystem::path& path) {
  std::vector<QAExample> examples;
  ForEachJsonLine(path, [&](const Json& rec, size_t line) {
    QAExample ex;
    try {
      ex.question = rec.at("question").get<std::string>();
      ex.answers = rec.at("answers").get<std::vector<std::string>>();
      if (auto it = rec.find("golden_passage_id");
          it != rec.end() && !it->is_null()) {
        ex.golden_passage_id = it->get<PassageId>();
      }
      ex.key = rec.value("key", ex.question);
    } catch (const Json::exception& e) {
      Fail(ErrorCode::kParse, path.string() + ":" + std::to_string(line) +
                                  ": " + e.what());
    }
    if (ex.answers.empty() ||
        std::any_of(ex.answers.begin(), ex.answers.end(),
                    [](const std::string& a) { return a.empty(); })) {
      Fail(ErrorCode::kParse, path.string() + ":" + std::to_string(line) +
                                  ": answers must be non-empty strings");
    }
    examples.push_back(std::move(ex));
  });
  return examples;
}

void SaveExamples(const std::filesystem::path& path,
                  const std::vector<QAExample>& examples) {
  std::vector<Json> records;
  for (const QAExample& ex : examples) {
    Json rec = {{"question", ex.question}, {"answers", ex.answers}};
    rec["golden_passage_id"] =
        ex.golden_passage_id ? Json(*ex.golden_passage_id) : Json(nullptr);
    if (!ex.key.empty() && ex.key != ex.question) rec["key"] = ex.key;
    records.push_back(std::move(rec));
  }
  WriteJsonLines(path, records);
}

void ValidateExamples(const std::vector<QAExample>& examples,
                      const PassageStore& store) {
  for (const QAExample& ex : examples) {
    if (ex.golden_passage_id && !store.contains(*ex.golden_passage_id)) {
      Fail(ErrorCode::kLookup,
           "golden passage " + std::to_string(*ex.golden_passage_id) +
               " of question '" + ex.question + "' is not in the store");
    }
  }
}

bool ContainsAnswer(const Passage& passage,
                    std::span<const std::string> answers,
                    const Tokenizer& tokenizer) {
  const TokenSeq tokens = tokenizer(passage.context);
  for (const std::string& answer : answers) {
    if (HasExactMatch(tokens, tokenizer(answer))) return true;
  }
  return false;
}

std::vector<QAExample> FilterForReranker(
    std::span<const QAExample> examples,
    std::span<const std::vector<PassageId>> retrieved,
    const PassageStore& store, const Tokenizer& tokenizer) {
  if (examples.size() != retrieved.size()) {
    Fail(ErrorCode::kInvalidArgument, "one retrieved list per example required");
  }
  std::vector<QAExample> kept;
  for (size_t i = 0; i < examples.size(); ++i) {
    // Resolve every id first so a bad list fails regardless of the outcome.
    std::vector<const Passage*> passages;
    for (PassageId id : retrieved[i]) passages.push_back(&store.at(id));
    bool keep = examples[i].golden_passage_id.has_value();
    for (size_t k = 0; !keep && k < passages.size(); ++k) {
      keep = ContainsAnswer(*passages[k], examples[i].answers, tokenizer);
    }
    if (keep) kept.push_back(examples[i]);
  }
  return kept;
}

std::vector<QAExample> FilterForReader(std::span<const QAExample> examples,
                                       std::span<const PassageId> top1,
                                       const PassageStore& store,
                                       const Tokenizer& tokenizer) {
  if (examples.size() != top1.size()) {
    Fail(ErrorCode::kInvalidArgument, "one top-1 id per example required");
  }
  std::vector<QAExample> kept;
  for (size_t i = 0; i < examples.size(); ++i) {
    const QAExample& ex = examples[i];
    const Passage& first = store.at(top1[i]);
    bool keep = false;
    if (ex.golden_passage_id) {
      keep = ContainsAnswer(store.at(*ex.golden_passage_id), ex.answers, tokenizer);
    }
    if (!keep) keep = ContainsAnswer(first, ex.answers, tokenizer);
    if (keep) kept.push_back(ex);
  }
  return kept;
}

size_t GoldenDataset::CountLabel(Relevance label) const {
  return static_cast<size_t>(
      std::count_if(entries.begin(), entries.end(),
                    [label](const GoldenEntry& e) { return e.label == label; }));
}

GoldenDataset BuildPrunerDataset(std::span<const QAExample> examples,
                                 const PassageStore& store, int neg_per_pos,
                                 uint64_t seed) {
  if (neg_per_pos < 1) {
    Fail(ErrorCode::kInvalidArgument, "neg_per_pos must be >= 1");
  }
  const auto golden = GoldenIds(examples);
  const std::vector<PassageId> pool = NegativePool(store, golden);
  if (pool.size() < static_cast<size_t>(neg_per_pos)) {
    Fail(ErrorCode::kCapacity, "only " + std::to_string(pool.size()) +
                                   " non-golden passages for " +
                                   std::to_string(neg_per_pos) + " negatives");
  }
  std::mt19937_64 rng(seed);
  GoldenDataset out;
  for (const QAExample& ex : examples) {
    if (!ex.golden_passage_id) continue;
    store.at(*ex.golden_passage_id);
    out.entries.push_back({*ex.golden_passage_id, Relevance::kPositive});
    for (PassageId neg :
         SampleDistinct(pool, static_cast<size_t>(neg_per_pos), rng)) {
      out.entries.push_back({neg, Relevance::kNegative});
    }
  }
  return out;
}

PrunerEvalSplits BuildPrunerEvalSplits(std::span<const QAExample> examples,
                                       const PassageStore& store,
                                       uint64_t seed) {
  const auto golden = GoldenIds(examples);
  const std::vector<PassageId> pool = NegativePool(store, golden);
  if (pool.empty()) Fail(ErrorCode::kCapacity, "no non-golden passages");
  std::mt19937_64 rng(seed);
  PrunerEvalSplits out;
  for (const QAExample& ex : examples) {
    if (!ex.golden_passage_id) continue;
    store.at(*ex.golden_passage_id);
    const std::string& key = ex.key.empty() ? ex.question : ex.key;
    GoldenDataset& split = StableHash(key) % 3 == 0 ? out.dev : out.test;
    split.entries.push_back({*ex.golden_passage_id, Relevance::kPositive});
    split.entries.push_back({SampleDistinct(pool, 1, rng)[0], Relevance::kNegative});
  }
  return out;
}

void SaveGoldenDataset(const std::filesystem::path& path,
                       const GoldenDataset& dataset) {
  std::vector<Json> records;
  for (const GoldenEntry& e : dataset.entries) {
    records.push_back(
        {{"id", e.passage_id},
         {"label", e.label == Relevance::kPositive ? "positive" : "negative"}});
  }
  WriteJsonLines(path, records);
}

GoldenDataset LoadGoldenDataset(const std::filesystem::path& path) {
  GoldenDataset out;
  ForEachJsonLine(path, [&](const Json& rec, size_t line) {
    const std::string label = rec.value("label", "");
    if (label != "positive" && label != "negative") {
      Fail(ErrorCode::kParse, path.string() + ":" + std::to_string(line) +
                                  ": label must be positive or negative");
    }
    out.entries.push_back({rec.at("id").get<PassageId>(),
                           label == "positive" ? Relevance::kPositive
                                               : Relevance::kNegative});
  });
  return out;
}

}  // namespace r2d2
