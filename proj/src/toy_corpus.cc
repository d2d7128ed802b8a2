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

#include "r2d2/toy_corpus.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <unordered_set>

#include "r2d2/errors.h"

namespace r2d2 {
namespace {

constexpr const char* kAttributes[] = {"capital", "color",  "founder", "mascot",
                                       "river",   "anthem", "motto",   "harbor"};
constexpr size_t kAttributeCount = sizeof(kAttributes) / sizeof(kAttributes[0]);

class WordSource {
 public:
  explicit WordSource(uint64_t seed) : rng_(seed) {}

  std::string Next() {
    static constexpr char kConsonants[] = "bdfgklmnprstvz";
    static constexpr char kVowels[] = "aeiou";
    while (true) {
      std::string word;
      for (int s = 0; s < 3; ++s) {
        word.push_back(kConsonants[rng_() % (sizeof(kConsonants) - 1)]);
        word.push_back(kVowels[rng_() % (sizeof(kVowels) - 1)]);
      }
      if (used_.insert(word).second) return word;
    }
  }

  // 1 or 2 fresh words.
  std::string Phrase() {
    std::string out = Next();
    if (rng_() % 3 == 0) out += " " + Next();
    return out;
  }

  uint64_t Roll(uint64_t n) { return rng_() % n; }
  std::mt19937_64& rng() { return rng_; }

 private:
  std::mt19937_64 rng_;
  std::unordered_set<std::string> used_;
};

std::string FillerSentence(WordSource& words, const std::vector<std::string>& vocab) {
  const size_t length = 4 + words.Roll(5);
  std::string out;
  for (size_t i = 0; i < length; ++i) {
    if (i > 0) out += ' ';
    out += vocab[words.Roll(vocab.size())];
  }
  return out + " .";
}

}  // namespace

ToyCorpus BuildPlantedCorpus(size_t questions, size_t filler_passages, uint64_t seed) {
  if (questions == 0) Fail(ErrorCode::kInvalidArgument, "toy corpus needs questions");
  WordSource words(seed);
  std::vector<std::string> vocab;
  for (int i = 0; i < 200; ++i) vocab.push_back(words.Next());

  ToyCorpus out;
  const size_t total = questions + filler_passages;
  // Shuffled ids so answer passages are not simply the first ids.
  std::vector<PassageId> ids(total);
  std::iota(ids.begin(), ids.end(), PassageId{0});
  std::shuffle(ids.begin(), ids.end(), words.rng());

  for (size_t q = 0; q < questions; ++q) {
    const std::string entity = words.Next();
    const size_t attr = words.Roll(kAttributeCount);
    const size_t other = (attr + 1 + words.Roll(kAttributeCount - 1)) % kAttributeCount;
    const std::string answer = words.Phrase();
    const std::string other_answer = words.Phrase();

    std::vector<std::string> sentences;
    for (size_t s = 0; s < 2 + words.Roll(3); ++s) sentences.push_back(FillerSentence(words, vocab));
    const std::string fact =
        std::string("the ") + kAttributes[attr] + " of " + entity + " is " + answer + " .";
    const std::string other_fact = std::string("the ") + kAttributes[other] + " of " +
                                   entity + " is " + other_answer + " .";
    sentences.insert(sentences.begin() + static_cast<ptrdiff_t>(words.Roll(sentences.size() + 1)),
                     fact);
    sentences.insert(sentences.begin() + static_cast<ptrdiff_t>(words.Roll(sentences.size() + 1)),
                     other_fact);
    std::string context;
    for (const std::string& s : sentences) context += (context.empty() ? "" : " ") + s;

    const PassageId id = ids[q];
    out.passages.push_back({id, entity, context});
    QAExample ex;
    ex.question = std::string("what is the ") + kAttributes[attr] + " of " + entity + " ?";
    ex.answers = {answer};
    ex.golden_passage_id = id;
    ex.key = "q" + std::to_string(q);
    out.questions.push_back(std::move(ex));
    out.answer_passage.push_back(id);
  }
  for (size_t f = 0; f < filler_passages; ++f) {
    std::string context;
    for (size_t s = 0; s < 3; ++s) context += (s ? " " : "") + FillerSentence(words, vocab);
    const PassageId id = ids[questions + f];
    out.passages.push_back({id, words.Next(), context});
    out.filler_ids.push_back(id);
  }
  std::sort(out.filler_ids.begin(), out.filler_ids.end());
  return out;
}

FusionToy BuildFusionToy(size_t questions, double generative_share, uint64_t seed) {
  if (!(generative_share >= 0.0 && generative_share <= 1.0)) {
    Fail(ErrorCode::kInvalidArgument, "generative share must be in [0, 1]");
  }
  FusionToy toy;
  toy.corpus = BuildPlantedCorpus(questions, 0, seed);
  WordSource words(seed ^ 0x9E3779B97F4A7C15ULL);
  // Prefix keeps these words disjoint from the corpus vocabulary.
  auto fresh = [&words] { return "x" + words.Next(); };

  std::vector<size_t> order(questions);
  std::iota(order.begin(), order.end(), size_t{0});
  std::shuffle(order.begin(), order.end(), words.rng());
  const auto decoys = static_cast<size_t>(std::llround(generative_share * questions));
  toy.generative_only.assign(questions, false);
  for (size_t i = 0; i < decoys; ++i) toy.generative_only[order[i]] = true;

  for (size_t q = 0; q < questions; ++q) {
    QAExample& ex = toy.corpus.questions[q];
    FileGenerativeProvider::Record record;
    record.span_logp_default = -10.0;
    if (toy.generative_only[q]) {
      // The planted span stays in the passage; the gold answer moves to a
      // word that appears nowhere in the corpus.
      ex.answers = {fresh()};
      record.generation = {ex.answers.front(), -0.1};
    } else {
      record.generation = {fresh(), -4.0};
    }
    toy.generations.emplace_back(QuestionKey(ex), std::move(record));
  }
  return toy;
}

}  // namespace r2d2
