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

#ifndef R2D2_TOY_CORPUS_H_
#define R2D2_TOY_CORPUS_H_

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "r2d2/passage_store.h"
#include "r2d2/providers.h"

namespace r2d2 {

// Synthetic corpora with answers planted in known passages. Every word other
// than the fixed frame ("the", "of", "is", attribute names) is a unique
// pseudo-word, so lexical retrieval and reading are predictable.
struct ToyCorpus {
  std::vector<Passage> passages;
  std::vector<QAExample> questions;
  // questions[i] is answered by passages[answer_passage[i]].
  std::vector<PassageId> answer_passage;
  // Passages that answer no question.
  std::vector<PassageId> filler_ids;
};

// One passage per question, titled by its entity, holding the fact
// "the <attr> of <entity> is <answer> ." between filler sentences, plus a
// second fact about a different attribute. Questions read
// "what is the <attr> of <entity> ?".
ToyCorpus BuildPlantedCorpus(size_t questions, size_t filler_passages, uint64_t seed);

struct FusionToy {
  ToyCorpus corpus;
  // File-backed generative outputs keyed by question.
  std::vector<std::pair<std::string, FileGenerativeProvider::Record>> generations;
  // True for questions whose planted span is a decoy and only the generated
  // answer is correct.
  std::vector<bool> generative_only;
};

// Planted corpus where round(generative_share * questions) questions (chosen
// by seed) carry a decoy in the planted slot. On those the generated answer
// is the gold one with log-probability -0.1; elsewhere it is a wrong word
// with log-probability -4. Unlisted span scores default to -10.
FusionToy BuildFusionToy(size_t questions, double generative_share, uint64_t seed);

}  // namespace r2d2

#endif  // R2D2_TOY_CORPUS_H_
