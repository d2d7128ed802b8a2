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

#ifndef R2D2_SPAN_ANNOTATOR_H_
#define R2D2_SPAN_ANNOTATOR_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "r2d2/passage_store.h"

namespace r2d2 {

// Byte offsets [begin, end) into the UTF-8 source text.
struct CharSpan {
  uint32_t begin = 0;
  uint32_t end = 0;

  friend bool operator==(const CharSpan&, const CharSpan&) = default;
};

struct TokenSeq {
  std::vector<std::string> tokens;
  std::vector<CharSpan> char_spans;

  size_t size() const { return tokens.size(); }
  bool empty() const { return tokens.empty(); }
};

using Tokenizer = std::function<TokenSeq(std::string_view)>;

// Maximal runs of Unicode alphanumerics form one token; every other
// non-whitespace code point is its own token. Tokens are lowercased.
TokenSeq TokenizeSimple(std::string_view text);

// Inclusive token range inside a passage.
struct MatchSpan {
  size_t start = 0;
  size_t end = 0;
  double f1 = 0.0;

  size_t length() const { return end - start + 1; }
  friend bool operator==(const MatchSpan&, const MatchSpan&) = default;
};

// 2s / (|span| + |answer|) with s the bag intersection size. Throws
// kInvalidArgument when either side is empty.
double F1Overlap(std::span<const std::string> span,
                 std::span<const std::string> answer);

std::vector<MatchSpan> ExactMatchSpans(const TokenSeq& passage,
                                       const TokenSeq& answer);
bool HasExactMatch(const TokenSeq& passage, const TokenSeq& answer);

struct SoftMatchStats {
  // F1 evaluations performed.
  size_t spans_examined = 0;
  // Spans left unexamined by the length limit whose F1 beat the returned
  // span. Only populated when bound checking is enabled; must stay 0.
  size_t bound_violations = 0;
};

// Upper bound on the length of spans that can still beat a span of length
// `span_len` sharing `shared` tokens with an answer of length `answer_len`:
//   |a| (|t| + |a| - s) / s.
// Requires 0 < shared <= answer_len; throws kInvalidArgument otherwise.
double SpanLengthBound(size_t span_len, size_t answer_len, size_t shared);

// Best non-zero F1 span, searched by increasing span size with the length
// limit tightened after each improvement. Among equal F1 the shorter span
// wins, then the earlier start. With `check_bound`, every span skipped by the
// limit is scored afterwards and counted in `stats->bound_violations` if it
// would have won.
std::optional<MatchSpan> SoftMatch(const TokenSeq& passage,
                                   const TokenSeq& answer,
                                   SoftMatchStats* stats = nullptr,
                                   bool check_bound = false);

// Exhaustive reference with the same tie rules.
std::optional<MatchSpan> SoftMatchBruteForce(const TokenSeq& passage,
                                             const TokenSeq& answer,
                                             SoftMatchStats* stats = nullptr);

struct TokenPos {
  size_t passage_index = 0;
  size_t token = 0;

  auto operator<=>(const TokenPos&) const = default;
};

struct Boundary {
  size_t passage_index = 0;
  size_t start = 0;
  size_t end = 0;

  auto operator<=>(const Boundary&) const = default;
};

// Distant-supervision targets. Token indices refer to each passage's
// tokenized context; `passage_index` refers to the order of the inputs.
struct ExampleAnnotation {
  std::vector<TokenPos> starts;
  std::vector<TokenPos> ends;
  std::vector<Boundary> boundaries;
  std::vector<size_t> positive_passages;

  bool empty() const { return boundaries.empty(); }
};

struct AnnotationPassage {
  PassageId passage_id = 0;
  TokenSeq tokens;
  bool is_golden = false;
};

// Exact matches in every passage become targets. In the golden passage an
// answer without an exact match falls back to its single best soft match.
// Results are deduplicated and sorted. Throws kShouldHaveBeenFiltered when
// nothing is annotated.
ExampleAnnotation AnnotateExample(std::span<const std::string> answers,
                                  std::span<const AnnotationPassage> passages,
                                  const Tokenizer& tokenizer);

// Convenience overload: looks the reader passages up in `store` and
// tokenizes their contexts. The golden passage is flagged by id.
ExampleAnnotation AnnotateExample(const QAExample& example,
                                  std::span<const PassageId> reader_passages,
                                  const PassageStore& store,
                                  const Tokenizer& tokenizer = TokenizeSimple);

struct AnnotationRecord {
  std::string question_key;
  std::vector<PassageId> passage_ids;  // indexed by passage_index
  ExampleAnnotation annotation;
};

// JSON-lines {"question_key", "passage_ids", "starts": [[p, t], ...],
// "ends": [[p, t], ...], "boundaries": [[p, s, e], ...],
// "positive_passages": [p, ...]}.
void SaveAnnotations(const std::filesystem::path& path,
                     std::span<const AnnotationRecord> records);
std::vector<AnnotationRecord> LoadAnnotations(const std::filesystem::path& path);

}  // namespace r2d2

#endif  // R2D2_SPAN_ANNOTATOR_H_
