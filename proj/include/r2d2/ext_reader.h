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

#ifndef R2D2_EXT_READER_H_
#define R2D2_EXT_READER_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "r2d2/passage_store.h"
#include "r2d2/span_annotator.h"

namespace r2d2 {

enum class TokenKind : uint8_t {
  kCls = 0,
  kQuestion = 1,
  kTitle = 2,
  kContext = 3,
  kSep = 4,
};

inline constexpr size_t kMaxEncoderTokens = 512;
inline constexpr size_t kDefaultMaxSpanLen = 30;

// Token representations of one (question, passage) input.
struct EncoderOutput {
  PassageId passage_id = 0;
  size_t hidden_dim = 0;
  std::vector<float> hidden;  // tokens() x hidden_dim, row-major
  std::vector<TokenKind> kinds;
  std::vector<std::optional<CharSpan>> token_to_char;  // into the context

  size_t tokens() const { return kinds.size(); }
  std::span<const float> row(size_t t) const {
    return std::span<const float>(hidden).subspan(t * hidden_dim, hidden_dim);
  }
  // CLS at 0, T <= 512, consistent sizes, finite values.
  void Validate() const;
};

struct ReaderHeads {
  size_t hidden_dim = 0;
  std::vector<double> w_start;
  std::vector<double> w_end;
  std::vector<double> w_joint;  // h x h, row-major
  std::vector<double> b_joint;
  std::vector<double> w_passage;

  static ReaderHeads Zeros(size_t hidden_dim);
  void Validate() const;
};

// Raw head outputs for one passage. Joint scores live on a band:
// joint[s * band + (e - s)] for 0 <= e - s < band.
struct ScoreSet {
  PassageId passage_id = 0;
  size_t band = kDefaultMaxSpanLen;
  std::vector<double> start;
  std::vector<double> end;
  std::vector<double> joint;
  double passage = 0.0;

  size_t tokens() const { return start.size(); }
  double& Joint(size_t s, size_t e) { return joint[s * band + (e - s)]; }
  double Joint(size_t s, size_t e) const { return joint[s * band + (e - s)]; }
};

ScoreSet ComputeScores(const EncoderOutput& enc, const ReaderHeads& heads,
                       size_t max_span_len = kDefaultMaxSpanLen);

// 1 for CONTEXT tokens, 0 otherwise.
std::vector<uint8_t> ContextMask(std::span<const TokenKind> kinds);

// Log-probabilities of the four cross-passage distributions. Entries outside
// the support are -infinity. The joint support holds (s, e) pairs inside one
// contiguous context run with e - s < band.
struct Distributions {
  std::vector<PassageId> passage_ids;
  size_t band = kDefaultMaxSpanLen;
  std::vector<std::vector<uint8_t>> masks;
  std::vector<std::vector<double>> log_start;
  std::vector<std::vector<double>> log_end;
  std::vector<std::vector<double>> log_joint;
  std::vector<double> log_passage;

  size_t passages() const { return passage_ids.size(); }
  size_t tokens(size_t p) const { return log_start[p].size(); }
  bool InJointSupport(size_t p, size_t s, size_t e) const;
  double LogJoint(size_t p, size_t s, size_t e) const;
};

// One softmax per distribution, pooled over all passages. Throws
// kInvalidArgument when a support is empty after masking.
Distributions Normalize(std::span<const ScoreSet> score_sets,
                        std::span<const std::vector<uint8_t>> context_masks);

// Which factors multiply into a span score: I = P_start * P_end,
// J = P_joint, C = P_passage.
struct Factorization {
  bool independent = false;
  bool joint = false;
  bool passage = false;

  static Factorization All() { return {true, true, true}; }
  // Parses labels such as "I", "J", "I+J", "I+J+C" (also "IJC").
  static Factorization Parse(const std::string& label);
  std::string Label() const;
  bool empty() const { return !independent && !joint && !passage; }
};

enum class SpanScoreMode {
  kRawProduct,       // log of the product of selected factors
  kNormalizedProduct // same, renormalized over every legal span
};

struct AnswerSpan {
  PassageId passage_id = 0;
  size_t passage_index = 0;
  size_t start_tok = 0;
  size_t end_tok = 0;
  std::string text;
  double logp_e = 0.0;
  std::optional<double> logp_g;
  std::optional<double> logp_r;
  std::optional<double> logp_rr;
};

// Top-M spans over every legal span (both ends in one context run,
// end - start < max_span_len), ranked by the product of the selected
// factors; ties by passage id, then start, then shorter span.
std::vector<AnswerSpan> DecodeSpans(const Distributions& dist,
                                    const Factorization& factorization,
                                    size_t top_m,
                                    size_t max_span_len = kDefaultMaxSpanLen,
                                    SpanScoreMode mode = SpanScoreMode::kRawProduct);

// Fills AnswerSpan::text with the context slice covered by the span.
void AttachSpanText(std::span<AnswerSpan> spans,
                    std::span<const EncoderOutput> encoder_outputs,
                    const PassageStore& store);

// Targets in encoder-token coordinates. Passage indices follow the order of
// the distributions.
struct ReaderTargets {
  std::vector<TokenPos> starts;
  std::vector<TokenPos> ends;
  std::vector<Boundary> boundaries;
  std::vector<size_t> positive_passages;
};

// Shifts context-token annotations by each passage's first CONTEXT position.
ReaderTargets ToEncoderTargets(const ExampleAnnotation& annotation,
                               std::span<const EncoderOutput> encoder_outputs);

struct ScoreGradients {
  std::vector<std::vector<double>> start;
  std::vector<std::vector<double>> end;
  std::vector<std::vector<double>> joint;
  std::vector<double> passage;
};

struct ReaderLoss {
  double loss = 0.0;
  double start_term = 0.0;
  double end_term = 0.0;
  double joint_term = 0.0;
  double passage_term = 0.0;
  ScoreGradients grads;  // d loss / d raw scores, shaped like the ScoreSets
};

// Sum of the four independently marginalized negative log-likelihoods.
// Throws kInvalidAnnotation for empty target sets or targets outside the
// support.
ReaderLoss ComputeReaderLoss(const Distributions& dist,
                             const ReaderTargets& targets);

// Passage ids sorted by passage score descending, ties by ascending id.
std::vector<PassageId> PassageRerankByReader(std::span<const ScoreSet> score_sets);

// "R2D2ENC1", u32 T, u32 h, T u8 kinds, T (u32 begin, u32 end) offsets
// (0xFFFFFFFF for none), T*h fp32 hidden, little-endian. The passage id is
// not part of the payload.
void WriteEncoderOutput(const EncoderOutput& enc, const std::filesystem::path& path);
EncoderOutput ReadEncoderOutput(const std::filesystem::path& path,
                                PassageId passage_id);

// JSON: {"hidden_dim": h, "<tensor>": {"shape": [...], "data": base64 fp32}}.
void WriteReaderHeads(const ReaderHeads& heads, const std::filesystem::path& path);
ReaderHeads ReadReaderHeads(const std::filesystem::path& path);

}  // namespace r2d2

#endif  // R2D2_EXT_READER_H_
