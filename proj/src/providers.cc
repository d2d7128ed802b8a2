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

#include "r2d2/providers.h"

#include <locale.h>
#include <wctype.h>

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "r2d2/errors.h"
#include "r2d2/jsonl.h"

namespace r2d2 {
namespace {

constexpr double kStartWeight = 2.0;
constexpr double kEndWeight = 2.0;
constexpr double kJointWeight = 2.0;
constexpr double kPassageWeight = 8.0;
constexpr double kGenerativeSlope = 0.5;
constexpr double kUnseenSpanLogp = -30.0;

bool IsWordToken(const std::string& token) {
  if (token.empty()) return false;
  const auto b = static_cast<unsigned char>(token[0]);
  if (b < 0x80) return std::isalnum(b) != 0;
  // Multi-byte: decode the first code point.
  char32_t cp = 0;
  size_t need = 0;
  if ((b & 0xE0) == 0xC0) {
    cp = b & 0x1F;
    need = 1;
  } else if ((b & 0xF0) == 0xE0) {
    cp = b & 0x0F;
    need = 2;
  } else if ((b & 0xF8) == 0xF0) {
    cp = b & 0x07;
    need = 3;
  } else {
    return false;
  }
  if (token.size() < need + 1) return false;
  for (size_t i = 1; i <= need; ++i) cp = (cp << 6) | (token[i] & 0x3F);
  static const locale_t loc = newlocale(LC_CTYPE_MASK, "C.UTF-8", static_cast<locale_t>(0));
  if (loc == static_cast<locale_t>(0)) return true;
  return iswalnum_l(static_cast<wint_t>(cp), loc) != 0;
}

// Per context token: length of the run of question tokens immediately before
// it (0 when the token is itself a question token or not a word), and
// whether the token can end an answer.
struct ContextFeatures {
  TokenSeq tokens;
  std::vector<double> run;
  std::vector<uint8_t> end_flag;
};

ContextFeatures ComputeContextFeatures(const std::unordered_set<std::string>& question,
                                       std::string_view context, size_t max_tokens) {
  ContextFeatures out;
  out.tokens = TokenizeSimple(context);
  if (out.tokens.size() > max_tokens) {
    out.tokens.tokens.resize(max_tokens);
    out.tokens.char_spans.resize(max_tokens);
  }
  const size_t n = out.tokens.size();
  out.run.assign(n, 0.0);
  out.end_flag.assign(n, 0);
  std::vector<uint8_t> word(n);
  std::vector<uint8_t> in_question(n);
  for (size_t i = 0; i < n; ++i) {
    word[i] = IsWordToken(out.tokens.tokens[i]);
    in_question[i] = word[i] && question.contains(out.tokens.tokens[i]);
  }
  size_t run = 0;
  for (size_t i = 0; i < n; ++i) {
    if (word[i] && !in_question[i]) out.run[i] = static_cast<double>(run);
    run = in_question[i] ? run + 1 : 0;
    out.end_flag[i] = word[i] && (i + 1 == n || !word[i + 1]);
  }
  return out;
}

struct LexicalAnswer {
  size_t start = 0;
  size_t end = 0;
  double run = -1.0;
};

// Best start by run length (first wins), extended to the nearest end flag.
LexicalAnswer BestLexicalAnswer(const ContextFeatures& f, size_t max_span_len) {
  LexicalAnswer best;
  for (size_t s = 0; s < f.tokens.size(); ++s) {
    if (f.run[s] <= best.run) continue;
    if (!IsWordToken(f.tokens.tokens[s])) continue;
    best.run = f.run[s];
    best.start = s;
    best.end = s;
    const size_t last = std::min(f.tokens.size(), s + max_span_len);
    for (size_t e = s; e < last; ++e) {
      best.end = e;
      if (f.end_flag[e]) break;
    }
  }
  return best;
}

double LexicalLogp(size_t question_tokens, double run, bool clean_end) {
  return -kGenerativeSlope * (static_cast<double>(question_tokens) - run) -
         (clean_end ? 0.0 : 1.0);
}

}  // namespace

std::vector<RetrievalResult> ScoreProvider::Retrieve(const QAExample&, size_t) const {
  Gap("retrieval");
}
RerankScores ScoreProvider::Rerank(const QAExample&, std::span<const PassageId>) const {
  Gap("rerank scores");
}
EncoderOutput ScoreProvider::Encode(const QAExample&, const Passage&) const {
  Gap("encoder outputs");
}
const ReaderHeads& ScoreProvider::Heads() const { Gap("reader heads"); }
Generation ScoreProvider::Generate(const QAExample&, std::span<const PassageId>) const {
  Gap("generated answers");
}
double ScoreProvider::SpanLogProb(const QAExample&, std::span<const PassageId>,
                                  const std::string&) const {
  Gap("span log-probabilities");
}

void ScoreProvider::Gap(const std::string& capability) const {
  Fail(ErrorCode::kStage, "provider '" + kind() + "' does not supply " + capability);
}

std::unordered_set<std::string> QuestionTokens(std::string_view question) {
  std::unordered_set<std::string> out;
  for (std::string& token : TokenizeSimple(question).tokens) {
    if (IsWordToken(token)) out.insert(std::move(token));
  }
  return out;
}

LexicalScorer::LexicalScorer(std::shared_ptr<const PassageStore> store)
    : store_(std::move(store)) {
  std::unordered_map<std::string, size_t> df;
  for (const Passage& p : store_->passages()) {
    auto& set = tokens_[p.id];
    for (std::string& t : TokenizeSimple(p.title).tokens) set.insert(std::move(t));
    for (std::string& t : TokenizeSimple(p.context).tokens) set.insert(std::move(t));
    for (const std::string& t : set) ++df[t];
  }
  const double n = static_cast<double>(store_->size());
  for (const auto& [token, count] : df) {
    idf_.emplace(token, std::log1p(n / static_cast<double>(count)));
  }
}

double LexicalScorer::Idf(const std::string& token) const {
  auto it = idf_.find(token);
  return it == idf_.end() ? 0.0 : it->second;
}

double LexicalScorer::Score(std::string_view question, PassageId id) const {
  auto it = tokens_.find(id);
  if (it == tokens_.end()) Fail(ErrorCode::kLookup, "unknown passage " + std::to_string(id));
  // Sum in sorted token order so the result does not depend on hashing.
  const std::unordered_set<std::string> q = QuestionTokens(question);
  std::vector<std::string> ordered(q.begin(), q.end());
  std::sort(ordered.begin(), ordered.end());
  double score = 0.0;
  for (const std::string& token : ordered) {
    if (it->second.contains(token)) score += Idf(token);
  }
  return score;
}

double LexicalScorer::MaxScore(std::string_view question) const {
  const std::unordered_set<std::string> q = QuestionTokens(question);
  std::vector<std::string> ordered(q.begin(), q.end());
  std::sort(ordered.begin(), ordered.end());
  double score = 0.0;
  for (const std::string& token : ordered) score += Idf(token);
  return score;
}

LexicalProvider::LexicalProvider(std::shared_ptr<const LexicalScorer> scorer,
                                 std::vector<PassageId> searchable)
    : scorer_(std::move(scorer)), searchable_(std::move(searchable)) {
  if (searchable_.empty()) {
    for (const Passage& p : scorer_->store().passages()) searchable_.push_back(p.id);
  }
  std::sort(searchable_.begin(), searchable_.end());
  for (PassageId id : searchable_) {
    if (!scorer_->store().contains(id)) {
      Fail(ErrorCode::kLookup, "searchable passage " + std::to_string(id) + " not in store");
    }
  }
  heads_ = ReaderHeads::Zeros(kHiddenDim);
  heads_.w_start[0] = kStartWeight;
  heads_.w_end[1] = kEndWeight;
  heads_.w_joint[1 * kHiddenDim + 0] = kJointWeight;
  heads_.w_passage[2] = kPassageWeight;
}

std::vector<RetrievalResult> LexicalProvider::Retrieve(const QAExample& question,
                                                       size_t k) const {
  if (k > searchable_.size()) {
    Fail(ErrorCode::kInvalidArgument, "k = " + std::to_string(k) + " exceeds the " +
                                          std::to_string(searchable_.size()) +
                                          " searchable passages");
  }
  std::vector<RetrievalResult> all;
  all.reserve(searchable_.size());
  for (PassageId id : searchable_) {
    all.push_back({id, static_cast<float>(scorer_->Score(question.question, id))});
  }
  auto better = [](const RetrievalResult& a, const RetrievalResult& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.passage_id < b.passage_id;
  };
  std::partial_sort(all.begin(), all.begin() + static_cast<ptrdiff_t>(k), all.end(), better);
  all.resize(k);
  return all;
}

RerankScores LexicalProvider::Rerank(const QAExample& question,
                                     std::span<const PassageId> ids) const {
  const std::unordered_set<std::string> q = QuestionTokens(question.question);
  RerankScores out;
  for (PassageId id : ids) {
    // Lexical overlap plus the strongest answer-position signal.
    const Passage& p = scorer_->store().at(id);
    const ContextFeatures f = ComputeContextFeatures(q, p.context, kMaxEncoderTokens);
    const double run = f.run.empty() ? 0.0 : *std::max_element(f.run.begin(), f.run.end());
    out[id] = scorer_->Score(question.question, id) + run;
  }
  return out;
}

EncoderOutput LexicalProvider::Encode(const QAExample& question,
                                      const Passage& passage) const {
  const std::unordered_set<std::string> q = QuestionTokens(question.question);
  const TokenSeq q_tokens = TokenizeSimple(question.question);
  const TokenSeq title = TokenizeSimple(passage.title);

  EncoderOutput out;
  out.passage_id = passage.id;
  out.hidden_dim = kHiddenDim;
  auto push = [&](TokenKind kind, std::optional<CharSpan> span,
                  std::array<float, kHiddenDim> h) {
    out.kinds.push_back(kind);
    out.token_to_char.push_back(span);
    out.hidden.insert(out.hidden.end(), h.begin(), h.end());
  };
  const double max_score = scorer_->MaxScore(question.question);
  const double relevance =
      max_score > 0.0 ? scorer_->Score(question.question, passage.id) / max_score : 0.0;
  push(TokenKind::kCls, std::nullopt, {0.0f, 0.0f, static_cast<float>(relevance)});
  for (size_t i = 0; i < q_tokens.size() && out.tokens() < kMaxEncoderTokens / 4; ++i) {
    push(TokenKind::kQuestion, std::nullopt, {0.0f, 0.0f, 0.0f});
  }
  push(TokenKind::kSep, std::nullopt, {0.0f, 0.0f, 0.0f});
  for (size_t i = 0; i < title.size() && out.tokens() < kMaxEncoderTokens / 2; ++i) {
    push(TokenKind::kTitle, std::nullopt, {0.0f, 0.0f, 0.0f});
  }
  push(TokenKind::kSep, std::nullopt, {0.0f, 0.0f, 0.0f});
  const ContextFeatures f =
      ComputeContextFeatures(q, passage.context, kMaxEncoderTokens - out.tokens());
  for (size_t i = 0; i < f.tokens.size(); ++i) {
    push(TokenKind::kContext, f.tokens.char_spans[i],
         {static_cast<float>(f.run[i]), static_cast<float>(f.end_flag[i]), 0.0f});
  }
  return out;
}

Generation LexicalProvider::Generate(const QAExample& question,
                                     std::span<const PassageId> ids) const {
  if (ids.empty()) Fail(ErrorCode::kInvalidArgument, "generation needs passages");
  const std::unordered_set<std::string> q = QuestionTokens(question.question);
  Generation best;
  double best_run = -1.0;
  for (PassageId id : ids) {
    const Passage& p = scorer_->store().at(id);
    const ContextFeatures f = ComputeContextFeatures(q, p.context, kMaxEncoderTokens);
    const LexicalAnswer a = BestLexicalAnswer(f, kDefaultMaxSpanLen);
    if (a.run <= best_run) continue;
    best_run = a.run;
    const CharSpan first = f.tokens.char_spans[a.start];
    const CharSpan last = f.tokens.char_spans[a.end];
    best.text = p.context.substr(first.begin, last.end - first.begin);
    best.logp = LexicalLogp(q.size(), a.run, f.end_flag[a.end] != 0);
  }
  if (best_run < 0.0) Fail(ErrorCode::kStage, "no passage text to generate from");
  return best;
}

double LexicalProvider::SpanLogProb(const QAExample& question,
                                    std::span<const PassageId> ids,
                                    const std::string& span) const {
  const std::unordered_set<std::string> q = QuestionTokens(question.question);
  const TokenSeq target = TokenizeSimple(span);
  if (target.empty()) return kUnseenSpanLogp;
  double best = kUnseenSpanLogp;
  for (PassageId id : ids) {
    const Passage& p = scorer_->store().at(id);
    const ContextFeatures f = ComputeContextFeatures(q, p.context, kMaxEncoderTokens);
    for (const MatchSpan& m : ExactMatchSpans(f.tokens, target)) {
      best = std::max(best, LexicalLogp(q.size(), f.run[m.start], f.end_flag[m.end] != 0));
    }
  }
  return best;
}

std::unordered_map<std::string, std::vector<float>> LoadQueryEmbeddings(
    const std::filesystem::path& path) {
  std::unordered_map<std::string, std::vector<float>> out;
  ForEachJsonLine(path, [&](const Json& rec, size_t line) {
    try {
      auto key = rec.at("question_key").get<std::string>();
      auto vec = rec.at("embedding").get<std::vector<float>>();
      if (!out.emplace(std::move(key), std::move(vec)).second) {
        Fail(ErrorCode::kDuplicateKey,
             path.string() + ":" + std::to_string(line) + ": duplicate question_key");
      }
    } catch (const Json::exception& e) {
      Fail(ErrorCode::kParse, path.string() + ":" + std::to_string(line) + ": " + e.what());
    }
  });
  return out;
}

DenseFileRetriever::DenseFileRetriever(std::shared_ptr<const EmbeddingMatrix> index,
                                       const std::filesystem::path& query_file,
                                       unsigned threads)
    : index_(std::move(index)), queries_(LoadQueryEmbeddings(query_file)), threads_(threads) {}

std::vector<RetrievalResult> DenseFileRetriever::Retrieve(const QAExample& question,
                                                          size_t k) const {
  auto it = queries_.find(QuestionKey(question));
  if (it == queries_.end()) {
    Fail(ErrorCode::kMissingScore, "no query embedding for '" + QuestionKey(question) + "'");
  }
  return Search(*index_, it->second, k, threads_);
}

FileRerankProvider::FileRerankProvider(const std::filesystem::path& path)
    : scores_(LoadRerankScores(path)) {}

RerankScores FileRerankProvider::Rerank(const QAExample& question,
                                        std::span<const PassageId> ids) const {
  auto it = scores_.find(QuestionKey(question));
  if (it == scores_.end()) {
    Fail(ErrorCode::kMissingScore, "no rerank scores for '" + QuestionKey(question) + "'");
  }
  RerankScores out;
  for (PassageId id : ids) {
    auto s = it->second.find(id);
    if (s == it->second.end()) {
      Fail(ErrorCode::kMissingScore, "no rerank score for passage " + std::to_string(id));
    }
    out.emplace(id, s->second);
  }
  return out;
}

std::string EncoderDirName(const std::string& question_key) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(StableHash(question_key)));
  return buf;
}

FileReaderProvider::FileReaderProvider(std::filesystem::path dir,
                                       const std::filesystem::path& heads_path)
    : dir_(std::move(dir)), heads_(ReadReaderHeads(heads_path)) {}

EncoderOutput FileReaderProvider::Encode(const QAExample& question,
                                         const Passage& passage) const {
  const std::filesystem::path path = dir_ / EncoderDirName(QuestionKey(question)) /
                                     (std::to_string(passage.id) + ".enc");
  if (!std::filesystem::exists(path)) {
    Fail(ErrorCode::kMissingScore, "no encoder output " + path.string());
  }
  return ReadEncoderOutput(path, passage.id);
}

FileGenerativeProvider::FileGenerativeProvider(const std::filesystem::path& path) {
  ForEachJsonLine(path, [&](const Json& rec, size_t line) {
    try {
      Record r;
      r.generation.text = rec.at("answer").get<std::string>();
      r.generation.logp = rec.at("logp").get<double>();
      if (rec.contains("span_logp")) {
        r.span_logp = rec.at("span_logp").get<std::unordered_map<std::string, double>>();
      }
      if (rec.contains("span_logp_default")) {
        r.span_logp_default = rec.at("span_logp_default").get<double>();
      }
      if (!records_.emplace(rec.at("question_key").get<std::string>(), std::move(r)).second) {
        Fail(ErrorCode::kDuplicateKey,
             path.string() + ":" + std::to_string(line) + ": duplicate question_key");
      }
    } catch (const Json::exception& e) {
      Fail(ErrorCode::kParse, path.string() + ":" + std::to_string(line) + ": " + e.what());
    }
  });
}

const FileGenerativeProvider::Record& FileGenerativeProvider::Find(
    const QAExample& question) const {
  auto it = records_.find(QuestionKey(question));
  if (it == records_.end()) {
    Fail(ErrorCode::kMissingScore, "no generation for '" + QuestionKey(question) + "'");
  }
  return it->second;
}

Generation FileGenerativeProvider::Generate(const QAExample& question,
                                            std::span<const PassageId>) const {
  return Find(question).generation;
}

double FileGenerativeProvider::SpanLogProb(const QAExample& question,
                                           std::span<const PassageId>,
                                           const std::string& span) const {
  const Record& r = Find(question);
  auto it = r.span_logp.find(span);
  if (it != r.span_logp.end()) return it->second;
  if (span == r.generation.text) return r.generation.logp;
  if (r.span_logp_default) return *r.span_logp_default;
  Fail(ErrorCode::kMissingScore, "no generative score for span '" + span + "'");
}

void SaveGenerativeRecords(
    const std::filesystem::path& path,
    const std::vector<std::pair<std::string, FileGenerativeProvider::Record>>& rows) {
  std::vector<Json> records;
  for (const auto& [key, r] : rows) {
    Json rec = {{"question_key", key},
                {"answer", r.generation.text},
                {"logp", r.generation.logp},
                {"span_logp", Json(std::map<std::string, double>(r.span_logp.begin(),
                                                                  r.span_logp.end()))}};
    if (r.span_logp_default) rec["span_logp_default"] = *r.span_logp_default;
    records.push_back(std::move(rec));
  }
  WriteJsonLines(path, records);
}

}  // namespace r2d2
