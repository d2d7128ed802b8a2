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

#include "r2d2/span_annotator.h"

#include <locale.h>
#include <wctype.h>

#include <algorithm>
#include <set>
#include <unordered_map>

#include "r2d2/errors.h"
#include "r2d2/jsonl.h"

namespace r2d2 {
namespace {

locale_t Utf8Locale() {
  static const locale_t locale = [] {
    locale_t loc = newlocale(LC_CTYPE_MASK, "C.UTF-8", static_cast<locale_t>(0));
    if (loc == static_cast<locale_t>(0)) {
      loc = newlocale(LC_CTYPE_MASK, "C", static_cast<locale_t>(0));
    }
    return loc;
  }();
  return locale;
}

// Decodes one code point at `pos`. Invalid sequences decode as the single
// byte, flagged by returning length 1 and code point 0xFFFD.
char32_t DecodeUtf8(std::string_view text, size_t pos, size_t* length) {
  const auto byte = static_cast<unsigned char>(text[pos]);
  size_t need = 0;
  char32_t cp = 0;
  if (byte < 0x80) {
    *length = 1;
    return byte;
  } else if ((byte & 0xE0) == 0xC0) {
    need = 1;
    cp = byte & 0x1F;
  } else if ((byte & 0xF0) == 0xE0) {
    need = 2;
    cp = byte & 0x0F;
  } else if ((byte & 0xF8) == 0xF0) {
    need = 3;
    cp = byte & 0x07;
  } else {
    *length = 1;
    return 0xFFFD;
  }
  if (pos + need >= text.size()) {
    *length = 1;
    return 0xFFFD;
  }
  for (size_t i = 1; i <= need; ++i) {
    const auto next = static_cast<unsigned char>(text[pos + i]);
    if ((next & 0xC0) != 0x80) {
      *length = 1;
      return 0xFFFD;
    }
    cp = (cp << 6) | (next & 0x3F);
  }
  *length = need + 1;
  return cp;
}

void AppendUtf8(char32_t cp, std::string* out) {
  if (cp < 0x80) {
    out->push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out->push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out->push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out->push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out->push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out->push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out->push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out->push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out->push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out->push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

// Passage tokens re-expressed as answer-vocabulary ids; -1 for tokens that
// never occur in the answer.
struct EncodedPair {
  std::vector<int> passage;
  std::vector<int> answer_counts;
  size_t answer_len = 0;
};

EncodedPair Encode(const TokenSeq& passage, const TokenSeq& answer) {
  EncodedPair out;
  std::unordered_map<std::string_view, int> vocab;
  for (const std::string& tok : answer.tokens) {
    auto [it, inserted] = vocab.emplace(tok, static_cast<int>(vocab.size()));
    if (inserted) out.answer_counts.push_back(0);
    ++out.answer_counts[it->second];
  }
  out.answer_len = answer.size();
  out.passage.reserve(passage.size());
  for (const std::string& tok : passage.tokens) {
    auto it = vocab.find(tok);
    out.passage.push_back(it == vocab.end() ? -1 : it->second);
  }
  return out;
}

// Incremental bag-intersection size of a sliding window.
class SharedCounter {
 public:
  explicit SharedCounter(const std::vector<int>& answer_counts)
      : answer_counts_(answer_counts), window_(answer_counts.size(), 0) {}

  void Add(int id) {
    if (id < 0) return;
    if (window_[id] < answer_counts_[id]) ++shared_;
    ++window_[id];
  }
  void Remove(int id) {
    if (id < 0) return;
    --window_[id];
    if (window_[id] < answer_counts_[id]) --shared_;
  }
  size_t shared() const { return shared_; }

 private:
  const std::vector<int>& answer_counts_;
  std::vector<int> window_;
  size_t shared_ = 0;
};

// F1 comparisons use exact integer cross-multiplication:
//   2 s1 / (l1 + a) > 2 s2 / (l2 + a)  <=>  s1 (l2 + a) > s2 (l1 + a).
bool F1Greater(size_t s1, size_t len1, size_t s2, size_t len2, size_t a) {
  return s1 * (len2 + a) > s2 * (len1 + a);
}

double F1Value(size_t shared, size_t len, size_t answer_len) {
  return 2.0 * static_cast<double>(shared) /
         static_cast<double>(len + answer_len);
}

}  // namespace

TokenSeq TokenizeSimple(std::string_view text) {
  TokenSeq out;
  const locale_t loc = Utf8Locale();
  size_t pos = 0;
  std::string current;
  size_t current_begin = 0;
  bool in_word = false;

  auto flush = [&](size_t end) {
    if (!in_word) return;
    out.tokens.push_back(std::move(current));
    out.char_spans.push_back(
        {static_cast<uint32_t>(current_begin), static_cast<uint32_t>(end)});
    current.clear();
    in_word = false;
  };

  while (pos < text.size()) {
    size_t len = 1;
    const char32_t cp = DecodeUtf8(text, pos, &len);
    const auto wc = static_cast<wint_t>(cp);
    if (iswalnum_l(wc, loc)) {
      if (!in_word) {
        in_word = true;
        current_begin = pos;
      }
      AppendUtf8(static_cast<char32_t>(towlower_l(wc, loc)), &current);
    } else {
      flush(pos);
      if (!iswspace_l(wc, loc)) {
        std::string single;
        if (cp == 0xFFFD && len == 1 &&
            static_cast<unsigned char>(text[pos]) >= 0x80) {
          single.assign(text.substr(pos, 1));
        } else {
          AppendUtf8(static_cast<char32_t>(towlower_l(wc, loc)), &single);
        }
        out.tokens.push_back(std::move(single));
        out.char_spans.push_back(
            {static_cast<uint32_t>(pos), static_cast<uint32_t>(pos + len)});
      }
    }
    pos += len;
  }
  flush(pos);
  return out;
}

double F1Overlap(std::span<const std::string> span,
                 std::span<const std::string> answer) {
  if (span.empty() || answer.empty()) {
    Fail(ErrorCode::kInvalidArgument, "F1 of an empty span");
  }
  std::unordered_map<std::string_view, int> counts;
  for (const std::string& tok : answer) ++counts[tok];
  size_t shared = 0;
  for (const std::string& tok : span) {
    auto it = counts.find(tok);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++shared;
    }
  }
  return F1Value(shared, span.size(), answer.size());
}

std::vector<MatchSpan> ExactMatchSpans(const TokenSeq& passage,
                                       const TokenSeq& answer) {
  std::vector<MatchSpan> out;
  const size_t n = passage.size();
  const size_t m = answer.size();
  if (m == 0 || m > n) return out;
  for (size_t i = 0; i + m <= n; ++i) {
    if (std::equal(answer.tokens.begin(), answer.tokens.end(),
                   passage.tokens.begin() + static_cast<ptrdiff_t>(i))) {
      out.push_back({i, i + m - 1, 1.0});
    }
  }
  return out;
}

bool HasExactMatch(const TokenSeq& passage, const TokenSeq& answer) {
  const size_t m = answer.size();
  if (m == 0 || m > passage.size()) return false;
  return std::search(passage.tokens.begin(), passage.tokens.end(),
                     answer.tokens.begin(), answer.tokens.end()) !=
         passage.tokens.end();
}

double SpanLengthBound(size_t span_len, size_t answer_len, size_t shared) {
  if (shared == 0 || shared > answer_len || span_len == 0) {
    Fail(ErrorCode::kInvalidArgument,
         "length bound needs 0 < shared <= |answer| and a non-empty span");
  }
  const auto a = static_cast<double>(answer_len);
  const auto t = static_cast<double>(span_len);
  const auto s = static_cast<double>(shared);
  return a * (t + a - s) / s;
}

std::optional<MatchSpan> SoftMatch(const TokenSeq& passage,
                                   const TokenSeq& answer,
                                   SoftMatchStats* stats, bool check_bound) {
  if (answer.empty() || passage.empty()) return std::nullopt;
  const EncodedPair enc = Encode(passage, answer);
  const size_t n = enc.passage.size();
  const size_t a = enc.answer_len;

  size_t examined = 0;
  size_t act_size = 1;
  double len_limit = 2.0;
  std::optional<MatchSpan> best;
  size_t best_shared = 0;
  size_t best_len = 1;  // F1 of "no span" is 0; any shared > 0 beats it

  while (static_cast<double>(act_size) < len_limit && act_size <= n) {
    SharedCounter counter(enc.answer_counts);
    for (size_t i = 0; i < act_size; ++i) counter.Add(enc.passage[i]);
    for (size_t start = 0; start + act_size <= n; ++start) {
      if (start > 0) {
        counter.Remove(enc.passage[start - 1]);
        counter.Add(enc.passage[start + act_size - 1]);
      }
      ++examined;
      const size_t shared = counter.shared();
      if (shared > 0 && F1Greater(shared, act_size, best_shared, best_len, a)) {
        best = MatchSpan{start, start + act_size - 1,
                         F1Value(shared, act_size, a)};
        best_shared = shared;
        best_len = act_size;
        len_limit = SpanLengthBound(act_size, a, shared);
      }
    }
    ++act_size;
  }

  if (stats != nullptr) {
    stats->spans_examined += examined;
    if (check_bound) {
      // Everything of size >= act_size was skipped; none may beat `best`
      // under the shorter-then-earlier tie order, which for skipped (longer)
      // spans means none may have strictly higher F1.
      for (size_t size = act_size; size <= n; ++size) {
        SharedCounter counter(enc.answer_counts);
        for (size_t i = 0; i < size; ++i) counter.Add(enc.passage[i]);
        for (size_t start = 0; start + size <= n; ++start) {
          if (start > 0) {
            counter.Remove(enc.passage[start - 1]);
            counter.Add(enc.passage[start + size - 1]);
          }
          const size_t shared = counter.shared();
          if (shared > 0 && F1Greater(shared, size, best_shared, best_len, a)) {
            ++stats->bound_violations;
          }
        }
      }
    }
  }
  return best;
}

std::optional<MatchSpan> SoftMatchBruteForce(const TokenSeq& passage,
                                             const TokenSeq& answer,
                                             SoftMatchStats* stats) {
  if (answer.empty() || passage.empty()) return std::nullopt;
  const size_t n = passage.size();
  const size_t a = answer.size();
  std::optional<MatchSpan> best;
  size_t best_shared = 0;
  size_t examined = 0;
  // Plain double loop over (start, end) with an explicit ordering:
  // higher F1, then shorter, then earlier start.
  for (size_t start = 0; start < n; ++start) {
    for (size_t end = start; end < n; ++end) {
      ++examined;
      const std::span<const std::string> window(
          passage.tokens.data() + start, end - start + 1);
      std::unordered_map<std::string_view, int> counts;
      for (const std::string& tok : answer.tokens) ++counts[tok];
      size_t shared = 0;
      for (const std::string& tok : window) {
        auto it = counts.find(tok);
        if (it != counts.end() && it->second > 0) {
          --it->second;
          ++shared;
        }
      }
      if (shared == 0) continue;
      const size_t len = window.size();
      bool better = !best.has_value();
      if (!better) {
        const size_t best_len = best->length();
        if (F1Greater(shared, len, best_shared, best_len, a)) {
          better = true;
        } else if (!F1Greater(best_shared, best_len, shared, len, a)) {
          better = len < best_len || (len == best_len && start < best->start);
        }
      }
      if (better) {
        best = MatchSpan{start, end, F1Value(shared, len, a)};
        best_shared = shared;
      }
    }
  }
  if (stats != nullptr) stats->spans_examined += examined;
  return best;
}

ExampleAnnotation AnnotateExample(std::span<const std::string> answers,
                                  std::span<const AnnotationPassage> passages,
                                  const Tokenizer& tokenizer) {
  std::set<Boundary> boundaries;
  for (const std::string& answer_text : answers) {
    const TokenSeq answer = tokenizer(answer_text);
    if (answer.empty()) continue;
    for (size_t p = 0; p < passages.size(); ++p) {
      const std::vector<MatchSpan> exact =
          ExactMatchSpans(passages[p].tokens, answer);
      for (const MatchSpan& span : exact) {
        boundaries.insert({p, span.start, span.end});
      }
      if (exact.empty() && passages[p].is_golden) {
        if (auto soft = SoftMatch(passages[p].tokens, answer)) {
          boundaries.insert({p, soft->start, soft->end});
        }
      }
    }
  }
  if (boundaries.empty()) {
    Fail(ErrorCode::kShouldHaveBeenFiltered,
         "no answer could be located in the reader passages");
  }

  ExampleAnnotation out;
  std::set<TokenPos> starts;
  std::set<TokenPos> ends;
  std::set<size_t> positives;
  for (const Boundary& b : boundaries) {
    starts.insert({b.passage_index, b.start});
    ends.insert({b.passage_index, b.end});
    positives.insert(b.passage_index);
  }
  out.boundaries.assign(boundaries.begin(), boundaries.end());
  out.starts.assign(starts.begin(), starts.end());
  out.ends.assign(ends.begin(), ends.end());
  out.positive_passages.assign(positives.begin(), positives.end());
  return out;
}

ExampleAnnotation AnnotateExample(const QAExample& example,
                                  std::span<const PassageId> reader_passages,
                                  const PassageStore& store,
                                  const Tokenizer& tokenizer) {
  std::vector<AnnotationPassage> inputs;
  inputs.reserve(reader_passages.size());
  for (PassageId id : reader_passages) {
    const Passage& passage = store.at(id);
    inputs.push_back({id, tokenizer(passage.context),
                      example.golden_passage_id == id});
  }
  return AnnotateExample(example.answers, inputs, tokenizer);
}

void SaveAnnotations(const std::filesystem::path& path,
                     std::span<const AnnotationRecord> records) {
  std::vector<Json> lines;
  for (const AnnotationRecord& r : records) {
    Json starts = Json::array();
    Json ends = Json::array();
    Json boundaries = Json::array();
    for (const TokenPos& p : r.annotation.starts) starts.push_back({p.passage_index, p.token});
    for (const TokenPos& p : r.annotation.ends) ends.push_back({p.passage_index, p.token});
    for (const Boundary& b : r.annotation.boundaries) {
      boundaries.push_back({b.passage_index, b.start, b.end});
    }
    lines.push_back({{"question_key", r.question_key},
                     {"passage_ids", r.passage_ids},
                     {"starts", starts},
                     {"ends", ends},
                     {"boundaries", boundaries},
                     {"positive_passages", r.annotation.positive_passages}});
  }
  WriteJsonLines(path, lines);
}

std::vector<AnnotationRecord> LoadAnnotations(const std::filesystem::path& path) {
  std::vector<AnnotationRecord> out;
  ForEachJsonLine(path, [&](const Json& rec, size_t line) {
    try {
      AnnotationRecord r;
      r.question_key = rec.at("question_key").get<std::string>();
      r.passage_ids = rec.at("passage_ids").get<std::vector<PassageId>>();
      auto check = [&](size_t p) {
        if (p >= r.passage_ids.size()) {
          Fail(ErrorCode::kInvalidAnnotation,
               path.string() + ":" + std::to_string(line) + ": passage index out of range");
        }
        return p;
      };
      for (const Json& p : rec.at("starts")) {
        r.annotation.starts.push_back({check(p.at(0).get<size_t>()), p.at(1).get<size_t>()});
      }
      for (const Json& p : rec.at("ends")) {
        r.annotation.ends.push_back({check(p.at(0).get<size_t>()), p.at(1).get<size_t>()});
      }
      for (const Json& b : rec.at("boundaries")) {
        r.annotation.boundaries.push_back(
            {check(b.at(0).get<size_t>()), b.at(1).get<size_t>(), b.at(2).get<size_t>()});
      }
      for (const Json& p : rec.at("positive_passages")) {
        r.annotation.positive_passages.push_back(check(p.get<size_t>()));
      }
      out.push_back(std::move(r));
    } catch (const Json::exception& e) {
      Fail(ErrorCode::kParse, path.string() + ":" + std::to_string(line) + ": " + e.what());
    }
  });
  return out;
}

}  // namespace r2d2
