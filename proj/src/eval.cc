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

#include "r2d2/eval.h"

#include <locale.h>
#include <wctype.h>

#include <algorithm>
#include <cstring>
#include <iomanip>
#include <sstream>
#include <unordered_set>

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

std::u32string DecodeUtf8(std::string_view text) {
  std::u32string out;
  size_t i = 0;
  while (i < text.size()) {
    const auto b = static_cast<unsigned char>(text[i]);
    size_t need = 0;
    char32_t cp = 0;
    if (b < 0x80) {
      cp = b;
    } else if ((b & 0xE0) == 0xC0) {
      need = 1;
      cp = b & 0x1F;
    } else if ((b & 0xF0) == 0xE0) {
      need = 2;
      cp = b & 0x0F;
    } else if ((b & 0xF8) == 0xF0) {
      need = 3;
      cp = b & 0x07;
    } else {
      out.push_back(0xFFFD);
      ++i;
      continue;
    }
    if (need > 0 && i + need >= text.size()) {
      out.push_back(0xFFFD);
      ++i;
      continue;
    }
    bool valid = true;
    for (size_t k = 1; k <= need; ++k) {
      const auto c = static_cast<unsigned char>(text[i + k]);
      if ((c & 0xC0) != 0x80) {
        valid = false;
        break;
      }
      cp = (cp << 6) | (c & 0x3F);
    }
    if (!valid) {
      out.push_back(0xFFFD);
      ++i;
      continue;
    }
    out.push_back(cp);
    i += need + 1;
  }
  return out;
}

std::string EncodeUtf8(std::u32string_view text) {
  std::string out;
  for (char32_t cp : text) {
    if (cp < 0x80) {
      out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
      out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
      out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
      out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
  }
  return out;
}

bool IsAsciiPunct(char32_t cp) {
  return cp < 0x80 && std::strchr("!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~",
                                  static_cast<char>(cp)) != nullptr && cp != 0;
}

bool IsWordChar(char32_t cp) {
  return cp == U'_' || iswalnum_l(static_cast<wint_t>(cp), Utf8Locale());
}

bool IsSpace(char32_t cp) { return iswspace_l(static_cast<wint_t>(cp), Utf8Locale()); }

}  // namespace

std::string NormalizeAnswer(std::string_view text) {
  const locale_t loc = Utf8Locale();
  std::u32string lowered;
  for (char32_t cp : DecodeUtf8(text)) {
    if (IsAsciiPunct(cp)) continue;
    lowered.push_back(static_cast<char32_t>(towlower_l(static_cast<wint_t>(cp), loc)));
  }

  // Whole-word articles become a single space.
  static const std::u32string kArticles[] = {U"the", U"an", U"a"};
  std::u32string without_articles;
  size_t i = 0;
  while (i < lowered.size()) {
    bool replaced = false;
    const bool left_boundary = i == 0 || !IsWordChar(lowered[i - 1]);
    if (left_boundary) {
      for (const std::u32string& article : kArticles) {
        const size_t end = i + article.size();
        if (end <= lowered.size() && lowered.compare(i, article.size(), article) == 0 &&
            (end == lowered.size() || !IsWordChar(lowered[end]))) {
          without_articles.push_back(U' ');
          i = end;
          replaced = true;
          break;
        }
      }
    }
    if (!replaced) without_articles.push_back(lowered[i++]);
  }

  std::u32string collapsed;
  bool pending_space = false;
  for (char32_t cp : without_articles) {
    if (IsSpace(cp)) {
      pending_space = !collapsed.empty();
      continue;
    }
    if (pending_space) collapsed.push_back(U' ');
    pending_space = false;
    collapsed.push_back(cp);
  }
  return EncodeUtf8(collapsed);
}

bool ExactMatch(std::string_view prediction, std::span<const std::string> golds) {
  const std::string normalized = NormalizeAnswer(prediction);
  return std::any_of(golds.begin(), golds.end(), [&](const std::string& gold) {
    return NormalizeAnswer(gold) == normalized;
  });
}

EvalReport EmScore(std::span<const std::string> predictions,
                   std::span<const QAExample> dataset) {
  if (predictions.size() != dataset.size()) {
    Fail(ErrorCode::kInvalidArgument, "predictions and dataset differ in length");
  }
  EvalReport report;
  report.metric = "em";
  size_t hits = 0;
  for (size_t i = 0; i < dataset.size(); ++i) {
    const bool hit = ExactMatch(predictions[i], dataset[i].answers);
    report.per_example.push_back(hit);
    hits += hit;
  }
  report.value = dataset.empty() ? 0.0 : static_cast<double>(hits) / dataset.size();
  return report;
}

EvalReport AccuracyAtK(std::span<const std::vector<PassageId>> retrieved,
                       std::span<const QAExample> dataset, const PassageStore& store,
                       size_t k, const Tokenizer& tokenizer) {
  if (retrieved.size() != dataset.size()) {
    Fail(ErrorCode::kInvalidArgument, "one retrieved list per example required");
  }
  EvalReport report;
  report.metric = "accuracy@" + std::to_string(k);
  size_t hits = 0;
  for (size_t i = 0; i < dataset.size(); ++i) {
    if (retrieved[i].size() < k) {
      Fail(ErrorCode::kInvalidArgument, "example " + std::to_string(i) + " has only " +
                                            std::to_string(retrieved[i].size()) +
                                            " retrieved passages");
    }
    bool hit = false;
    for (size_t r = 0; r < k && !hit; ++r) {
      hit = ContainsAnswer(store.at(retrieved[i][r]), dataset[i].answers, tokenizer);
    }
    report.per_example.push_back(hit);
    hits += hit;
  }
  report.value = dataset.empty() ? 0.0 : static_cast<double>(hits) / dataset.size();
  return report;
}

void SaveReport(const EvalReport& report, const std::filesystem::path& path) {
  WriteJsonFile(path, {{"metric", report.metric},
                       {"value", report.value},
                       {"per_example", report.per_example},
                       {"config_hash", report.config_fingerprint},
                       {"errors", report.errors}});
}

EvalReport LoadReport(const std::filesystem::path& path) {
  const Json doc = ReadJsonFile(path);
  EvalReport report;
  try {
    report.metric = doc.at("metric").get<std::string>();
    report.value = doc.at("value").get<double>();
    report.per_example = doc.at("per_example").get<std::vector<uint8_t>>();
    report.config_fingerprint = doc.value("config_hash", "");
    report.errors = doc.value("errors", std::vector<std::string>{});
  } catch (const Json::exception& e) {
    Fail(ErrorCode::kFormat, path.string() + ": " + e.what());
  }
  return report;
}

std::string ToString(Readers readers) {
  switch (readers) {
    case Readers::kExtractive: return "ext";
    case Readers::kGenerative: return "gen";
    case Readers::kBoth: return "ext+gen";
  }
  return "?";
}

std::string ToString(FusionMode mode) {
  switch (mode) {
    case FusionMode::kNone: return "none";
    case FusionMode::kNaive: return "naive";
    case FusionMode::kAggregate: return "aggr";
    case FusionMode::kAggregateDecision: return "aggr+bd";
  }
  return "?";
}

Readers ParseReaders(const std::string& text) {
  if (text == "ext") return Readers::kExtractive;
  if (text == "gen") return Readers::kGenerative;
  if (text == "ext+gen" || text == "both") return Readers::kBoth;
  Fail(ErrorCode::kInvalidArgument, "unknown readers '" + text + "'");
}

FusionMode ParseFusionMode(const std::string& text) {
  if (text == "none" || text == "-") return FusionMode::kNone;
  if (text == "naive") return FusionMode::kNaive;
  if (text == "aggr") return FusionMode::kAggregate;
  if (text == "aggr+bd") return FusionMode::kAggregateDecision;
  Fail(ErrorCode::kInvalidArgument, "unknown fusion mode '" + text + "'");
}

std::vector<AblationRow> StandardAblationGrid() {
  std::vector<AblationRow> rows;
  for (bool reranker : {false, true}) {
    rows.push_back({reranker, Readers::kExtractive, FusionMode::kNone});
    rows.push_back({reranker, Readers::kGenerative, FusionMode::kNone});
    rows.push_back({reranker, Readers::kBoth, FusionMode::kNaive});
    rows.push_back({reranker, Readers::kBoth, FusionMode::kAggregate});
    rows.push_back({reranker, Readers::kBoth, FusionMode::kAggregateDecision});
  }
  return rows;
}

AblationTable AblationRun(
    const std::string& dataset_name, std::span<const AblationRow> rows,
    const std::function<std::optional<double>(const AblationRow&, IndexVariant)>& run) {
  AblationTable table;
  table.dataset = dataset_name;
  auto attempt = [&](const AblationRow& row, IndexVariant variant) -> std::optional<double> {
    try {
      return run(row, variant);
    } catch (const std::exception& e) {
      table.failures.push_back(std::to_string(table.cells.size()) +
                               (variant == IndexVariant::kPruned ? " pruned: " : " full: ") +
                               e.what());
      return std::nullopt;
    }
  };
  for (const AblationRow& row : rows) {
    AblationCell cell;
    cell.row = row;
    cell.em_pruned = attempt(row, IndexVariant::kPruned);
    cell.em_full = attempt(row, IndexVariant::kFull);
    if (cell.em_pruned && cell.em_full) cell.delta = *cell.em_pruned - *cell.em_full;
    table.cells.push_back(cell);
  }
  return table;
}

std::string AblationTable::Render() const {
  std::ostringstream out;
  auto num = [](const std::optional<double>& v) {
    std::ostringstream s;
    if (v) {
      s << std::fixed << std::setprecision(2) << 100.0 * *v;
    } else {
      s << "n/a";
    }
    return s.str();
  };
  out << dataset << '\n';
  out << std::left << std::setw(10) << "rerank" << std::setw(9) << "readers"
      << std::setw(9) << "fusion" << std::right << std::setw(9) << "pruned"
      << std::setw(9) << "full" << std::setw(9) << "delta" << '\n';
  for (const AblationCell& cell : cells) {
    out << std::left << std::setw(10) << (cell.row.reranker ? "yes" : "-")
        << std::setw(9) << ToString(cell.row.readers) << std::setw(9)
        << (cell.row.fusion == FusionMode::kNone ? "-" : ToString(cell.row.fusion))
        << std::right << std::setw(9) << num(cell.em_pruned) << std::setw(9)
        << num(cell.em_full) << std::setw(9) << num(cell.delta) << '\n';
  }
  return out.str();
}

std::vector<SweepPoint> IndexSizeSweep(std::span<const size_t> sizes,
                                       const RelevanceScores& scores,
                                       std::span<const PassageId> golden_ids,
                                       const std::function<double(const PrunedSet&)>& run) {
  if (!std::is_sorted(sizes.begin(), sizes.end())) {
    Fail(ErrorCode::kInvalidArgument, "sweep sizes must be ascending");
  }
  std::unordered_set<PassageId> golden(golden_ids.begin(), golden_ids.end());
  std::map<PassageId, double> rest;
  for (const auto& [id, p] : scores.values()) {
    if (!golden.contains(id)) rest.emplace(id, p);
  }
  const RelevanceScores non_golden(std::move(rest));
  const std::vector<PassageId> golden_list(golden.begin(), golden.end());

  std::vector<SweepPoint> curve;
  for (size_t size : sizes) {
    if (size < golden.size()) {
      Fail(ErrorCode::kInvalidArgument, "index size " + std::to_string(size) +
                                            " is below the golden count " +
                                            std::to_string(golden.size()));
    }
    const size_t extra = size - golden.size();
    if (extra > non_golden.size()) {
      Fail(ErrorCode::kInvalidArgument, "index size exceeds the scored corpus");
    }
    PrunedSet base;
    if (extra > 0) base = PoolTopN(non_golden, extra);
    const PrunedSet index_set = InjectGolden(base, golden_list);
    curve.push_back({size, run(index_set)});
  }
  return curve;
}

}  // namespace r2d2
