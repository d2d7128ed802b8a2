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

#include "r2d2/pipeline.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <set>
#include <thread>

#include "r2d2/config.h"
#include "r2d2/errors.h"
#include "r2d2/jsonl.h"
#include "r2d2/pruner.h"
#include "r2d2/reranker.h"

namespace r2d2 {
namespace {

std::string HexHash(const std::string& bytes) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(StableHash(bytes)));
  return buf;
}

void RejectUnknownKeys(const Json& table, const std::set<std::string>& known,
                       const std::string& table_name) {
  if (!table.is_object()) {
    Fail(ErrorCode::kInvalidArgument, "[" + table_name + "] must be a table");
  }
  for (const auto& [key, value] : table.items()) {
    if (!known.contains(key)) {
      Fail(ErrorCode::kInvalidArgument, "unknown key '" + key + "' in [" + table_name + "]");
    }
  }
}

template <typename T>
T Get(const Json& table, const char* key, T fallback) {
  if (!table.contains(key)) return fallback;
  try {
    return table.at(key).get<T>();
  } catch (const Json::exception& e) {
    Fail(ErrorCode::kInvalidArgument, std::string("config key '") + key + "': " + e.what());
  }
}

size_t GetCount(const Json& table, const char* key, size_t fallback) {
  const int64_t value = Get<int64_t>(table, key, static_cast<int64_t>(fallback));
  if (value < 0) Fail(ErrorCode::kInvalidArgument, std::string(key) + " must be >= 0");
  return static_cast<size_t>(value);
}

SpanScoreMode ParseSpanScore(const std::string& text) {
  if (text == "raw") return SpanScoreMode::kRawProduct;
  if (text == "normalized") return SpanScoreMode::kNormalizedProduct;
  Fail(ErrorCode::kInvalidArgument, "unknown span_score '" + text + "'");
}

std::string SpanScoreName(SpanScoreMode mode) {
  return mode == SpanScoreMode::kRawProduct ? "raw" : "normalized";
}

// Runs one stage, prefixing failures with its name.
template <typename F>
auto RunStage(const char* stage, F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    const std::string what = e.what();
    if (what.rfind("[", 0) == 0) throw;
    throw Error(e.code(), std::string("[") + stage + "] " + what);
  }
}

double SafeExp(double logp) {
  return std::max(std::exp(logp), std::numeric_limits<double>::denorm_min());
}

Json SpanToJson(const AnswerSpan& s) {
  Json out = {{"passage_id", s.passage_id},
              {"passage_index", s.passage_index},
              {"start", s.start_tok},
              {"end", s.end_tok},
              {"text", s.text},
              {"logp_e", s.logp_e}};
  if (s.logp_g) out["logp_g"] = *s.logp_g;
  if (s.logp_r) out["logp_r"] = *s.logp_r;
  if (s.logp_rr) out["logp_rr"] = *s.logp_rr;
  return out;
}

AnswerSpan SpanFromJson(const Json& j) {
  AnswerSpan s;
  s.passage_id = j.at("passage_id").get<PassageId>();
  s.passage_index = j.at("passage_index").get<size_t>();
  s.start_tok = j.at("start").get<size_t>();
  s.end_tok = j.at("end").get<size_t>();
  s.text = j.at("text").get<std::string>();
  s.logp_e = j.at("logp_e").get<double>();
  return s;
}

Json RankedToJson(const std::vector<RankedPassage>& list) {
  Json out = Json::array();
  for (const RankedPassage& r : list) out.push_back({{"id", r.passage_id}, {"score", r.score}});
  return out;
}

const std::set<std::string> kRetrievers = {"lexical", "dense-file"};
const std::set<std::string> kRerankers = {"lexical", "file", "none"};
const std::set<std::string> kReaders = {"lexical", "file"};
const std::set<std::string> kGenerators = {"lexical", "file", "none"};

}  // namespace

size_t PipelineConfig::reader_passages() const {
  if (v) return *v;
  return reranking() ? kDefaultReaderPassagesReranked : kDefaultReaderPassagesRetrieved;
}

void PipelineConfig::Validate() const {
  auto bad = [](const std::string& msg) { Fail(ErrorCode::kInvalidArgument, msg); };
  if (k < 1 || k > kMaxCandidates) bad("K must be in [1, 400]");
  if (m < 1) bad("M must be >= 1");
  if (max_span_len < 1) bad("max_span_len must be >= 1");
  if (factorization.empty()) bad("empty factorization");
  if (readers != Readers::kGenerative &&
      (reader_passages() < 1 || reader_passages() > k)) {
    bad("V = " + std::to_string(reader_passages()) + " must be in [1, K]");
  }
  if (readers != Readers::kExtractive && (v2 < 1 || v2 > k)) bad("V2 must be in [1, K]");
  if (!kRetrievers.contains(providers.retriever)) bad("unknown retriever '" + providers.retriever + "'");
  if (!kRerankers.contains(providers.reranker)) bad("unknown reranker '" + providers.reranker + "'");
  if (!kReaders.contains(providers.reader)) bad("unknown reader '" + providers.reader + "'");
  if (!kGenerators.contains(providers.generative)) {
    bad("unknown generative provider '" + providers.generative + "'");
  }
  if (readers != Readers::kExtractive && providers.generative == "none") {
    bad("readers '" + ToString(readers) + "' need a generative provider");
  }
  if (readers == Readers::kBoth) {
    if (fusion == FusionMode::kNone) bad("two readers need a fusion mode");
  } else if (fusion != FusionMode::kNone) {
    bad("fusion '" + ToString(fusion) + "' needs both readers");
  }
}

Json PipelineConfig::ToJson() const {
  return {{"k", k},
          {"v", v ? Json(*v) : Json(nullptr)},
          {"v2", v2},
          {"m", m},
          {"max_span_len", max_span_len},
          {"factorization", factorization.Label()},
          {"span_score", SpanScoreName(span_score)},
          {"readers", ToString(readers)},
          {"fusion", ToString(fusion)},
          {"feature_mask", feature_mask.ToString()},
          {"providers",
           {{"retriever", providers.retriever},
            {"reranker", providers.reranker},
            {"reader", providers.reader},
            {"generative", providers.generative}}},
          {"index_tag", index_tag}};
}

PipelineConfig PipelineConfig::FromJson(const Json& root) {
  PipelineConfig c;
  if (root.contains("pipeline")) {
    const Json& p = root.at("pipeline");
    RejectUnknownKeys(p,
                      {"k", "v", "v2", "m", "max_span_len", "factorization", "span_score",
                       "readers", "fusion", "feature_mask", "threads", "index_tag"},
                      "pipeline");
    c.k = GetCount(p, "k", c.k);
    if (p.contains("v")) c.v = GetCount(p, "v", 0);
    c.v2 = GetCount(p, "v2", c.v2);
    c.m = GetCount(p, "m", c.m);
    c.max_span_len = GetCount(p, "max_span_len", c.max_span_len);
    if (p.contains("factorization")) {
      c.factorization = Factorization::Parse(Get<std::string>(p, "factorization", ""));
    }
    if (p.contains("span_score")) c.span_score = ParseSpanScore(Get<std::string>(p, "span_score", ""));
    if (p.contains("readers")) c.readers = ParseReaders(Get<std::string>(p, "readers", ""));
    if (p.contains("fusion")) c.fusion = ParseFusionMode(Get<std::string>(p, "fusion", ""));
    if (p.contains("feature_mask")) {
      c.feature_mask = FeatureMask::Parse(Get<std::string>(p, "feature_mask", ""));
    }
    c.threads = static_cast<unsigned>(std::max<size_t>(1, GetCount(p, "threads", 1)));
    c.index_tag = Get<std::string>(p, "index_tag", "");
  }
  if (root.contains("providers")) {
    const Json& p = root.at("providers");
    RejectUnknownKeys(p, {"retriever", "reranker", "reader", "generative"}, "providers");
    c.providers.retriever = Get<std::string>(p, "retriever", c.providers.retriever);
    c.providers.reranker = Get<std::string>(p, "reranker", c.providers.reranker);
    c.providers.reader = Get<std::string>(p, "reader", c.providers.reader);
    c.providers.generative = Get<std::string>(p, "generative", c.providers.generative);
  }
  return c;
}

std::string PipelineConfig::Fingerprint() const { return HexHash(ToJson().dump()); }

PipelinePaths PipelinePaths::FromJson(const Json& root, const std::filesystem::path& base) {
  PipelinePaths paths;
  if (!root.contains("paths")) return paths;
  const Json& p = root.at("paths");
  const std::vector<std::pair<const char*, std::filesystem::path*>> fields = {
      {"passages", &paths.passages},
      {"examples", &paths.examples},
      {"index", &paths.index},
      {"pruned_set", &paths.pruned_set},
      {"query_embeddings", &paths.query_embeddings},
      {"rerank_scores", &paths.rerank_scores},
      {"encoder_dir", &paths.encoder_dir},
      {"reader_heads", &paths.reader_heads},
      {"generative", &paths.generative},
      {"aggregation_model", &paths.aggregation_model},
      {"decision_model", &paths.decision_model},
      {"stage_cache", &paths.stage_cache}};
  std::set<std::string> known;
  for (const auto& [name, field] : fields) known.insert(name);
  RejectUnknownKeys(p, known, "paths");
  for (const auto& [name, field] : fields) {
    if (!p.contains(name)) continue;
    std::filesystem::path value = Get<std::string>(p, name, "");
    *field = value.is_absolute() || base.empty() ? value : base / value;
  }
  return paths;
}

EngineConfig EngineConfigFromJson(const Json& root, const std::filesystem::path& base) {
  RejectUnknownKeys(root, {"seed", "pipeline", "providers", "paths", "train"}, "root");
  EngineConfig out;
  out.pipeline = PipelineConfig::FromJson(root);
  out.pipeline.Validate();
  out.paths = PipelinePaths::FromJson(root, base);
  out.seed = Get<uint64_t>(root, "seed", 0);
  if (root.contains("train")) {
    const Json& t = root.at("train");
    RejectUnknownKeys(t, {"epochs", "lr", "halve_on_increase"}, "train");
    out.train.epochs = Get<int>(t, "epochs", out.train.epochs);
    out.train.lr = Get<double>(t, "lr", out.train.lr);
    out.train.halve_on_increase = Get<bool>(t, "halve_on_increase", out.train.halve_on_increase);
  }
  out.train.seed = out.seed;
  return out;
}

EngineConfig LoadEngineConfig(const std::filesystem::path& path) {
  return EngineConfigFromJson(LoadToml(path), path.parent_path());
}

Providers BuildProviders(const PipelineConfig& config, const PipelinePaths& paths,
                         std::shared_ptr<const PassageStore> store,
                         const std::vector<PassageId>* searchable_ids) {
  config.Validate();
  std::vector<PassageId> searchable;
  if (searchable_ids != nullptr) {
    searchable = *searchable_ids;
    if (searchable.empty()) Fail(ErrorCode::kInvalidArgument, "empty searchable set");
  } else if (!paths.pruned_set.empty()) {
    searchable = LoadPrunedSet(paths.pruned_set).ids;
  }

  std::shared_ptr<const LexicalScorer> scorer;
  std::shared_ptr<const LexicalProvider> lexical;
  auto get_lexical = [&]() {
    if (!lexical) {
      scorer = std::make_shared<LexicalScorer>(store);
      lexical = std::make_shared<LexicalProvider>(scorer, searchable);
    }
    return lexical;
  };
  auto require = [](const std::filesystem::path& p, const char* what) {
    if (p.empty()) Fail(ErrorCode::kInvalidArgument, std::string("missing path: ") + what);
  };

  Providers out;
  if (config.providers.retriever == "lexical") {
    out.retriever = get_lexical();
  } else {
    require(paths.index, "index");
    require(paths.query_embeddings, "query_embeddings");
    auto index = std::make_shared<EmbeddingMatrix>(ReadIndex(paths.index));
    if (!searchable.empty()) {
      index = std::make_shared<EmbeddingMatrix>(SubsetIndex(*index, searchable));
    }
    out.retriever =
        std::make_shared<DenseFileRetriever>(index, paths.query_embeddings, config.threads);
  }
  if (config.providers.reranker == "lexical") {
    out.reranker = get_lexical();
  } else if (config.providers.reranker == "file") {
    require(paths.rerank_scores, "rerank_scores");
    out.reranker = std::make_shared<FileRerankProvider>(paths.rerank_scores);
  }
  if (config.providers.reader == "lexical") {
    out.reader = get_lexical();
  } else {
    require(paths.encoder_dir, "encoder_dir");
    require(paths.reader_heads, "reader_heads");
    out.reader = std::make_shared<FileReaderProvider>(paths.encoder_dir, paths.reader_heads);
  }
  if (config.providers.generative == "lexical") {
    out.generative = get_lexical();
  } else if (config.providers.generative == "file") {
    require(paths.generative, "generative");
    out.generative = std::make_shared<FileGenerativeProvider>(paths.generative);
  }
  return out;
}

FusionModels LoadFusionModels(const PipelineConfig& config, const PipelinePaths& paths) {
  FusionModels models;
  if (config.fusion == FusionMode::kAggregate ||
      config.fusion == FusionMode::kAggregateDecision) {
    if (!paths.aggregation_model.empty()) {
      models.aggregation = LoadAggregationModel(paths.aggregation_model);
    }
  }
  if (config.fusion == FusionMode::kAggregateDecision && !paths.decision_model.empty()) {
    models.decision = LoadDecisionModel(paths.decision_model);
  }
  return models;
}

Json TraceToJson(const Trace& t) {
  Json spans = Json::array();
  for (const AnswerSpan& s : t.spans) spans.push_back(SpanToJson(s));
  Json reranked = Json::array();
  for (const AnswerSpan& s : t.generative_reranked) reranked.push_back(SpanToJson(s));
  Json aggregated = Json::array();
  for (const AggregatedSpan& a : t.aggregated) {
    aggregated.push_back({{"span", a.span_index}, {"text", a.text}, {"score", a.score}});
  }
  Json out = {{"retrieved", RankedToJson(t.retrieved)},
              {"reader_passages", RankedToJson(t.reader_passages)},
              {"generator_passages", RankedToJson(t.generator_passages)},
              {"spans", spans},
              {"generative_reranked", reranked},
              {"aggregated", aggregated},
              {"answer", t.answer}};
  if (t.generated) out["generated"] = {{"text", t.generated->text}, {"logp", t.generated->logp}};
  if (t.s_agg) out["s_agg"] = *t.s_agg;
  if (t.abstractive) out["abstractive"] = *t.abstractive;
  return out;
}

Pipeline::Pipeline(PipelineConfig config, std::shared_ptr<const PassageStore> store,
                   Providers providers, FusionModels models)
    : config_(std::move(config)),
      store_(std::move(store)),
      providers_(std::move(providers)),
      models_(std::move(models)) {
  config_.Validate();
}

std::string Pipeline::StageHash(const std::string& stage) const {
  Json key = {{"index_tag", config_.index_tag},
              {"k", config_.k},
              {"retriever", config_.providers.retriever}};
  if (stage == "retrieve") return HexHash(key.dump());
  key["reranker"] = config_.providers.reranker;
  if (stage == "rerank") return HexHash(key.dump());
  key["v"] = config_.reader_passages();
  key["m"] = config_.m;
  key["max_span_len"] = config_.max_span_len;
  key["factorization"] = config_.factorization.Label();
  key["span_score"] = SpanScoreName(config_.span_score);
  key["reader"] = config_.providers.reader;
  return HexHash(key.dump());
}

Trace Pipeline::RunQuestion(const QAExample& q) const {
  const PipelineConfig& c = config_;
  const std::string& key = QuestionKey(q);
  Trace t;

  auto need = [](const std::shared_ptr<const ScoreProvider>& p, const char* what) {
    if (!p) Fail(ErrorCode::kStage, std::string("no ") + what + " provider bound");
    return p.get();
  };

  // Retrieval.
  RunStage("retrieve", [&] {
    std::optional<Json> cached;
    if (cache_) cached = cache_->Get("retrieve", StageHash("retrieve"), key);
    if (cached) {
      for (const Json& r : *cached) {
        t.retrieved.push_back({r.at("id").get<PassageId>(), r.at("score").get<double>()});
      }
    } else {
      for (const RetrievalResult& r : need(providers_.retriever, "retriever")->Retrieve(q, c.k)) {
        t.retrieved.push_back({r.passage_id, static_cast<double>(r.score)});
      }
      if (cache_) cache_->Put("retrieve", StageHash("retrieve"), key, RankedToJson(t.retrieved));
    }
    if (t.retrieved.size() != c.k) {
      Fail(ErrorCode::kStage, "expected " + std::to_string(c.k) + " passages, got " +
                                  std::to_string(t.retrieved.size()));
    }
  });

  CandidateList candidates;
  candidates.question_key = key;
  std::map<PassageId, double> retriever_scores;
  for (const RankedPassage& r : t.retrieved) {
    candidates.entries.push_back({r.passage_id, r.score});
    retriever_scores[r.passage_id] = r.score;
  }
  const std::map<PassageId, double> p_r = SoftmaxOverSet(retriever_scores);

  // Reranking.
  std::vector<RankedPassage> order;
  std::map<PassageId, double> p_rr;
  if (c.reranking()) {
    RunStage("rerank", [&] {
      RerankScores scores;
      std::optional<Json> cached;
      if (cache_) cached = cache_->Get("rerank", StageHash("rerank"), key);
      if (cached) {
        for (const Json& r : *cached) scores[r.at("id").get<PassageId>()] = r.at("score").get<double>();
      } else {
        const std::vector<PassageId> ids = candidates.ids();
        scores = need(providers_.reranker, "reranker")->Rerank(q, ids);
        if (cache_) {
          std::vector<RankedPassage> rows;
          for (const auto& [id, s] : scores) rows.push_back({id, s});
          cache_->Put("rerank", StageHash("rerank"), key, RankedToJson(rows));
        }
      }
      p_rr = RerankDistribution(candidates, scores);
      for (const Candidate& cand : ApplyRerank(candidates, scores, c.k).entries) {
        order.push_back({cand.passage_id, scores.at(cand.passage_id)});
      }
    });
  } else {
    order = t.retrieved;
  }
  if (c.readers != Readers::kGenerative) {
    t.reader_passages.assign(order.begin(),
                             order.begin() + static_cast<ptrdiff_t>(c.reader_passages()));
  }
  if (c.readers != Readers::kExtractive) {
    t.generator_passages.assign(order.begin(), order.begin() + static_cast<ptrdiff_t>(c.v2));
  }

  // Extractive reader.
  if (c.readers != Readers::kGenerative) {
    RunStage("extractive", [&] {
      std::optional<Json> cached;
      if (cache_) cached = cache_->Get("extractive", StageHash("extractive"), key);
      if (cached) {
        for (const Json& s : *cached) t.spans.push_back(SpanFromJson(s));
        return;
      }
      const ScoreProvider* reader = need(providers_.reader, "reader");
      const ReaderHeads& heads = reader->Heads();
      std::vector<EncoderOutput> encoded;
      std::vector<ScoreSet> scores;
      std::vector<std::vector<uint8_t>> masks;
      for (const RankedPassage& p : t.reader_passages) {
        encoded.push_back(reader->Encode(q, store_->at(p.passage_id)));
        if (encoded.back().passage_id != p.passage_id) {
          Fail(ErrorCode::kStage, "encoder output for the wrong passage");
        }
        scores.push_back(ComputeScores(encoded.back(), heads, c.max_span_len));
        masks.push_back(ContextMask(encoded.back().kinds));
      }
      const Distributions dist = Normalize(scores, masks);
      t.spans = DecodeSpans(dist, c.factorization, c.m, c.max_span_len, c.span_score);
      if (t.spans.empty()) Fail(ErrorCode::kStage, "no legal answer span");
      AttachSpanText(t.spans, encoded, *store_);
      if (cache_) {
        Json rows = Json::array();
        for (const AnswerSpan& s : t.spans) rows.push_back(SpanToJson(s));
        cache_->Put("extractive", StageHash("extractive"), key, rows);
      }
    });
  }

  // Generative reader.
  std::vector<PassageId> generator_ids;
  for (const RankedPassage& p : t.generator_passages) generator_ids.push_back(p.passage_id);
  if (c.readers != Readers::kExtractive) {
    RunStage("generate", [&] {
      t.generated = need(providers_.generative, "generative")->Generate(q, generator_ids);
    });
  }

  if (c.readers == Readers::kBoth) {
    RunStage("answer-rerank", [&] {
      std::unordered_map<std::string, double> gen_logp;
      for (const AnswerSpan& s : t.spans) {
        if (!gen_logp.contains(s.text)) {
          gen_logp[s.text] = providers_.generative->SpanLogProb(q, generator_ids, s.text);
        }
      }
      for (AnswerSpan& s : t.spans) {
        s.logp_g = gen_logp.at(s.text);
        s.logp_r = std::log(p_r.at(s.passage_id));
        if (c.reranking()) s.logp_rr = std::log(p_rr.at(s.passage_id));
        t.features.push_back({SafeExp(s.logp_e), SafeExp(*s.logp_g), p_r.at(s.passage_id),
                              c.reranking() ? p_rr.at(s.passage_id) : 1.0});
      }
      t.generative_reranked = AnswerRerank(t.spans, gen_logp);
    });
  }

  // Fusion.
  switch (c.fusion) {
    case FusionMode::kNone:
      t.answer = c.readers == Readers::kExtractive ? t.spans.front().text : t.generated->text;
      break;
    case FusionMode::kNaive:
      t.answer = t.generative_reranked.front().text;
      break;
    case FusionMode::kAggregate:
    case FusionMode::kAggregateDecision: {
      RunStage("aggregate", [&] {
        if (!models_.aggregation) Fail(ErrorCode::kStage, "no aggregation model loaded");
        for (size_t i = 0; i < t.spans.size(); ++i) {
          t.aggregated.push_back(
              {i, t.spans[i].text, AggregateScore(t.features[i], *models_.aggregation)});
        }
        std::stable_sort(t.aggregated.begin(), t.aggregated.end(),
                         [](const AggregatedSpan& a, const AggregatedSpan& b) {
                           return a.score > b.score;
                         });
        const BestSpan best = BestAggregated(t.features, *models_.aggregation);
        t.s_agg = best.score;
        t.answer = t.spans[best.index].text;
      });
      if (c.fusion == FusionMode::kAggregateDecision) {
        RunStage("decide", [&] {
          if (!models_.decision) Fail(ErrorCode::kStage, "no decision model loaded");
          t.abstractive = ChooseAbstractive(*t.s_agg, t.generated->logp, *models_.decision);
          t.answer = Decide(t.answer, t.generated->text, *t.s_agg, t.generated->logp,
                            *models_.decision);
        });
      }
      break;
    }
  }
  return t;
}

BatchResult Pipeline::RunBatch(std::span<const QAExample> dataset) const {
  if (dataset.empty()) Fail(ErrorCode::kInvalidArgument, "empty dataset");
  const size_t n = dataset.size();
  BatchResult out;
  out.predictions.assign(n, "");
  out.traces.assign(n, std::nullopt);
  std::vector<std::string> errors(n);

  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (size_t i = next++; i < n; i = next++) {
      try {
        Trace t = RunQuestion(dataset[i]);
        out.predictions[i] = t.answer;
        out.traces[i] = std::move(t);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  const unsigned threads = std::max(1u, std::min<unsigned>(config_.threads,
                                                           static_cast<unsigned>(n)));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (std::thread& th : pool) th.join();
  }

  out.report = EmScore(out.predictions, dataset);
  for (size_t i = 0; i < n; ++i) {
    if (errors[i].empty()) continue;
    out.report.per_example[i] = 0;
    out.report.errors.push_back(std::to_string(i) + ": " + errors[i]);
  }
  size_t hits = 0;
  for (uint8_t bit : out.report.per_example) hits += bit;
  out.report.value = static_cast<double>(hits) / static_cast<double>(n);
  out.report.config_fingerprint = config_.Fingerprint();
  return out;
}

std::vector<AggregationExample> BuildAggregationExamples(
    std::span<const QAExample> dataset, std::span<const std::optional<Trace>> traces) {
  if (dataset.size() != traces.size()) {
    Fail(ErrorCode::kInvalidArgument, "one trace per example required");
  }
  std::vector<AggregationExample> out;
  for (size_t i = 0; i < dataset.size(); ++i) {
    const auto& t = traces[i];
    if (!t || t->features.empty()) continue;
    for (size_t a = 0; a < t->spans.size(); ++a) {
      if (ExactMatch(t->spans[a].text, dataset[i].answers)) {
        out.push_back({t->features, a});
        break;
      }
    }
  }
  return out;
}

std::vector<DecisionExample> BuildDecisionExamples(
    std::span<const QAExample> dataset, std::span<const std::optional<Trace>> traces,
    const AggregationModel& model) {
  if (dataset.size() != traces.size()) {
    Fail(ErrorCode::kInvalidArgument, "one trace per example required");
  }
  std::vector<DecisionExample> out;
  for (size_t i = 0; i < dataset.size(); ++i) {
    const auto& t = traces[i];
    if (!t || t->features.empty() || !t->generated) continue;
    const BestSpan best = BestAggregated(t->features, model);
    const bool span_ok = ExactMatch(t->spans[best.index].text, dataset[i].answers);
    const bool gen_ok = ExactMatch(t->generated->text, dataset[i].answers);
    if (span_ok == gen_ok) continue;
    out.push_back({best.score, t->generated->logp, gen_ok ? 1 : 0});
  }
  return out;
}

}  // namespace r2d2

namespace r2d2 {

FusionModels FitFusionModels(const PipelineConfig& config, const Providers& providers,
                             std::shared_ptr<const PassageStore> store,
                             std::span<const QAExample> train, bool with_decision,
                             const TrainOptions& options) {
  PipelineConfig naive = config;
  naive.readers = Readers::kBoth;
  naive.fusion = FusionMode::kNaive;
  const Pipeline pipeline(naive, store, providers);
  const BatchResult batch = pipeline.RunBatch(train);

  FusionModels models;
  const std::vector<AggregationExample> aggregation =
      BuildAggregationExamples(train, batch.traces);
  if (aggregation.empty()) {
    Fail(ErrorCode::kInvalidArgument, "no training question has a correct span in A_q");
  }
  models.aggregation = TrainAggregation(aggregation, config.feature_mask, options);
  if (with_decision) {
    const std::vector<DecisionExample> decision =
        BuildDecisionExamples(train, batch.traces, *models.aggregation);
    if (decision.empty()) {
      Fail(ErrorCode::kInvalidArgument, "no training question has exactly one correct reader");
    }
    models.decision = TrainBinaryDecision(decision, options);
  }
  return models;
}

double RunOnIndex(const ExperimentSetup& setup, const PipelineConfig& config,
                  const std::vector<PassageId>& searchable) {
  const Providers providers = BuildProviders(config, setup.paths, setup.store, &searchable);
  FusionModels models;
  if (config.fusion == FusionMode::kAggregate ||
      config.fusion == FusionMode::kAggregateDecision) {
    models = FitFusionModels(config, providers, setup.store, setup.train,
                             config.fusion == FusionMode::kAggregateDecision,
                             setup.train_options);
  }
  const Pipeline pipeline(config, setup.store, providers, models);
  return pipeline.RunBatch(setup.eval).report.value;
}

PipelineConfig AblationConfig(const ExperimentSetup& setup, const AblationRow& row) {
  PipelineConfig config = setup.base;
  config.providers.reranker = row.reranker ? setup.reranker : "none";
  config.readers = row.readers;
  config.fusion = row.fusion;
  if (!row.reranker) config.feature_mask.active[static_cast<size_t>(Feature::kReranker)] = false;
  return config;
}

AblationTable RunAblation(const std::string& dataset_name, const ExperimentSetup& setup,
                          std::span<const AblationRow> rows) {
  return AblationRun(dataset_name, rows,
                     [&](const AblationRow& row, IndexVariant variant) -> std::optional<double> {
                       PipelineConfig config = AblationConfig(setup, row);
                       config.index_tag = variant == IndexVariant::kPruned ? "pruned" : "full";
                       return RunOnIndex(setup, config,
                                         variant == IndexVariant::kPruned ? setup.pruned_ids
                                                                          : setup.full_ids);
                     });
}

}  // namespace r2d2
