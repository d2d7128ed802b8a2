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

#ifndef R2D2_PIPELINE_H_
#define R2D2_PIPELINE_H_

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "r2d2/eval.h"
#include "r2d2/ext_reader.h"
#include "r2d2/fusion.h"
#include "r2d2/providers.h"
#include "r2d2/stage_cache.h"

namespace r2d2 {

// Provider kind per capability. Retriever: "lexical" or "dense-file";
// reranker: "lexical", "file" or "none"; reader: "lexical" or "file";
// generative: "lexical", "file" or "none".
struct ProviderBindings {
  std::string retriever = "lexical";
  std::string reranker = "lexical";
  std::string reader = "lexical";
  std::string generative = "lexical";

  friend bool operator==(const ProviderBindings&, const ProviderBindings&) = default;
};

inline constexpr size_t kDefaultReaderPassagesReranked = 24;
inline constexpr size_t kDefaultReaderPassagesRetrieved = 128;

struct PipelineConfig {
  size_t k = 200;
  // Passages read by the extractive reader. Unset: 24 with the reranker,
  // 128 without.
  std::optional<size_t> v;
  size_t v2 = 25;
  size_t m = 5;
  size_t max_span_len = kDefaultMaxSpanLen;
  Factorization factorization = Factorization::All();
  SpanScoreMode span_score = SpanScoreMode::kRawProduct;
  Readers readers = Readers::kExtractive;
  FusionMode fusion = FusionMode::kNone;
  FeatureMask feature_mask;
  ProviderBindings providers;
  unsigned threads = 1;
  // Distinguishes runs that share every setting but search different
  // indices (for example pruned and full); part of the fingerprint.
  std::string index_tag;

  bool reranking() const { return providers.reranker != "none"; }
  size_t reader_passages() const;
  // Throws kInvalidArgument on inconsistent settings.
  void Validate() const;

  Json ToJson() const;
  // Reads the [pipeline] and [providers] tables; missing keys keep defaults.
  static PipelineConfig FromJson(const Json& root);
  // Hex hash of ToJson().
  std::string Fingerprint() const;
};

struct PipelinePaths {
  std::filesystem::path passages;
  std::filesystem::path examples;
  std::filesystem::path index;
  std::filesystem::path pruned_set;
  std::filesystem::path query_embeddings;
  std::filesystem::path rerank_scores;
  std::filesystem::path encoder_dir;
  std::filesystem::path reader_heads;
  std::filesystem::path generative;
  std::filesystem::path aggregation_model;
  std::filesystem::path decision_model;
  std::filesystem::path stage_cache;

  // Relative paths resolve against `base`.
  static PipelinePaths FromJson(const Json& root, const std::filesystem::path& base);
};

struct EngineConfig {
  PipelineConfig pipeline;
  PipelinePaths paths;
  TrainOptions train;
  uint64_t seed = 0;
};

// Reads a TOML file with [pipeline], [providers], [paths] and [train] tables.
EngineConfig LoadEngineConfig(const std::filesystem::path& path);
EngineConfig EngineConfigFromJson(const Json& root, const std::filesystem::path& base);

struct Providers {
  std::shared_ptr<const ScoreProvider> retriever;
  std::shared_ptr<const ScoreProvider> reranker;
  std::shared_ptr<const ScoreProvider> reader;
  std::shared_ptr<const ScoreProvider> generative;
};

// Instantiates the providers named by `config.providers`. Retrieval is
// restricted to `searchable` when given, else to `paths.pruned_set` when set.
Providers BuildProviders(const PipelineConfig& config, const PipelinePaths& paths,
                         std::shared_ptr<const PassageStore> store,
                         const std::vector<PassageId>* searchable = nullptr);

struct FusionModels {
  std::optional<AggregationModel> aggregation;
  std::optional<DecisionModel> decision;
};

FusionModels LoadFusionModels(const PipelineConfig& config, const PipelinePaths& paths);

struct RankedPassage {
  PassageId passage_id = 0;
  double score = 0.0;

  friend bool operator==(const RankedPassage&, const RankedPassage&) = default;
};

struct AggregatedSpan {
  size_t span_index = 0;  // into Trace::spans
  std::string text;
  double score = 0.0;
};

// Ranked lists of every stage for one question.
struct Trace {
  std::vector<RankedPassage> retrieved;          // K, retriever scores
  std::vector<RankedPassage> reader_passages;    // V, rerank order
  std::vector<RankedPassage> generator_passages; // V2, rerank order
  std::vector<AnswerSpan> spans;                 // top M extractive spans
  std::vector<AnswerSpan> generative_reranked;   // spans by logp_g
  std::vector<FusionFeatures> features;          // aligned with spans
  std::vector<AggregatedSpan> aggregated;        // by aggregate score
  std::optional<Generation> generated;
  std::optional<double> s_agg;
  std::optional<bool> abstractive;
  std::string answer;
};

Json TraceToJson(const Trace& trace);

struct BatchResult {
  EvalReport report;
  std::vector<std::string> predictions;
  std::vector<std::optional<Trace>> traces;
};

class Pipeline {
 public:
  Pipeline(PipelineConfig config, std::shared_ptr<const PassageStore> store,
           Providers providers, FusionModels models = {});

  const PipelineConfig& config() const { return config_; }
  void set_cache(std::shared_ptr<StageCache> cache) { cache_ = std::move(cache); }

  // retrieve -> rerank -> extractive decode -> generative rerank ->
  // aggregation -> binary decision, as far as the configuration asks.
  // Failures carry the original code and a "[stage]" message prefix.
  Trace RunQuestion(const QAExample& question) const;

  // Every example, in order, on config().threads workers. An example that
  // fails is scored 0 and listed in report.errors. Throws kInvalidArgument
  // on an empty dataset.
  BatchResult RunBatch(std::span<const QAExample> dataset) const;

 private:
  std::string StageHash(const std::string& stage) const;

  PipelineConfig config_;
  std::shared_ptr<const PassageStore> store_;
  Providers providers_;
  FusionModels models_;
  std::shared_ptr<StageCache> cache_;
};

// Aggregation training pairs from traces run with both readers: the
// features of A_q and the index of the first span matching a gold answer.
// Questions without a matching span are skipped.
std::vector<AggregationExample> BuildAggregationExamples(
    std::span<const QAExample> dataset, std::span<const std::optional<Trace>> traces);

// Decision training rows for questions where exactly one of the best
// aggregated span and the generated answer is correct; target 1 when the
// generated answer is.
std::vector<DecisionExample> BuildDecisionExamples(
    std::span<const QAExample> dataset, std::span<const std::optional<Trace>> traces,
    const AggregationModel& model);

// Runs `config` with readers forced to both and fusion to naive over
// `train`, then fits the aggregation model on the resulting traces and, when
// `with_decision`, the binary decision on top of it. Throws
// kInvalidArgument when no training rows survive filtering.
FusionModels FitFusionModels(const PipelineConfig& config, const Providers& providers,
                             std::shared_ptr<const PassageStore> store,
                             std::span<const QAExample> train, bool with_decision,
                             const TrainOptions& options);

// Everything an ablation or sweep needs besides the grid itself.
struct ExperimentSetup {
  PipelineConfig base;
  PipelinePaths paths;
  std::shared_ptr<const PassageStore> store;
  std::vector<PassageId> pruned_ids;
  std::vector<PassageId> full_ids;
  std::vector<QAExample> train;
  std::vector<QAExample> eval;
  TrainOptions train_options;
  // Reranker binding used by rows with reranking on.
  std::string reranker = "lexical";
};

// EM of one configuration on one searchable set, fitting fusion models on
// setup.train when the fusion mode needs them.
double RunOnIndex(const ExperimentSetup& setup, const PipelineConfig& config,
                  const std::vector<PassageId>& searchable);

// Configuration of one ablation row: reranking on or off, readers and
// fusion from the row; the rr feature is dropped without a reranker.
PipelineConfig AblationConfig(const ExperimentSetup& setup, const AblationRow& row);

AblationTable RunAblation(const std::string& dataset_name, const ExperimentSetup& setup,
                          std::span<const AblationRow> rows);

}  // namespace r2d2

#endif  // R2D2_PIPELINE_H_
