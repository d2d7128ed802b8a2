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

// Command-line front end for the engine.

#include <algorithm>
#include <cstring>
#include <sstream>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "r2d2/corpus.h"
#include "r2d2/embedding_index.h"
#include "r2d2/errors.h"
#include "r2d2/eval.h"
#include "r2d2/fusion.h"
#include "r2d2/jsonl.h"
#include "r2d2/pipeline.h"
#include "r2d2/pruner.h"
#include "r2d2/reranker.h"
#include "r2d2/span_annotator.h"

namespace fs = std::filesystem;
using namespace r2d2;

namespace {

struct Globals {
  std::string config;
  std::optional<uint64_t> seed;
  std::optional<unsigned> threads;
};

EngineConfig LoadConfig(const Globals& g) {
  EngineConfig cfg;
  if (!g.config.empty()) cfg = LoadEngineConfig(g.config);
  if (g.seed) {
    cfg.seed = *g.seed;
    cfg.train.seed = *g.seed;
  }
  if (g.threads) cfg.pipeline.threads = std::max(1u, *g.threads);
  return cfg;
}

std::shared_ptr<const PassageStore> LoadStore(const EngineConfig& cfg) {
  if (cfg.paths.passages.empty()) Fail(ErrorCode::kInvalidArgument, "no passages path configured");
  return std::make_shared<PassageStore>(LoadPassages(cfg.paths.passages));
}

std::vector<QAExample> LoadDataset(const EngineConfig& cfg, const std::string& override_path,
                                   const PassageStore* store) {
  const fs::path path = override_path.empty() ? cfg.paths.examples : fs::path(override_path);
  if (path.empty()) Fail(ErrorCode::kInvalidArgument, "no examples path given");
  std::vector<QAExample> examples = LoadExamples(path);
  if (store != nullptr) ValidateExamples(examples, *store);
  return examples;
}

Json RankedJson(const std::vector<RetrievalResult>& results) {
  Json out = Json::array();
  for (const auto& r : results) out.push_back({{"id", r.passage_id}, {"score", r.score}});
  return out;
}

std::vector<std::vector<PassageId>> LoadRetrieved(const fs::path& path,
                                                  const std::vector<QAExample>& examples) {
  std::unordered_map<std::string, std::vector<PassageId>> by_key;
  ForEachJsonLine(path, [&](const Json& rec, size_t line) {
    try {
      std::vector<PassageId> ids;
      for (const Json& r : rec.at("results")) ids.push_back(r.at("id").get<PassageId>());
      by_key[rec.at("question_key").get<std::string>()] = std::move(ids);
    } catch (const Json::exception& e) {
      Fail(ErrorCode::kParse, path.string() + ":" + std::to_string(line) + ": " + e.what());
    }
  });
  std::vector<std::vector<PassageId>> out;
  for (const QAExample& ex : examples) {
    auto it = by_key.find(QuestionKey(ex));
    if (it == by_key.end()) {
      Fail(ErrorCode::kLookup, "no retrieval results for '" + QuestionKey(ex) + "'");
    }
    out.push_back(it->second);
  }
  return out;
}

void WriteLines(const fs::path& path, const std::vector<Json>& lines) {
  if (path.empty()) {
    for (const Json& l : lines) std::cout << l.dump() << '\n';
  } else {
    WriteJsonLines(path, lines);
  }
}

std::vector<size_t> ParseSizes(const std::string& text) {
  std::vector<size_t> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      out.push_back(std::stoull(item));
    } catch (const std::exception&) {
      Fail(ErrorCode::kInvalidArgument, "bad size '" + item + "'");
    }
  }
  return out;
}

std::vector<PassageId> GoldenIds(const std::vector<QAExample>& examples) {
  std::vector<PassageId> out;
  for (const QAExample& ex : examples) {
    if (ex.golden_passage_id) out.push_back(*ex.golden_passage_id);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<PassageId> AllIds(const PassageStore& store) {
  std::vector<PassageId> out;
  for (const Passage& p : store.passages()) out.push_back(p.id);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"r2d2: retriever, reranker, extractive and generative reader fusion engine"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "TOML config file");
  app.add_option("--seed", g.seed, "Seed for sampling and training");
  app.add_option("--threads", g.threads, "Worker threads");

  // prune
  auto* prune = app.add_subcommand("prune", "Select passages by apriori relevance");
  std::string scores_path, prune_out, prune_examples;
  std::optional<double> tau;
  std::optional<size_t> top_n;
  prune->add_option("--scores", scores_path, "Relevance JSON-lines")->required();
  auto* tau_opt = prune->add_option("--tau", tau, "Keep scores strictly above tau");
  prune->add_option("--top-n", top_n, "Keep the n best passages")->excludes(tau_opt);
  prune->add_option("--examples", prune_examples, "Inject these examples' golden passages");
  prune->add_option("--out", prune_out, "Pruned-set file")->required();

  // index
  auto* index = app.add_subcommand("index", "Build or search an fp16 index");
  index->require_subcommand(1);
  auto* build = index->add_subcommand("build", "Encode embeddings into R2D2EMB1");
  std::string emb_in, index_out;
  build->add_option("--embeddings", emb_in, "JSON-lines {id, embedding}")->required();
  build->add_option("--out", index_out, "Index file")->required();
  auto* search = index->add_subcommand("search", "Exact top-k inner product search");
  std::string index_in, query_json, queries_in, query_bin, search_out;
  size_t search_k = 10;
  search->add_option("--index", index_in, "Index file")->required();
  auto* q_opt = search->add_option("--query", query_json, "Query vector as a JSON array");
  auto* qs_opt = search->add_option("--queries", queries_in, "JSON-lines {question_key, embedding}")
      ->excludes(q_opt);
  search->add_option("--query-bin", query_bin, "Raw little-endian fp32 query rows")
      ->excludes(q_opt)
      ->excludes(qs_opt);
  search->add_option("--k", search_k, "Results per query");
  search->add_option("--out", search_out, "Output JSON-lines (default stdout)");

  // Pipeline stage commands.
  std::string examples_path, out_path;
  auto* retrieve = app.add_subcommand("retrieve", "Top-K passages per question");
  auto* rerank = app.add_subcommand("rerank", "Retrieve then rerank");
  auto* decode = app.add_subcommand("decode", "Top-M extractive spans per question");
  for (auto* cmd : {retrieve, rerank, decode}) {
    cmd->add_option("--examples", examples_path, "Examples JSON-lines");
    cmd->add_option("--out", out_path, "Output JSON-lines (default stdout)");
  }

  auto* annotate = app.add_subcommand("annotate", "Distant-supervision span targets");
  std::string retrieved_path;
  size_t annotate_top = 24;
  annotate->add_option("--examples", examples_path, "Examples JSON-lines");
  annotate->add_option("--retrieved", retrieved_path, "Retrieval JSON-lines (from retrieve)");
  annotate->add_option("--top", annotate_top, "Passages per example");
  annotate->add_option("--out", out_path, "Annotation JSON-lines")->required();

  auto* fuse = app.add_subcommand("fuse", "Train or apply the fusion models");
  fuse->require_subcommand(1);
  auto* train_aggr = fuse->add_subcommand("train-aggr", "Fit the score aggregation");
  auto* train_bd = fuse->add_subcommand("train-bd", "Fit the binary decision");
  auto* apply = fuse->add_subcommand("apply", "Answer with the configured fusion");
  std::string aggregation_path;
  for (auto* cmd : {train_aggr, train_bd, apply}) {
    cmd->add_option("--examples", examples_path, "Examples JSON-lines");
    cmd->add_option("--out", out_path, "Output file")->required();
  }
  train_bd->add_option("--aggregation", aggregation_path, "Aggregation model")->required();

  auto* eval = app.add_subcommand("eval", "Metrics");
  eval->require_subcommand(1);
  auto* eval_em = eval->add_subcommand("em", "Exact match of predictions");
  auto* eval_acc = eval->add_subcommand("acc", "Accuracy@K of retrieval results");
  std::string predictions_path, report_path;
  size_t acc_k = 20;
  eval_em->add_option("--predictions", predictions_path, "JSON-lines {question_key, answer}")
      ->required();
  eval_acc->add_option("--retrieved", retrieved_path, "Retrieval JSON-lines")->required();
  eval_acc->add_option("--k", acc_k, "K");
  for (auto* cmd : {eval_em, eval_acc}) {
    cmd->add_option("--examples", examples_path, "Examples JSON-lines");
    cmd->add_option("--out", report_path, "Report JSON");
  }

  auto* ablate = app.add_subcommand("ablate", "Ablation grid on pruned and full indices");
  std::string train_path, dataset_name = "dataset";
  ablate->add_option("--examples", examples_path, "Evaluation examples");
  ablate->add_option("--train", train_path, "Fusion training examples (default: evaluation set)");
  ablate->add_option("--name", dataset_name, "Dataset label");

  auto* sweep = app.add_subcommand("sweep", "EM against index size");
  std::string sizes_text;
  sweep->add_option("--scores", scores_path, "Relevance JSON-lines")->required();
  sweep->add_option("--sizes", sizes_text, "Comma separated ascending sizes")->required();
  sweep->add_option("--examples", examples_path, "Evaluation examples");
  sweep->add_option("--train", train_path, "Fusion training examples");

  auto* e2e = app.add_subcommand("e2e", "Full pipeline with report");
  std::string out_dir;
  e2e->add_option("--examples", examples_path, "Examples JSON-lines");
  e2e->add_option("--out-dir", out_dir, "Directory for report, predictions and traces");

  CLI11_PARSE(app, argc, argv);

  try {
    const EngineConfig cfg = LoadConfig(g);

    if (prune->parsed()) {
      const RelevanceScores scores = LoadRelevanceScores(scores_path);
      if (!tau && !top_n) Fail(ErrorCode::kInvalidArgument, "give --tau or --top-n");
      PrunedSet set = tau ? SelectByThreshold(scores, *tau) : PoolTopN(scores, *top_n);
      if (!prune_examples.empty()) {
        const std::vector<PassageId> golden = GoldenIds(LoadExamples(prune_examples));
        set = InjectGolden(set, golden);
      }
      SavePrunedSet(prune_out, set);
      std::cout << "kept " << set.ids.size() << " passages (tau " << set.tau << ", "
                << set.golden_added << " golden added)\n";
      return 0;
    }

    if (build->parsed()) {
      std::vector<PassageId> ids;
      std::vector<float> values;
      std::optional<size_t> dim;
      ForEachJsonLine(emb_in, [&](const Json& rec, size_t line) {
        const auto v = rec.at("embedding").get<std::vector<float>>();
        if (dim && v.size() != *dim) {
          Fail(ErrorCode::kDimensionMismatch, "line " + std::to_string(line) + ": dimension " +
                                                  std::to_string(v.size()));
        }
        dim = v.size();
        ids.push_back(rec.at("id").get<PassageId>());
        values.insert(values.end(), v.begin(), v.end());
      });
      if (!dim) Fail(ErrorCode::kInvalidArgument, "no embeddings");
      const EmbeddingMatrix m =
          EmbeddingMatrix::FromFloats(static_cast<uint32_t>(*dim), std::move(ids), values);
      WriteIndex(m, index_out);
      std::cout << "wrote " << m.rows() << " x " << m.dim() << " index\n";
      return 0;
    }

    if (search->parsed()) {
      const EmbeddingMatrix m = ReadIndex(index_in);
      const unsigned threads = cfg.pipeline.threads;
      std::vector<Json> lines;
      if (!queries_in.empty()) {
        std::vector<std::pair<std::string, std::vector<float>>> rows;
        for (auto& kv : LoadQueryEmbeddings(queries_in)) rows.push_back(std::move(kv));
        std::sort(rows.begin(), rows.end());
        for (const auto& [key, q] : rows) {
          lines.push_back({{"question_key", key},
                           {"results", RankedJson(Search(m, q, search_k, threads))}});
        }
      } else if (!query_bin.empty()) {
        const std::string bytes = ReadFileBytes(query_bin);
        const size_t row_bytes = sizeof(float) * m.dim();
        if (bytes.size() % row_bytes != 0) {
          Fail(ErrorCode::kDimensionMismatch, "query file is not a whole number of rows");
        }
        for (size_t r = 0; r * row_bytes < bytes.size(); ++r) {
          std::vector<float> q(m.dim());
          std::memcpy(q.data(), bytes.data() + r * row_bytes, row_bytes);
          lines.push_back({{"row", r}, {"results", RankedJson(Search(m, q, search_k, threads))}});
        }
      } else {
        if (query_json.empty()) Fail(ErrorCode::kInvalidArgument, "give a query");
        const auto q = Json::parse(query_json).get<std::vector<float>>();
        lines.push_back({{"results", RankedJson(Search(m, q, search_k, threads))}});
      }
      WriteLines(search_out, lines);
      return 0;
    }

    if (eval_em->parsed()) {
      const std::vector<QAExample> examples = LoadDataset(cfg, examples_path, nullptr);
      std::unordered_map<std::string, std::string> by_key;
      ForEachJsonLine(predictions_path, [&](const Json& rec, size_t) {
        by_key[rec.at("question_key").get<std::string>()] = rec.at("answer").get<std::string>();
      });
      std::vector<std::string> predictions;
      for (const QAExample& ex : examples) {
        auto it = by_key.find(QuestionKey(ex));
        predictions.push_back(it == by_key.end() ? std::string() : it->second);
      }
      const EvalReport report = EmScore(predictions, examples);
      if (!report_path.empty()) SaveReport(report, report_path);
      std::cout << "em " << report.value << " over " << examples.size() << " examples\n";
      return 0;
    }

    const auto store = LoadStore(cfg);

    if (eval_acc->parsed()) {
      const std::vector<QAExample> examples = LoadDataset(cfg, examples_path, store.get());
      const auto retrieved = LoadRetrieved(retrieved_path, examples);
      const EvalReport report = AccuracyAtK(retrieved, examples, *store, acc_k);
      if (!report_path.empty()) SaveReport(report, report_path);
      std::cout << report.metric << " " << report.value << '\n';
      return 0;
    }

    if (annotate->parsed()) {
      const std::vector<QAExample> examples = LoadDataset(cfg, examples_path, store.get());
      std::vector<std::vector<PassageId>> lists;
      if (!retrieved_path.empty()) {
        lists = LoadRetrieved(retrieved_path, examples);
      } else {
        for (const QAExample& ex : examples) {
          lists.push_back(ex.golden_passage_id ? std::vector<PassageId>{*ex.golden_passage_id}
                                               : std::vector<PassageId>{});
        }
      }
      std::vector<AnnotationRecord> records;
      size_t skipped = 0;
      for (size_t i = 0; i < examples.size(); ++i) {
        std::vector<PassageId> ids = lists[i];
        if (ids.size() > annotate_top) ids.resize(annotate_top);
        try {
          records.push_back(
              {QuestionKey(examples[i]), ids, AnnotateExample(examples[i], ids, *store)});
        } catch (const Error& e) {
          if (e.code() != ErrorCode::kShouldHaveBeenFiltered) throw;
          ++skipped;
        }
      }
      SaveAnnotations(out_path, records);
      std::cout << "annotated " << records.size() << " examples, skipped " << skipped << '\n';
      return 0;
    }

    const std::vector<QAExample> examples = LoadDataset(cfg, examples_path, store.get());

    if (retrieve->parsed() || rerank->parsed()) {
      const Providers providers = BuildProviders(cfg.pipeline, cfg.paths, store);
      if (rerank->parsed() && !providers.reranker) {
        Fail(ErrorCode::kInvalidArgument, "no reranker configured");
      }
      std::vector<Json> lines;
      for (const QAExample& ex : examples) {
        const std::vector<RetrievalResult> results =
            providers.retriever->Retrieve(ex, cfg.pipeline.k);
        if (retrieve->parsed()) {
          lines.push_back({{"question_key", QuestionKey(ex)}, {"results", RankedJson(results)}});
          continue;
        }
        CandidateList candidates{QuestionKey(ex), {}};
        for (const auto& r : results) candidates.entries.push_back({r.passage_id, r.score});
        const RerankScores scores = providers.reranker->Rerank(ex, candidates.ids());
        Json ranked = Json::array();
        for (const Candidate& c : ApplyRerank(candidates, scores, candidates.entries.size()).entries) {
          ranked.push_back({{"id", c.passage_id}, {"score", scores.at(c.passage_id)}});
        }
        lines.push_back({{"question_key", QuestionKey(ex)},
                         {"results", ranked},
                         {"scores", Json(std::map<std::string, double>())}});
        for (const auto& [id, s] : scores) lines.back()["scores"][std::to_string(id)] = s;
      }
      WriteLines(out_path, lines);
      return 0;
    }

    if (decode->parsed()) {
      PipelineConfig config = cfg.pipeline;
      config.readers = Readers::kExtractive;
      config.fusion = FusionMode::kNone;
      const Pipeline pipeline(config, store, BuildProviders(config, cfg.paths, store));
      const BatchResult batch = pipeline.RunBatch(examples);
      std::vector<Json> lines;
      for (size_t i = 0; i < examples.size(); ++i) {
        Json rec = {{"question_key", QuestionKey(examples[i])}};
        if (batch.traces[i]) rec["spans"] = TraceToJson(*batch.traces[i]).at("spans");
        lines.push_back(rec);
      }
      WriteLines(out_path, lines);
      for (const std::string& e : batch.report.errors) std::cerr << "error " << e << '\n';
      return batch.report.errors.empty() ? 0 : 1;
    }

    if (train_aggr->parsed() || train_bd->parsed()) {
      const Providers providers = BuildProviders(cfg.pipeline, cfg.paths, store);
      PipelineConfig naive = cfg.pipeline;
      naive.readers = Readers::kBoth;
      naive.fusion = FusionMode::kNaive;
      const BatchResult batch = Pipeline(naive, store, providers).RunBatch(examples);
      if (train_aggr->parsed()) {
        const auto rows = BuildAggregationExamples(examples, batch.traces);
        if (rows.empty()) Fail(ErrorCode::kInvalidArgument, "no question has a correct span");
        const AggregationModel model = TrainAggregation(rows, cfg.pipeline.feature_mask, cfg.train);
        SaveAggregationModel(model, out_path);
        std::cout << "aggregation on " << rows.size() << " questions, loss " << model.final_loss
                  << '\n';
      } else {
        const AggregationModel aggr = LoadAggregationModel(aggregation_path);
        const auto rows = BuildDecisionExamples(examples, batch.traces, aggr);
        const DecisionModel model = TrainBinaryDecision(rows, cfg.train);
        SaveDecisionModel(model, out_path);
        std::cout << "decision on " << rows.size() << " questions, loss " << model.final_loss
                  << '\n';
      }
      return 0;
    }

    if (apply->parsed() || e2e->parsed()) {
      const Providers providers = BuildProviders(cfg.pipeline, cfg.paths, store);
      Pipeline pipeline(cfg.pipeline, store, providers, LoadFusionModels(cfg.pipeline, cfg.paths));
      if (!cfg.paths.stage_cache.empty()) {
        pipeline.set_cache(std::make_shared<StageCache>(cfg.paths.stage_cache));
      }
      const BatchResult batch = pipeline.RunBatch(examples);
      std::vector<Json> predictions;
      for (size_t i = 0; i < examples.size(); ++i) {
        predictions.push_back(
            {{"question_key", QuestionKey(examples[i])}, {"answer", batch.predictions[i]}});
      }
      if (apply->parsed()) {
        WriteJsonLines(out_path, predictions);
      } else if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        SaveReport(batch.report, fs::path(out_dir) / "report.json");
        WriteJsonLines(fs::path(out_dir) / "predictions.jsonl", predictions);
        std::vector<Json> traces;
        for (size_t i = 0; i < examples.size(); ++i) {
          Json rec = {{"question_key", QuestionKey(examples[i])}};
          if (batch.traces[i]) rec["trace"] = TraceToJson(*batch.traces[i]);
          traces.push_back(rec);
        }
        WriteJsonLines(fs::path(out_dir) / "traces.jsonl", traces);
      }
      for (const std::string& e : batch.report.errors) std::cerr << "error " << e << '\n';
      std::cout << "em " << batch.report.value << " over " << examples.size()
                << " examples (config " << batch.report.config_fingerprint << ")\n";
      return batch.report.errors.empty() ? 0 : 1;
    }

    ExperimentSetup setup;
    setup.base = cfg.pipeline;
    setup.paths = cfg.paths;
    setup.store = store;
    setup.eval = examples;
    setup.train = train_path.empty() ? examples : LoadDataset(cfg, train_path, store.get());
    setup.train_options = cfg.train;
    setup.full_ids = AllIds(*store);
    if (cfg.pipeline.reranking()) setup.reranker = cfg.pipeline.providers.reranker;

    if (ablate->parsed()) {
      if (cfg.paths.pruned_set.empty()) Fail(ErrorCode::kInvalidArgument, "no pruned_set path");
      setup.pruned_ids = LoadPrunedSet(cfg.paths.pruned_set).ids;
      const std::vector<AblationRow> rows = StandardAblationGrid();
      const AblationTable table = RunAblation(dataset_name, setup, rows);
      std::cout << table.Render();
      for (const std::string& f : table.failures) std::cerr << "absent cell " << f << '\n';
      return 0;
    }

    if (sweep->parsed()) {
      const RelevanceScores scores = LoadRelevanceScores(scores_path);
      const std::vector<size_t> sizes = ParseSizes(sizes_text);
      // Every question would fail retrieval and score 0.
      if (!sizes.empty() && *std::min_element(sizes.begin(), sizes.end()) < cfg.pipeline.k) {
        Fail(ErrorCode::kInvalidArgument,
             "index sizes must be at least k = " + std::to_string(cfg.pipeline.k));
      }
      const std::vector<PassageId> golden = GoldenIds(examples);
      const auto curve = IndexSizeSweep(sizes, scores, golden, [&](const PrunedSet& set) {
        PipelineConfig config = cfg.pipeline;
        config.index_tag = "size-" + std::to_string(set.ids.size());
        return RunOnIndex(setup, config, set.ids);
      });
      for (const SweepPoint& p : curve) std::cout << p.size << '\t' << p.em << '\n';
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error [" << ErrorCodeName(e.code()) << "]: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
