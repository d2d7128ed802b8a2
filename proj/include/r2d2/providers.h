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

#ifndef R2D2_PROVIDERS_H_
#define R2D2_PROVIDERS_H_

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "r2d2/embedding_index.h"
#include "r2d2/ext_reader.h"
#include "r2d2/passage_store.h"
#include "r2d2/reranker.h"

namespace r2d2 {

struct Generation {
  std::string text;
  double logp = 0.0;
};

// Stands in for the neural models. Every method is const and must be
// deterministic; a provider that does not supply a capability throws kStage.
class ScoreProvider {
 public:
  virtual ~ScoreProvider() = default;

  virtual std::string kind() const = 0;

  // Top-k passages by the provider's ranking function.
  virtual std::vector<RetrievalResult> Retrieve(const QAExample& question,
                                                size_t k) const;
  // Cross-encoder logits for each id.
  virtual RerankScores Rerank(const QAExample& question,
                              std::span<const PassageId> ids) const;
  virtual EncoderOutput Encode(const QAExample& question, const Passage& passage) const;
  virtual const ReaderHeads& Heads() const;
  // Free-form answer from the first passages of `ids`.
  virtual Generation Generate(const QAExample& question,
                              std::span<const PassageId> ids) const;
  // Log-probability of generating `span` given the same passages.
  virtual double SpanLogProb(const QAExample& question, std::span<const PassageId> ids,
                             const std::string& span) const;

 protected:
  [[noreturn]] void Gap(const std::string& capability) const;
};

// Set-of-token idf overlap: sum over distinct question tokens of
// idf(token) * [token occurs in title or context], idf = ln(1 + N / df).
class LexicalScorer {
 public:
  explicit LexicalScorer(std::shared_ptr<const PassageStore> store);

  double Score(std::string_view question, PassageId id) const;
  double Idf(const std::string& token) const;
  // Sum of idf over the distinct question tokens known to the store.
  double MaxScore(std::string_view question) const;

  const PassageStore& store() const { return *store_; }

 private:
  std::shared_ptr<const PassageStore> store_;
  std::unordered_map<PassageId, std::unordered_set<std::string>> tokens_;
  std::unordered_map<std::string, double> idf_;
};

// Distinct alphanumeric question tokens.
std::unordered_set<std::string> QuestionTokens(std::string_view question);

// Neural-free provider for every capability. Retrieval ranks the searchable
// ids by lexical score (ties by id). The reader encodes each context token
// with [question-run, answer-end, lexical-relevance] features so that the
// token right after the longest run of question tokens is the best start.
class LexicalProvider : public ScoreProvider {
 public:
  // `searchable` defaults to every passage of the store.
  explicit LexicalProvider(std::shared_ptr<const LexicalScorer> scorer,
                           std::vector<PassageId> searchable = {});

  std::string kind() const override { return "lexical"; }
  std::vector<RetrievalResult> Retrieve(const QAExample& question, size_t k) const override;
  RerankScores Rerank(const QAExample& question,
                      std::span<const PassageId> ids) const override;
  EncoderOutput Encode(const QAExample& question, const Passage& passage) const override;
  const ReaderHeads& Heads() const override { return heads_; }
  Generation Generate(const QAExample& question,
                      std::span<const PassageId> ids) const override;
  double SpanLogProb(const QAExample& question, std::span<const PassageId> ids,
                     const std::string& span) const override;

  static constexpr size_t kHiddenDim = 3;

 private:
  std::shared_ptr<const LexicalScorer> scorer_;
  std::vector<PassageId> searchable_;
  ReaderHeads heads_;
};

// Dense retrieval over an fp16 index with query vectors from a JSON-lines
// file of {"question_key": str, "embedding": [float, ...]}.
class DenseFileRetriever : public ScoreProvider {
 public:
  DenseFileRetriever(std::shared_ptr<const EmbeddingMatrix> index,
                     const std::filesystem::path& query_file, unsigned threads = 1);

  std::string kind() const override { return "dense-file"; }
  std::vector<RetrievalResult> Retrieve(const QAExample& question, size_t k) const override;

 private:
  std::shared_ptr<const EmbeddingMatrix> index_;
  std::unordered_map<std::string, std::vector<float>> queries_;
  unsigned threads_;
};

std::unordered_map<std::string, std::vector<float>> LoadQueryEmbeddings(
    const std::filesystem::path& path);

// Rerank logits from a score file (see LoadRerankScores).
class FileRerankProvider : public ScoreProvider {
 public:
  explicit FileRerankProvider(const std::filesystem::path& path);

  std::string kind() const override { return "file"; }
  RerankScores Rerank(const QAExample& question,
                      std::span<const PassageId> ids) const override;

 private:
  std::unordered_map<std::string, RerankScores> scores_;
};

// Encoder outputs stored as <dir>/<question dir>/<passage id>.enc, where the
// question directory is EncoderDirName(question_key).
class FileReaderProvider : public ScoreProvider {
 public:
  FileReaderProvider(std::filesystem::path dir, const std::filesystem::path& heads_path);

  std::string kind() const override { return "file"; }
  EncoderOutput Encode(const QAExample& question, const Passage& passage) const override;
  const ReaderHeads& Heads() const override { return heads_; }

 private:
  std::filesystem::path dir_;
  ReaderHeads heads_;
};

// 16 lowercase hex digits of StableHash(question_key).
std::string EncoderDirName(const std::string& question_key);

// JSON-lines of {"question_key", "answer", "logp", "span_logp": {text: logp},
// optional "span_logp_default"}. Spans absent from "span_logp" take the
// default when one is given and raise kMissingScore otherwise.
class FileGenerativeProvider : public ScoreProvider {
 public:
  explicit FileGenerativeProvider(const std::filesystem::path& path);

  std::string kind() const override { return "file"; }
  Generation Generate(const QAExample& question,
                      std::span<const PassageId> ids) const override;
  double SpanLogProb(const QAExample& question, std::span<const PassageId> ids,
                     const std::string& span) const override;

  struct Record {
    Generation generation;
    std::unordered_map<std::string, double> span_logp;
    std::optional<double> span_logp_default;
  };

 private:
  const Record& Find(const QAExample& question) const;

  std::unordered_map<std::string, Record> records_;
};

void SaveGenerativeRecords(
    const std::filesystem::path& path,
    const std::vector<std::pair<std::string, FileGenerativeProvider::Record>>& rows);

}  // namespace r2d2

#endif  // R2D2_PROVIDERS_H_
