// Copyright 2026 The gcdl Authors.
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

// Automatic response-generation metrics: BLEU-n, Dist-n, embedding-based
// Average / Extrema / Greedy, Coherence and Ent-n.

#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "gcdl/matcher.hpp"
#include "gcdl/models.hpp"

namespace gcdl {

using Sentence = std::vector<std::string>;

/// Smoothed sentence BLEU: cumulative geometric mean of 1..n-gram precisions
/// (unigram unsmoothed, higher orders add-one) times the brevity penalty.
double sentence_bleu(const Sentence& hypothesis, const Sentence& reference, std::size_t n);

/// Corpus mean of sentence_bleu. Throws DomainError on a length mismatch.
double bleu_n(std::span<const Sentence> hypotheses, std::span<const Sentence> references,
              std::size_t n);

/// Unique n-grams over total n-grams across all hypotheses (0 when there are none).
double distinct_n(std::span<const Sentence> hypotheses, std::size_t n);

double average_score(const Sentence& hypothesis, const Sentence& reference,
                     const EmbeddingTable& table);
double extrema_score(const Sentence& hypothesis, const Sentence& reference,
                     const EmbeddingTable& table);
double greedy_score(const Sentence& hypothesis, const Sentence& reference,
                    const EmbeddingTable& table);

struct EmbeddingScores {
  double average = 0.0;
  double extrema = 0.0;
  double greedy = 0.0;
};

/// Corpus means of the three embedding metrics. Throws DomainError on an
/// empty utterance.
EmbeddingScores embedding_metrics(std::span<const Sentence> hypotheses,
                                  std::span<const Sentence> references,
                                  const EmbeddingTable& table);

/// Mean cosine between each flattened context and its hypothesis.
double coherence(std::span<const Sentence> contexts, std::span<const Sentence> hypotheses,
                 const EmbeddingTable& table);

/// Add-one smoothed n-gram distribution fitted on training utterances:
/// p(g) = (count(g) + 1) / (total + types).
class NgramDistribution {
 public:
  static NgramDistribution fit(std::span<const Sentence> corpus, std::size_t n);

  std::size_t order() const { return n_; }
  std::size_t total() const { return total_; }
  std::size_t types() const { return counts_.size(); }
  double log_prob(const std::string& ngram_key) const;
  double floor_log_prob() const;

  /// Most frequent n-gram (ties by key order).
  std::string most_frequent() const;

 private:
  std::size_t n_ = 1;
  std::size_t total_ = 0;
  std::map<std::string, std::size_t> counts_;
};

/// n-grams of a sentence joined by a single space.
std::vector<std::string> ngrams(const Sentence& sentence, std::size_t n);

/// Mean over hypotheses with at least one n-gram of the per-hypothesis mean
/// negative log-probability. Throws DomainError when no hypothesis has one.
double entropy_n(std::span<const Sentence> hypotheses, const NgramDistribution& distribution);

struct GenerationRecord {
  std::string context;
  std::string reference;
  std::string hypothesis;
};

struct EvalReport {
  std::array<double, 4> bleu{};
  std::array<double, 3> dist{};
  double average = 0.0;
  double extrema = 0.0;
  double greedy = 0.0;
  double coherence = 0.0;
  std::array<double, 2> ent{};
  std::vector<GenerationRecord> manifest;

  /// Empty when every field lies in its documented range, otherwise the
  /// first offending field.
  std::string range_violation() const;
};

struct EvalResources {
  const EmbeddingTable* table = nullptr;
  const NgramDistribution* unigrams = nullptr;
  const NgramDistribution* bigrams = nullptr;
};

/// Produces a response (without EOS) for one test pair.
using ResponseGenerator = std::function<TokenSeq(const TokenizedPair& pair)>;

/// Scores generated responses. Empty hypotheses count as zero for BLEU and
/// the embedding metrics and contribute no n-grams.
EvalReport evaluate_generator(const ResponseGenerator& generator,
                              std::span<const TokenizedPair> test, const Vocab& vocab,
                              const EvalResources& resources, std::size_t workers = 1);

EvalReport evaluate_model(const DialogueModel& model, std::span<const TokenizedPair> test,
                          const Vocab& vocab, const DecodeConfig& decode,
                          const EvalResources& resources, std::size_t workers = 1);

/// Writes report.txt (key = value, percentages), report.json and manifest.jsonl.
void write_report(const std::filesystem::path& dir, const EvalReport& report,
                  const std::string& label);

std::string report_json(const EvalReport& report);

}  // namespace gcdl
