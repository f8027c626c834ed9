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

#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "gcdl/corpus.hpp"

namespace gcdl {

/// Static word vectors keyed by surface token. Lookups of unknown tokens
/// return the backoff vector (mean of all stored vectors).
class EmbeddingTable {
 public:
  explicit EmbeddingTable(std::size_t dim);

  /// word2vec text format: "count dim" header, then "token v1 ... vd".
  static EmbeddingTable load_word2vec(const std::filesystem::path& path);
  void save_word2vec(const std::filesystem::path& path) const;

  /// Seed-fixed N(0, 1/dim) vectors for the given tokens.
  static EmbeddingTable random(std::span<const std::string> tokens, std::size_t dim,
                               std::uint64_t seed);

  void set(const std::string& token, Eigen::VectorXd vec);
  const Eigen::VectorXd& lookup(std::string_view token) const;
  bool contains(std::string_view token) const;
  std::size_t dim() const { return dim_; }
  std::size_t size() const { return order_.size(); }
  const Eigen::VectorXd& backoff() const { return backoff_; }

 private:
  std::size_t dim_;
  std::unordered_map<std::string, Eigen::VectorXd> vectors_;
  std::vector<std::string> order_;
  Eigen::VectorXd sum_;
  Eigen::VectorXd backoff_;
};

/// Mean of token vectors. Throws DomainError on an empty sequence.
Eigen::VectorXd embed_utterance(std::span<const std::string> tokens,
                                const EmbeddingTable& table);

/// Cosine similarity clamped to [-1, 1]; 0 when either vector is zero.
double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

/// Vocab-aligned copy of an EmbeddingTable for id-based lookups.
class VocabEmbeddings {
 public:
  VocabEmbeddings(const EmbeddingTable& table, const Vocab& vocab);

  /// Mean embedding of the non-structural tokens of `ids` (PAD, BOS and EOS
  /// are skipped; UNK uses the backoff vector).
  Eigen::VectorXd embed(std::span<const TokenId> ids) const;
  std::size_t dim() const { return static_cast<std::size_t>(rows_.cols()); }
  std::size_t vocab_size() const { return static_cast<std::size_t>(rows_.rows()); }

 private:
  Eigen::MatrixXd rows_;
};

/// Context-response matching model producing raw scores in [-1, 1].
class Matcher {
 public:
  virtual ~Matcher() = default;
  virtual double score(std::span<const TokenId> context,
                       std::span<const TokenId> response) const = 0;
  virtual std::string name() const = 0;
};

/// Cosine of mean embeddings of the flattened context and the response.
class CosineMatcher final : public Matcher {
 public:
  explicit CosineMatcher(std::shared_ptr<const VocabEmbeddings> embeddings);
  double score(std::span<const TokenId> context,
               std::span<const TokenId> response) const override;
  std::string name() const override { return "cosine"; }

 private:
  std::shared_ptr<const VocabEmbeddings> embeddings_;
};

struct BiEncoderConfig {
  std::size_t epochs = 5;
  std::size_t batch_size = 32;
  double lr = 1e-3;
  double temperature = 0.1;
  std::uint64_t seed = 0;
};

/// score(c, r) = cos(Wc * mean(c), Wr * mean(r)); the two projections make
/// the score asymmetric in its arguments once trained.
class BiEncoderMatcher final : public Matcher {
 public:
  /// Identity projections; scores equal CosineMatcher.
  explicit BiEncoderMatcher(std::shared_ptr<const VocabEmbeddings> embeddings);

  double score(std::span<const TokenId> context,
               std::span<const TokenId> response) const override;
  std::string name() const override { return "biencoder"; }

  /// In-batch contrastive training: each ground-truth pair must outscore
  /// the batch's other responses for its context.
  void train(std::span<const TokenizedPair> pairs, const BiEncoderConfig& config);

  void save(const std::filesystem::path& path) const;
  void load(const std::filesystem::path& path);

  const Eigen::MatrixXd& context_projection() const { return context_proj_; }
  const Eigen::MatrixXd& response_projection() const { return response_proj_; }

 private:
  std::shared_ptr<const VocabEmbeddings> embeddings_;
  Eigen::MatrixXd context_proj_;
  Eigen::MatrixXd response_proj_;
};

enum class SampleRole { Positive, Negative };

/// Raw matcher output together with its role-specific loss weight.
struct MatchScore {
  double raw = 0.0;
  SampleRole role = SampleRole::Positive;
  double weighted = 0.0;
};

inline constexpr double kPositiveWeightFloor = 0.05;

/// s+ = max(raw, 0.05). Throws DomainError when raw is outside [-1, 1].
double to_positive_weight(double raw);
/// s- = min(raw, 0). Throws DomainError when raw is outside [-1, 1].
double to_negative_weight(double raw);
MatchScore make_match_score(double raw, SampleRole role);

}  // namespace gcdl
