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

// Encoder-decoder dialogue models with exact teacher-forced likelihoods.

#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gcdl/autograd.hpp"
#include "gcdl/corpus.hpp"

namespace gcdl {

enum class Architecture { Seq2SeqAttention, Transformer };

std::string_view to_string(Architecture arch);
Architecture architecture_from_string(std::string_view name);

struct ModelConfig {
  Architecture arch = Architecture::Seq2SeqAttention;
  std::size_t vocab_size = 0;
  std::size_t embed_dim = 32;  // seq2seq only; the transformer uses hidden
  std::size_t hidden = 64;
  std::size_t layers = 1;
  std::size_t heads = 4;
  std::size_t ffn = 128;
  std::size_t max_positions = 256;
  double init_scale = 0.1;
  std::uint64_t seed = 0;
  /// Divide cond_log_prob by the response length. Off by default.
  bool normalize_by_length = false;

  void validate() const;
};

/// Encoder output for one context. `h`/`c` hold per-layer final LSTM states
/// (empty for the transformer).
struct EncodedContext {
  ad::Var memory;
  std::vector<ad::Var> h;
  std::vector<ad::Var> c;
};

/// Incremental decoding state; Vars live on the tape that produced them.
struct DecoderState {
  std::vector<ad::Var> h;
  std::vector<ad::Var> c;
  TokenSeq prefix;
};

class DialogueModel {
 public:
  virtual ~DialogueModel() = default;

  const ModelConfig& config() const { return config_; }
  Architecture arch() const { return config_.arch; }
  ad::ParameterSet& params() { return params_; }
  const ad::ParameterSet& params() const { return params_; }

  virtual std::unique_ptr<DialogueModel> clone() const = 0;

  virtual EncodedContext encode(ad::Tape& tape, std::span<const TokenId> context) const = 0;

  /// Log-probabilities under teacher forcing: row t is the distribution of
  /// response[t] given context and response[0..t).
  virtual ad::Var teacher_forced_log_probs(ad::Tape& tape, const EncodedContext& enc,
                                           std::span<const TokenId> response) const = 0;

  virtual DecoderState start(ad::Tape& tape, const EncodedContext& enc) const = 0;

  /// Feeds `token` and returns the 1 x V log-distribution of the next token.
  virtual ad::Var step(ad::Tape& tape, const EncodedContext& enc, DecoderState& state,
                       TokenId token) const = 0;

  /// log p(response | context) as a 1x1 node (sum of token log-probs, or the
  /// mean when normalize_by_length is set).
  ad::Var response_log_prob(ad::Tape& tape, const EncodedContext& enc,
                            std::span<const TokenId> response) const;

  /// Evaluation-mode log p(response | context). Response must end with EOS.
  double cond_log_prob(std::span<const TokenId> context, std::span<const TokenId> response) const;

  /// cond_log_prob for each pair, optionally across worker threads.
  std::vector<double> cond_log_prob_batch(std::span<const TokenizedPair> pairs,
                                          std::size_t workers = 1) const;

 protected:
  explicit DialogueModel(ModelConfig config);

  ModelConfig config_;
  ad::ParameterSet params_;
};

std::unique_ptr<DialogueModel> make_model(const ModelConfig& config);

/// Rejects responses that are empty, lack a trailing EOS or contain ids
/// outside the vocab.
void check_response(std::span<const TokenId> response, std::size_t vocab_size);

// ---------------------------------------------------------------------------
// Decoding

enum class DecodeStrategy { Greedy, Beam };

struct DecodeConfig {
  DecodeStrategy strategy = DecodeStrategy::Greedy;
  std::size_t beam_width = 1;
  std::size_t max_len = 20;

  void validate() const;
};

/// Response tokens without the terminating EOS; at most max_len tokens.
TokenSeq generate(const DialogueModel& model, std::span<const TokenId> context,
                  const DecodeConfig& config);

// ---------------------------------------------------------------------------
// Frozen reference

/// Immutable deep copy of a model's parameters.
class ReferenceModel {
 public:
  explicit ReferenceModel(std::shared_ptr<const DialogueModel> model);

  double cond_log_prob(std::span<const TokenId> context, std::span<const TokenId> response) const {
    return model_->cond_log_prob(context, response);
  }
  const DialogueModel& model() const { return *model_; }

 private:
  std::shared_ptr<const DialogueModel> model_;
};

ReferenceModel snapshot_reference(const DialogueModel& model);

// ---------------------------------------------------------------------------
// Checkpoints

/// Binary container: magic, JSON header (architecture, hyperparameters,
/// vocab hash, tensor shapes) and raw little-endian doubles.
void save_checkpoint(const std::filesystem::path& path, const DialogueModel& model,
                     std::string_view vocab_hash);

struct LoadedCheckpoint {
  std::unique_ptr<DialogueModel> model;
  std::string vocab_hash;
};

/// Throws FormatError on a vocab-hash mismatch when `expected_vocab_hash` is set.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path,
                                 std::optional<std::string_view> expected_vocab_hash = {});

// ---------------------------------------------------------------------------
// Maximum likelihood

/// Token-mean negative log-likelihood of one pair, as a 1x1 node.
ad::Var token_mean_nll(ad::Tape& tape, const DialogueModel& model, const TokenizedPair& pair);

/// Mean over the batch of token-mean NLL.
double mle_loss(const DialogueModel& model, std::span<const TokenizedPair> batch);

/// Same value as mle_loss; adds d(loss)/d(theta) into `grads`.
double mle_loss_and_grad(const DialogueModel& model, std::span<const TokenizedPair> batch,
                         ad::Gradients& grads);

}  // namespace gcdl
