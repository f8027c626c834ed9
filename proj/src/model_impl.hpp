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

#include <random>

#include "gcdl/models.hpp"

namespace gcdl::detail {

/// Uniform(-scale, scale) matrix drawn from `rng`.
ad::Matrix uniform_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols,
                          double scale);

/// LSTM encoder-decoder with Luong "general" attention over the encoder
/// states; decoder starts from the encoder's final states.
class Seq2SeqModel final : public DialogueModel {
 public:
  explicit Seq2SeqModel(const ModelConfig& config);

  std::unique_ptr<DialogueModel> clone() const override;
  EncodedContext encode(ad::Tape& tape, std::span<const TokenId> context) const override;
  ad::Var teacher_forced_log_probs(ad::Tape& tape, const EncodedContext& enc,
                                   std::span<const TokenId> response) const override;
  DecoderState start(ad::Tape& tape, const EncodedContext& enc) const override;
  ad::Var step(ad::Tape& tape, const EncodedContext& enc, DecoderState& state,
               TokenId token) const override;

 private:
  struct LstmLayer {
    std::size_t wx, wh, b;
  };

  // Runs one layer over the T rows of `inputs`; returns the stacked outputs
  // and leaves the final state in h/c.
  ad::Var run_layer(ad::Tape& tape, const LstmLayer& layer, ad::Var inputs, ad::Var& h,
                    ad::Var& c) const;
  ad::Var cell(ad::Tape& tape, const LstmLayer& layer, ad::Var x_proj, ad::Var& h,
               ad::Var& c) const;
  ad::Var attend_and_project(ad::Tape& tape, ad::Var dec_states, ad::Var memory) const;

  std::size_t embedding_;
  std::vector<LstmLayer> encoder_;
  std::vector<LstmLayer> decoder_;
  std::size_t attn_w_, attn_combine_, attn_bias_;
  std::size_t out_w_, out_b_;
};

/// Pre-norm transformer encoder-decoder with sinusoidal positions.
class TransformerModel final : public DialogueModel {
 public:
  explicit TransformerModel(const ModelConfig& config);

  std::unique_ptr<DialogueModel> clone() const override;
  EncodedContext encode(ad::Tape& tape, std::span<const TokenId> context) const override;
  ad::Var teacher_forced_log_probs(ad::Tape& tape, const EncodedContext& enc,
                                   std::span<const TokenId> response) const override;
  DecoderState start(ad::Tape& tape, const EncodedContext& enc) const override;
  ad::Var step(ad::Tape& tape, const EncodedContext& enc, DecoderState& state,
               TokenId token) const override;

 private:
  struct Attention {
    std::size_t wq, wk, wv, wo;
  };
  struct Norm {
    std::size_t gamma, beta;
  };
  struct Ffn {
    std::size_t w1, b1, w2, b2;
  };
  struct EncoderLayer {
    Norm ln1;
    Attention self;
    Norm ln2;
    Ffn ffn;
  };
  struct DecoderLayer {
    Norm ln1;
    Attention self;
    Norm ln2;
    Attention cross;
    Norm ln3;
    Ffn ffn;
  };

  Attention add_attention(std::mt19937_64& rng, const std::string& prefix);
  Norm add_norm(const std::string& prefix);
  Ffn add_ffn(std::mt19937_64& rng, const std::string& prefix);

  ad::Var embed_positions(ad::Tape& tape, std::span<const TokenId> ids) const;
  ad::Var attention(ad::Tape& tape, const Attention& attn, ad::Var queries, ad::Var keys,
                    bool causal) const;
  ad::Var norm(ad::Tape& tape, const Norm& n, ad::Var x) const;
  ad::Var feed_forward(ad::Tape& tape, const Ffn& f, ad::Var x) const;
  // Decoder over `inputs` (already shifted right); returns T x V log-probs.
  ad::Var decode(ad::Tape& tape, ad::Var memory, std::span<const TokenId> inputs) const;

  std::size_t embedding_;
  std::vector<EncoderLayer> encoder_;
  Norm encoder_norm_;
  std::vector<DecoderLayer> decoder_;
  Norm decoder_norm_;
  std::size_t out_w_, out_b_;
  ad::Matrix positions_;
};

}  // namespace gcdl::detail
