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

#include <array>

#include "model_impl.hpp"

namespace gcdl::detail {

Seq2SeqModel::Seq2SeqModel(const ModelConfig& config) : DialogueModel(config) {
  std::mt19937_64 rng(config.seed);
  const auto V = static_cast<Eigen::Index>(config.vocab_size);
  const auto E = static_cast<Eigen::Index>(config.embed_dim);
  const auto H = static_cast<Eigen::Index>(config.hidden);
  const double s = config.init_scale;

  embedding_ = params_.add("embedding", uniform_matrix(rng, V, E, s));
  auto add_stack = [&](const std::string& prefix, std::vector<LstmLayer>& stack) {
    for (std::size_t l = 0; l < config.layers; ++l) {
      const std::string p = prefix + ".l" + std::to_string(l);
      const Eigen::Index in = l == 0 ? E : H;
      LstmLayer layer;
      layer.wx = params_.add(p + ".wx", uniform_matrix(rng, in, 4 * H, s));
      layer.wh = params_.add(p + ".wh", uniform_matrix(rng, H, 4 * H, s));
      ad::Matrix bias = ad::Matrix::Zero(1, 4 * H);
      bias.middleCols(H, H).setOnes();  // forget gate
      layer.b = params_.add(p + ".b", std::move(bias));
      stack.push_back(layer);
    }
  };
  add_stack("encoder", encoder_);
  add_stack("decoder", decoder_);
  attn_w_ = params_.add("attention.w", uniform_matrix(rng, H, H, s));
  attn_combine_ = params_.add("attention.combine", uniform_matrix(rng, 2 * H, H, s));
  attn_bias_ = params_.add("attention.b", ad::Matrix::Zero(1, H));
  out_w_ = params_.add("output.w", uniform_matrix(rng, H, V, s));
  out_b_ = params_.add("output.b", ad::Matrix::Zero(1, V));
}

std::unique_ptr<DialogueModel> Seq2SeqModel::clone() const {
  return std::make_unique<Seq2SeqModel>(*this);
}

ad::Var Seq2SeqModel::cell(ad::Tape& tape, const LstmLayer& layer, ad::Var x_proj, ad::Var& h,
                           ad::Var& c) const {
  auto gates = tape.add(x_proj, tape.matmul(h, tape.param(layer.wh)));
  auto hc = tape.lstm_cell(gates, c);
  const auto H = static_cast<Eigen::Index>(config_.hidden);
  h = tape.slice_cols(hc, 0, H);
  c = tape.slice_cols(hc, H, H);
  return h;
}

ad::Var Seq2SeqModel::run_layer(ad::Tape& tape, const LstmLayer& layer, ad::Var inputs,
                                ad::Var& h, ad::Var& c) const {
  auto proj = tape.add_row(tape.matmul(inputs, tape.param(layer.wx)), tape.param(layer.b));
  const Eigen::Index steps = tape.value(inputs).rows();
  std::vector<ad::Var> outputs;
  outputs.reserve(static_cast<std::size_t>(steps));
  for (Eigen::Index t = 0; t < steps; ++t)
    outputs.push_back(cell(tape, layer, tape.slice_rows(proj, t, 1), h, c));
  return steps == 1 ? outputs.front() : tape.concat_rows(outputs);
}

EncodedContext Seq2SeqModel::encode(ad::Tape& tape, std::span<const TokenId> context) const {
  if (context.empty()) throw DomainError("encode: empty context");
  const auto H = static_cast<Eigen::Index>(config_.hidden);
  EncodedContext enc;
  auto x = tape.embed(embedding_, context);
  for (const auto& layer : encoder_) {
    auto h = tape.constant(ad::Matrix::Zero(1, H));
    auto c = tape.constant(ad::Matrix::Zero(1, H));
    x = run_layer(tape, layer, x, h, c);
    enc.h.push_back(h);
    enc.c.push_back(c);
  }
  enc.memory = x;
  return enc;
}

ad::Var Seq2SeqModel::attend_and_project(ad::Tape& tape, ad::Var dec_states,
                                         ad::Var memory) const {
  auto scores = tape.matmul_nt(tape.matmul(dec_states, tape.param(attn_w_)), memory);
  auto context = tape.matmul(tape.softmax_rows(scores), memory);
  std::array<ad::Var, 2> parts{dec_states, context};
  auto combined = tape.tanh(
      tape.add_row(tape.matmul(tape.concat_cols(parts), tape.param(attn_combine_)),
                   tape.param(attn_bias_)));
  auto logits = tape.add_row(tape.matmul(combined, tape.param(out_w_)), tape.param(out_b_));
  return tape.log_softmax_rows(logits);
}

ad::Var Seq2SeqModel::teacher_forced_log_probs(ad::Tape& tape, const EncodedContext& enc,
                                               std::span<const TokenId> response) const {
  TokenSeq inputs;
  inputs.reserve(response.size());
  inputs.push_back(kBos);
  inputs.insert(inputs.end(), response.begin(), response.end() - 1);

  auto x = tape.embed(embedding_, inputs);
  for (std::size_t l = 0; l < decoder_.size(); ++l) {
    auto h = enc.h[l];
    auto c = enc.c[l];
    x = run_layer(tape, decoder_[l], x, h, c);
  }
  return attend_and_project(tape, x, enc.memory);
}

DecoderState Seq2SeqModel::start(ad::Tape&, const EncodedContext& enc) const {
  DecoderState state;
  state.h = enc.h;
  state.c = enc.c;
  return state;
}

ad::Var Seq2SeqModel::step(ad::Tape& tape, const EncodedContext& enc, DecoderState& state,
                           TokenId token) const {
  const std::array<TokenId, 1> ids{token};
  auto x = tape.embed(embedding_, ids);
  for (std::size_t l = 0; l < decoder_.size(); ++l) {
    auto proj = tape.add_row(tape.matmul(x, tape.param(decoder_[l].wx)),
                             tape.param(decoder_[l].b));
    x = cell(tape, decoder_[l], proj, state.h[l], state.c[l]);
  }
  state.prefix.push_back(token);
  return attend_and_project(tape, x, enc.memory);
}

}  // namespace gcdl::detail
