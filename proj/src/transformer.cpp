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

#include <cmath>
#include <limits>

#include "model_impl.hpp"

namespace gcdl::detail {

namespace {

double xavier(Eigen::Index in, Eigen::Index out) {
  return std::sqrt(6.0 / static_cast<double>(in + out));
}

}  // namespace

TransformerModel::TransformerModel(const ModelConfig& config) : DialogueModel(config) {
  if (config.hidden % config.heads != 0)
    throw DomainError("transformer hidden size must be divisible by heads");
  std::mt19937_64 rng(config.seed);
  const auto V = static_cast<Eigen::Index>(config.vocab_size);
  const auto D = static_cast<Eigen::Index>(config.hidden);

  embedding_ = params_.add("embedding", uniform_matrix(rng, V, D, config.init_scale));
  for (std::size_t l = 0; l < config.layers; ++l) {
    const std::string p = "encoder.l" + std::to_string(l);
    EncoderLayer layer;
    layer.ln1 = add_norm(p + ".ln1");
    layer.self = add_attention(rng, p + ".self");
    layer.ln2 = add_norm(p + ".ln2");
    layer.ffn = add_ffn(rng, p + ".ffn");
    encoder_.push_back(layer);
  }
  encoder_norm_ = add_norm("encoder.ln");
  for (std::size_t l = 0; l < config.layers; ++l) {
    const std::string p = "decoder.l" + std::to_string(l);
    DecoderLayer layer;
    layer.ln1 = add_norm(p + ".ln1");
    layer.self = add_attention(rng, p + ".self");
    layer.ln2 = add_norm(p + ".ln2");
    layer.cross = add_attention(rng, p + ".cross");
    layer.ln3 = add_norm(p + ".ln3");
    layer.ffn = add_ffn(rng, p + ".ffn");
    decoder_.push_back(layer);
  }
  decoder_norm_ = add_norm("decoder.ln");
  out_w_ = params_.add("output.w", uniform_matrix(rng, D, V, xavier(D, V)));
  out_b_ = params_.add("output.b", ad::Matrix::Zero(1, V));

  const auto P = static_cast<Eigen::Index>(config.max_positions);
  positions_.resize(P, D);
  for (Eigen::Index pos = 0; pos < P; ++pos) {
    for (Eigen::Index i = 0; i < D; ++i) {
      const double rate =
          std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(D));
      positions_(pos, i) = i % 2 == 0 ? std::sin(static_cast<double>(pos) * rate)
                                      : std::cos(static_cast<double>(pos) * rate);
    }
  }
}

TransformerModel::Attention TransformerModel::add_attention(std::mt19937_64& rng,
                                                            const std::string& prefix) {
  const auto D = static_cast<Eigen::Index>(config_.hidden);
  const double s = xavier(D, D);
  Attention a;
  a.wq = params_.add(prefix + ".wq", uniform_matrix(rng, D, D, s));
  a.wk = params_.add(prefix + ".wk", uniform_matrix(rng, D, D, s));
  a.wv = params_.add(prefix + ".wv", uniform_matrix(rng, D, D, s));
  a.wo = params_.add(prefix + ".wo", uniform_matrix(rng, D, D, s));
  return a;
}

TransformerModel::Norm TransformerModel::add_norm(const std::string& prefix) {
  const auto D = static_cast<Eigen::Index>(config_.hidden);
  return Norm{params_.add(prefix + ".gamma", ad::Matrix::Ones(1, D)),
              params_.add(prefix + ".beta", ad::Matrix::Zero(1, D))};
}

TransformerModel::Ffn TransformerModel::add_ffn(std::mt19937_64& rng, const std::string& prefix) {
  const auto D = static_cast<Eigen::Index>(config_.hidden);
  const auto F = static_cast<Eigen::Index>(config_.ffn);
  Ffn f;
  f.w1 = params_.add(prefix + ".w1", uniform_matrix(rng, D, F, xavier(D, F)));
  f.b1 = params_.add(prefix + ".b1", ad::Matrix::Zero(1, F));
  f.w2 = params_.add(prefix + ".w2", uniform_matrix(rng, F, D, xavier(F, D)));
  f.b2 = params_.add(prefix + ".b2", ad::Matrix::Zero(1, D));
  return f;
}

std::unique_ptr<DialogueModel> TransformerModel::clone() const {
  return std::make_unique<TransformerModel>(*this);
}

ad::Var TransformerModel::embed_positions(ad::Tape& tape, std::span<const TokenId> ids) const {
  const auto n = static_cast<Eigen::Index>(ids.size());
  if (n > positions_.rows())
    throw DomainError("sequence longer than max_positions (" + std::to_string(n) + ")");
  auto x = tape.scale(tape.embed(embedding_, ids), std::sqrt(static_cast<double>(config_.hidden)));
  return tape.add_const(x, positions_.topRows(n));
}

ad::Var TransformerModel::norm(ad::Tape& tape, const Norm& n, ad::Var x) const {
  return tape.layer_norm(x, tape.param(n.gamma), tape.param(n.beta));
}

ad::Var TransformerModel::feed_forward(ad::Tape& tape, const Ffn& f, ad::Var x) const {
  auto hidden = tape.relu(tape.add_row(tape.matmul(x, tape.param(f.w1)), tape.param(f.b1)));
  return tape.add_row(tape.matmul(hidden, tape.param(f.w2)), tape.param(f.b2));
}

ad::Var TransformerModel::attention(ad::Tape& tape, const Attention& attn, ad::Var queries,
                                    ad::Var keys, bool causal) const {
  const auto D = static_cast<Eigen::Index>(config_.hidden);
  const auto heads = static_cast<Eigen::Index>(config_.heads);
  const Eigen::Index dk = D / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));

  auto q = tape.matmul(queries, tape.param(attn.wq));
  auto k = tape.matmul(keys, tape.param(attn.wk));
  auto v = tape.matmul(keys, tape.param(attn.wv));

  const Eigen::Index tq = tape.value(queries).rows();
  const Eigen::Index tk = tape.value(keys).rows();
  ad::Matrix mask;
  if (causal) {
    mask = ad::Matrix::Zero(tq, tk);
    for (Eigen::Index i = 0; i < tq; ++i)
      for (Eigen::Index j = i + 1; j < tk; ++j) mask(i, j) = -1e9;
  }

  std::vector<ad::Var> outputs;
  outputs.reserve(static_cast<std::size_t>(heads));
  for (Eigen::Index h = 0; h < heads; ++h) {
    auto qh = tape.slice_cols(q, h * dk, dk);
    auto kh = tape.slice_cols(k, h * dk, dk);
    auto vh = tape.slice_cols(v, h * dk, dk);
    auto scores = tape.scale(tape.matmul_nt(qh, kh), inv_sqrt);
    if (causal) scores = tape.add_const(scores, mask);
    outputs.push_back(tape.matmul(tape.softmax_rows(scores), vh));
  }
  auto merged = heads == 1 ? outputs.front() : tape.concat_cols(outputs);
  return tape.matmul(merged, tape.param(attn.wo));
}

EncodedContext TransformerModel::encode(ad::Tape& tape, std::span<const TokenId> context) const {
  if (context.empty()) throw DomainError("encode: empty context");
  auto x = embed_positions(tape, context);
  for (const auto& layer : encoder_) {
    auto n1 = norm(tape, layer.ln1, x);
    x = tape.add(x, attention(tape, layer.self, n1, n1, false));
    x = tape.add(x, feed_forward(tape, layer.ffn, norm(tape, layer.ln2, x)));
  }
  EncodedContext enc;
  enc.memory = norm(tape, encoder_norm_, x);
  return enc;
}

ad::Var TransformerModel::decode(ad::Tape& tape, ad::Var memory,
                                 std::span<const TokenId> inputs) const {
  auto x = embed_positions(tape, inputs);
  for (const auto& layer : decoder_) {
    auto n1 = norm(tape, layer.ln1, x);
    x = tape.add(x, attention(tape, layer.self, n1, n1, true));
    x = tape.add(x, attention(tape, layer.cross, norm(tape, layer.ln2, x), memory, false));
    x = tape.add(x, feed_forward(tape, layer.ffn, norm(tape, layer.ln3, x)));
  }
  x = norm(tape, decoder_norm_, x);
  auto logits = tape.add_row(tape.matmul(x, tape.param(out_w_)), tape.param(out_b_));
  return tape.log_softmax_rows(logits);
}

ad::Var TransformerModel::teacher_forced_log_probs(ad::Tape& tape, const EncodedContext& enc,
                                                   std::span<const TokenId> response) const {
  TokenSeq inputs;
  inputs.reserve(response.size());
  inputs.push_back(kBos);
  inputs.insert(inputs.end(), response.begin(), response.end() - 1);
  return decode(tape, enc.memory, inputs);
}

DecoderState TransformerModel::start(ad::Tape&, const EncodedContext&) const { return {}; }

ad::Var TransformerModel::step(ad::Tape& tape, const EncodedContext& enc, DecoderState& state,
                               TokenId token) const {
  state.prefix.push_back(token);
  auto all = decode(tape, enc.memory, state.prefix);
  return tape.slice_rows(all, tape.value(all).rows() - 1, 1);
}

}  // namespace gcdl::detail
