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

#include "gcdl/models.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>

#include "model_impl.hpp"

namespace gcdl {

namespace detail {

ad::Matrix uniform_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols,
                          double scale) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  ad::Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
  return m;
}

}  // namespace detail

std::string_view to_string(Architecture arch) {
  switch (arch) {
    case Architecture::Seq2SeqAttention:
      return "seq2seq-attention";
    case Architecture::Transformer:
      return "transformer";
  }
  return "unknown";
}

Architecture architecture_from_string(std::string_view name) {
  if (name == "seq2seq-attention" || name == "seq2seq") return Architecture::Seq2SeqAttention;
  if (name == "transformer") return Architecture::Transformer;
  throw DomainError("unknown architecture '" + std::string(name) + "'");
}

void ModelConfig::validate() const {
  if (vocab_size <= static_cast<std::size_t>(kNumReserved))
    throw DomainError("model vocab_size must exceed the reserved tokens");
  if (embed_dim == 0 || hidden == 0 || layers == 0)
    throw DomainError("model dimensions must be positive");
  if (arch == Architecture::Transformer) {
    if (heads == 0 || hidden % heads != 0)
      throw DomainError("transformer hidden size must be a multiple of heads");
    if (ffn == 0 || max_positions == 0) throw DomainError("transformer ffn/max_positions must be positive");
  }
  if (!(init_scale > 0.0)) throw DomainError("init_scale must be positive");
}

DialogueModel::DialogueModel(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
}

ad::Var DialogueModel::response_log_prob(ad::Tape& tape, const EncodedContext& enc,
                                         std::span<const TokenId> response) const {
  auto log_probs = teacher_forced_log_probs(tape, enc, response);
  auto total = tape.sum(tape.pick(log_probs, response));
  if (config_.normalize_by_length)
    total = tape.scale(total, 1.0 / static_cast<double>(response.size()));
  return total;
}

double DialogueModel::cond_log_prob(std::span<const TokenId> context,
                                    std::span<const TokenId> response) const {
  check_response(response, config_.vocab_size);
  for (TokenId id : context)
    if (id < 0 || static_cast<std::size_t>(id) >= config_.vocab_size)
      throw DomainError("context token id " + std::to_string(id) + " outside the vocab");
  ad::Tape tape(params_, nullptr);
  auto enc = encode(tape, context);
  return tape.scalar_value(response_log_prob(tape, enc, response));
}

std::vector<double> DialogueModel::cond_log_prob_batch(std::span<const TokenizedPair> pairs,
                                                       std::size_t workers) const {
  std::vector<double> out(pairs.size());
  parallel_for(pairs.size(), workers, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i)
      out[i] = cond_log_prob(pairs[i].context, pairs[i].response);
  });
  return out;
}

std::unique_ptr<DialogueModel> make_model(const ModelConfig& config) {
  switch (config.arch) {
    case Architecture::Seq2SeqAttention:
      return std::make_unique<detail::Seq2SeqModel>(config);
    case Architecture::Transformer:
      return std::make_unique<detail::TransformerModel>(config);
  }
  throw DomainError("unknown architecture");
}

void check_response(std::span<const TokenId> response, std::size_t vocab_size) {
  if (response.empty()) throw DomainError("response is empty");
  if (response.back() != kEos) throw DomainError("response must end with EOS");
  for (TokenId id : response)
    if (id < 0 || static_cast<std::size_t>(id) >= vocab_size)
      throw DomainError("response token id " + std::to_string(id) + " outside the vocab");
}

// ---------------------------------------------------------------------------
// Decoding

void DecodeConfig::validate() const {
  if (max_len < 1) throw DomainError("decode max_len must be >= 1");
  if (beam_width < 1) throw DomainError("decode beam_width must be >= 1");
}

namespace {

// Index of the largest entry of a 1 x V row; ties go to the lower id.
TokenId argmax(const ad::Matrix& row) {
  Eigen::Index best = 0;
  for (Eigen::Index j = 1; j < row.cols(); ++j)
    if (row(0, j) > row(0, best)) best = j;
  return static_cast<TokenId>(best);
}

TokenSeq greedy(const DialogueModel& model, std::span<const TokenId> context,
                std::size_t max_len) {
  ad::Tape tape(model.params(), nullptr);
  auto enc = model.encode(tape, context);
  auto state = model.start(tape, enc);
  TokenSeq out;
  TokenId token = kBos;
  while (out.size() < max_len) {
    token = argmax(tape.value(model.step(tape, enc, state, token)));
    if (token == kEos) break;
    out.push_back(token);
  }
  return out;
}

struct Hypothesis {
  TokenSeq tokens;
  double score = 0.0;
  DecoderState state;
  ad::Var next;  // log-distribution after the last fed token
  bool finished = false;
};

TokenSeq beam(const DialogueModel& model, std::span<const TokenId> context,
              const DecodeConfig& config) {
  ad::Tape tape(model.params(), nullptr);
  auto enc = model.encode(tape, context);
  std::vector<Hypothesis> beams(1);
  beams[0].state = model.start(tape, enc);
  beams[0].next = model.step(tape, enc, beams[0].state, kBos);

  struct Candidate {
    double score;
    std::size_t parent;
    TokenId token;
  };
  const std::size_t width = config.beam_width;
  for (std::size_t len = 0;; ++len) {
    std::vector<Candidate> candidates;
    for (std::size_t b = 0; b < beams.size(); ++b) {
      const auto& hyp = beams[b];
      if (hyp.finished) {
        candidates.push_back({hyp.score, b, -1});
        continue;
      }
      const auto& row = tape.value(hyp.next);
      // Once max_len tokens are out, the hypothesis may only stop.
      if (len == config.max_len) {
        candidates.push_back({hyp.score, b, -1});
        continue;
      }
      std::vector<TokenId> ids(static_cast<std::size_t>(row.cols()));
      for (std::size_t j = 0; j < ids.size(); ++j) ids[j] = static_cast<TokenId>(j);
      const std::size_t keep = std::min(width, ids.size());
      std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(keep), ids.end(),
                        [&](TokenId a, TokenId c) {
                          if (row(0, a) != row(0, c)) return row(0, a) > row(0, c);
                          return a < c;
                        });
      for (std::size_t j = 0; j < keep; ++j)
        candidates.push_back({hyp.score + row(0, ids[j]), b, ids[j]});
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const Candidate& a, const Candidate& c) { return a.score > c.score; });
    candidates.resize(std::min(width, candidates.size()));

    std::vector<Hypothesis> next;
    bool all_done = true;
    for (const auto& cand : candidates) {
      Hypothesis hyp = beams[cand.parent];
      hyp.score = cand.score;
      if (cand.token < 0 || cand.token == kEos) {
        if (cand.token == kEos || len == config.max_len) hyp.finished = true;
      } else {
        hyp.tokens.push_back(cand.token);
        hyp.next = model.step(tape, enc, hyp.state, cand.token);
        all_done = false;
      }
      next.push_back(std::move(hyp));
    }
    beams = std::move(next);
    if (all_done) break;
  }
  return beams.front().tokens;
}

}  // namespace

TokenSeq generate(const DialogueModel& model, std::span<const TokenId> context,
                  const DecodeConfig& config) {
  config.validate();
  if (config.strategy == DecodeStrategy::Greedy) return greedy(model, context, config.max_len);
  return beam(model, context, config);
}

// ---------------------------------------------------------------------------
// Frozen reference

ReferenceModel::ReferenceModel(std::shared_ptr<const DialogueModel> model)
    : model_(std::move(model)) {
  if (!model_) throw DomainError("reference model is null");
}

ReferenceModel snapshot_reference(const DialogueModel& model) {
  return ReferenceModel(std::shared_ptr<const DialogueModel>(model.clone()));
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[8] = {'G', 'C', 'D', 'L', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;
static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"arch", std::string(to_string(c.arch))},
          {"vocab_size", c.vocab_size},
          {"embed_dim", c.embed_dim},
          {"hidden", c.hidden},
          {"layers", c.layers},
          {"heads", c.heads},
          {"ffn", c.ffn},
          {"max_positions", c.max_positions},
          {"init_scale", c.init_scale},
          {"seed", c.seed},
          {"normalize_by_length", c.normalize_by_length}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.arch = architecture_from_string(j.at("arch").get<std::string>());
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.embed_dim = j.at("embed_dim").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::size_t>();
  c.layers = j.at("layers").get<std::size_t>();
  c.heads = j.at("heads").get<std::size_t>();
  c.ffn = j.at("ffn").get<std::size_t>();
  c.max_positions = j.at("max_positions").get<std::size_t>();
  c.init_scale = j.at("init_scale").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.normalize_by_length = j.at("normalize_by_length").get<bool>();
  return c;
}

template <typename T>
void append_raw(std::string& out, const T& value) {
  out.append(reinterpret_cast<const char*>(&value), sizeof(T));
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const DialogueModel& model,
                     std::string_view vocab_hash) {
  const auto& params = model.params();
  nlohmann::json header;
  header["config"] = config_to_json(model.config());
  header["vocab_hash"] = std::string(vocab_hash);
  header["code_version"] = std::string(kCodeVersion);
  auto& tensors = header["tensors"] = nlohmann::json::array();
  for (std::size_t i = 0; i < params.size(); ++i)
    tensors.push_back({{"name", params.name(i)},
                       {"rows", params.value(i).rows()},
                       {"cols", params.value(i).cols()}});
  const std::string text = header.dump();

  std::string out(kMagic, sizeof(kMagic));
  append_raw(out, kCheckpointVersion);
  append_raw(out, static_cast<std::uint64_t>(text.size()));
  out += text;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& m = params.value(i);
    out.append(reinterpret_cast<const char*>(m.data()),
               static_cast<std::size_t>(m.size()) * sizeof(double));
  }
  write_file(path, out);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path,
                                 std::optional<std::string_view> expected_vocab_hash) {
  const std::string data = read_file(path);
  const std::string where = "checkpoint " + path.string();
  const std::size_t prefix = sizeof(kMagic) + sizeof(std::uint32_t) + sizeof(std::uint64_t);
  if (data.size() < prefix || std::memcmp(data.data(), kMagic, sizeof(kMagic)) != 0)
    throw FormatError(where + ": bad magic");
  std::uint32_t version = 0;
  std::uint64_t header_len = 0;
  std::memcpy(&version, data.data() + sizeof(kMagic), sizeof(version));
  std::memcpy(&header_len, data.data() + sizeof(kMagic) + sizeof(version), sizeof(header_len));
  if (version != kCheckpointVersion)
    throw FormatError(where + ": unsupported version " + std::to_string(version));
  if (header_len > data.size() - prefix) throw FormatError(where + ": truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(data.substr(prefix, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(where + ": " + e.what());
  }

  LoadedCheckpoint loaded;
  try {
    loaded.vocab_hash = header.at("vocab_hash").get<std::string>();
    if (expected_vocab_hash && loaded.vocab_hash != *expected_vocab_hash)
      throw FormatError(where + ": vocab hash mismatch (checkpoint " + loaded.vocab_hash +
                        ", expected " + std::string(*expected_vocab_hash) + ")");
    loaded.model = make_model(config_from_json(header.at("config")));
    auto& params = loaded.model->params();
    const auto& tensors = header.at("tensors");
    if (tensors.size() != params.size())
      throw FormatError(where + ": tensor count does not match the architecture");
    std::size_t offset = prefix + header_len;
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto& t = tensors[i];
      auto& m = params.value(i);
      if (t.at("name").get<std::string>() != params.name(i) ||
          t.at("rows").get<Eigen::Index>() != m.rows() ||
          t.at("cols").get<Eigen::Index>() != m.cols())
        throw FormatError(where + ": tensor '" + params.name(i) + "' does not match");
      const std::size_t bytes = static_cast<std::size_t>(m.size()) * sizeof(double);
      if (offset + bytes > data.size()) throw FormatError(where + ": truncated tensor data");
      std::memcpy(m.data(), data.data() + offset, bytes);
      offset += bytes;
    }
    if (offset != data.size()) throw FormatError(where + ": trailing bytes");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(where + ": " + e.what());
  }
  return loaded;
}

// ---------------------------------------------------------------------------
// Maximum likelihood

ad::Var token_mean_nll(ad::Tape& tape, const DialogueModel& model, const TokenizedPair& pair) {
  check_response(pair.response, model.config().vocab_size);
  auto enc = model.encode(tape, pair.context);
  auto log_probs = model.teacher_forced_log_probs(tape, enc, pair.response);
  auto total = tape.sum(tape.pick(log_probs, pair.response));
  return tape.scale(total, -1.0 / static_cast<double>(pair.response.size()));
}

double mle_loss(const DialogueModel& model, std::span<const TokenizedPair> batch) {
  if (batch.empty()) throw DomainError("mle_loss: empty batch");
  double total = 0.0;
  for (const auto& pair : batch) {
    ad::Tape tape(model.params(), nullptr);
    total += tape.scalar_value(token_mean_nll(tape, model, pair));
  }
  return total / static_cast<double>(batch.size());
}

double mle_loss_and_grad(const DialogueModel& model, std::span<const TokenizedPair> batch,
                         ad::Gradients& grads) {
  if (batch.empty()) throw DomainError("mle_loss: empty batch");
  const double inv = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (const auto& pair : batch) {
    ad::Tape tape(model.params(), &grads);
    auto nll = token_mean_nll(tape, model, pair);
    total += tape.scalar_value(nll);
    tape.seed(nll, inv);
    tape.backward();
  }
  return total * inv;
}

}  // namespace gcdl
