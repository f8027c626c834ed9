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

#include "gcdl/matcher.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include "gcdl/autograd.hpp"

namespace gcdl {

EmbeddingTable::EmbeddingTable(std::size_t dim) : dim_(dim) {
  if (dim == 0) throw DomainError("embedding dimension must be positive");
  sum_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
  backoff_ = sum_;
}

EmbeddingTable EmbeddingTable::load_word2vec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("embedding file not found: " + path.string());
  std::string header;
  if (!std::getline(in, header)) throw FormatError(path.string() + ": empty embedding file");
  std::istringstream hs(header);
  std::size_t count = 0, dim = 0;
  if (!(hs >> count >> dim) || dim == 0)
    throw FormatError(path.string() + ": bad word2vec header \"" + header + "\"");

  EmbeddingTable table(dim);
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string token;
    ls >> token;
    Eigen::VectorXd vec(static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < dim; ++i) {
      if (!(ls >> vec(static_cast<Eigen::Index>(i))))
        throw FormatError(path.string() + " line " + std::to_string(line_no) +
                          ": expected " + std::to_string(dim) + " values");
    }
    table.set(token, std::move(vec));
  }
  if (table.size() != count)
    throw FormatError(path.string() + ": header declares " + std::to_string(count) +
                      " vectors, found " + std::to_string(table.size()));
  return table;
}

void EmbeddingTable::save_word2vec(const std::filesystem::path& path) const {
  std::string out = std::to_string(order_.size()) + " " + std::to_string(dim_) + "\n";
  char buf[32];
  for (const auto& tok : order_) {
    out += tok;
    for (double v : vectors_.at(tok)) {
      std::snprintf(buf, sizeof(buf), " %.9g", v);
      out += buf;
    }
    out += '\n';
  }
  write_file(path, out);
}

EmbeddingTable EmbeddingTable::random(std::span<const std::string> tokens, std::size_t dim,
                                      std::uint64_t seed) {
  EmbeddingTable table(dim);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(dim)));
  for (const auto& tok : tokens) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(dim));
    for (auto& x : v) x = normal(rng);
    table.set(tok, std::move(v));
  }
  return table;
}

void EmbeddingTable::set(const std::string& token, Eigen::VectorXd vec) {
  if (static_cast<std::size_t>(vec.size()) != dim_)
    throw DomainError("embedding for '" + token + "' has wrong dimension");
  auto it = vectors_.find(token);
  if (it != vectors_.end()) {
    sum_ -= it->second;
    it->second = std::move(vec);
    sum_ += it->second;
  } else {
    sum_ += vec;
    vectors_.emplace(token, std::move(vec));
    order_.push_back(token);
  }
  backoff_ = sum_ / static_cast<double>(order_.size());
}

const Eigen::VectorXd& EmbeddingTable::lookup(std::string_view token) const {
  auto it = vectors_.find(std::string(token));
  return it == vectors_.end() ? backoff_ : it->second;
}

bool EmbeddingTable::contains(std::string_view token) const {
  return vectors_.count(std::string(token)) > 0;
}

Eigen::VectorXd embed_utterance(std::span<const std::string> tokens,
                                const EmbeddingTable& table) {
  if (tokens.empty()) throw DomainError("embed_utterance: empty token sequence");
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(table.dim()));
  for (const auto& t : tokens) sum += table.lookup(t);
  return sum / static_cast<double>(tokens.size());
}

double cosine(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

VocabEmbeddings::VocabEmbeddings(const EmbeddingTable& table, const Vocab& vocab)
    : rows_(static_cast<Eigen::Index>(vocab.size()), static_cast<Eigen::Index>(table.dim())) {
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    const auto id = static_cast<TokenId>(i);
    if (id == kUnk) {
      rows_.row(id) = table.backoff().transpose();
    } else if (is_reserved(id)) {
      rows_.row(id).setZero();
    } else {
      rows_.row(id) = table.lookup(vocab.token(id)).transpose();
    }
  }
}

Eigen::VectorXd VocabEmbeddings::embed(std::span<const TokenId> ids) const {
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(rows_.cols());
  std::size_t n = 0;
  for (TokenId id : ids) {
    if (id < 0 || id >= rows_.rows())
      throw DomainError("token id out of vocab: " + std::to_string(id));
    if (id == kPad || id == kBos || id == kEos) continue;
    sum += rows_.row(id).transpose();
    ++n;
  }
  if (n == 0) throw DomainError("embed: no content tokens");
  return sum / static_cast<double>(n);
}

CosineMatcher::CosineMatcher(std::shared_ptr<const VocabEmbeddings> embeddings)
    : embeddings_(std::move(embeddings)) {
  if (!embeddings_) throw Error("CosineMatcher: null embeddings");
}

double CosineMatcher::score(std::span<const TokenId> context,
                            std::span<const TokenId> response) const {
  if (context.empty() || response.empty()) throw DomainError("match_score: empty input");
  return cosine(embeddings_->embed(context), embeddings_->embed(response));
}

BiEncoderMatcher::BiEncoderMatcher(std::shared_ptr<const VocabEmbeddings> embeddings)
    : embeddings_(std::move(embeddings)) {
  if (!embeddings_) throw Error("BiEncoderMatcher: null embeddings");
  const auto d = static_cast<Eigen::Index>(embeddings_->dim());
  context_proj_ = Eigen::MatrixXd::Identity(d, d);
  response_proj_ = Eigen::MatrixXd::Identity(d, d);
}

double BiEncoderMatcher::score(std::span<const TokenId> context,
                               std::span<const TokenId> response) const {
  if (context.empty() || response.empty()) throw DomainError("match_score: empty input");
  const Eigen::VectorXd c = context_proj_.transpose() * embeddings_->embed(context);
  const Eigen::VectorXd r = response_proj_.transpose() * embeddings_->embed(response);
  return cosine(c, r);
}

void BiEncoderMatcher::train(std::span<const TokenizedPair> pairs,
                             const BiEncoderConfig& config) {
  if (config.batch_size < 2) throw DomainError("bi-encoder batch size must be >= 2");
  if (pairs.size() < 2 * config.batch_size)
    throw DomainError("bi-encoder training needs at least " +
                      std::to_string(2 * config.batch_size) + " pairs, got " +
                      std::to_string(pairs.size()));

  const auto d = static_cast<Eigen::Index>(embeddings_->dim());
  const auto n = static_cast<Eigen::Index>(pairs.size());
  Eigen::MatrixXd ctx(n, d), resp(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    ctx.row(i) = embeddings_->embed(pairs[static_cast<std::size_t>(i)].context).transpose();
    resp.row(i) = embeddings_->embed(pairs[static_cast<std::size_t>(i)].response).transpose();
  }

  ad::ParameterSet params;
  const auto wc = params.add("context_proj", context_proj_);
  const auto wr = params.add("response_proj", response_proj_);
  ad::Adam adam(params, ad::AdamConfig{config.lr});
  ad::Gradients grads(params);

  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(config.seed);
  const auto bs = config.batch_size;
  std::vector<TokenId> diag(bs);
  std::iota(diag.begin(), diag.end(), 0);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start + bs <= order.size(); start += bs) {
      Eigen::MatrixXd bc(static_cast<Eigen::Index>(bs), d), br(static_cast<Eigen::Index>(bs), d);
      for (std::size_t j = 0; j < bs; ++j) {
        bc.row(static_cast<Eigen::Index>(j)) = ctx.row(static_cast<Eigen::Index>(order[start + j]));
        br.row(static_cast<Eigen::Index>(j)) = resp.row(static_cast<Eigen::Index>(order[start + j]));
      }
      grads.zero();
      ad::Tape tape(params, &grads);
      auto pc = tape.l2_normalize_rows(tape.matmul(tape.constant(bc), tape.param(wc)));
      auto pr = tape.l2_normalize_rows(tape.matmul(tape.constant(br), tape.param(wr)));
      auto sims = tape.scale(tape.matmul_nt(pc, pr), 1.0 / config.temperature);
      auto loss = tape.sum(tape.pick(tape.log_softmax_rows(sims), diag));
      tape.seed(loss, -1.0 / static_cast<double>(bs));
      tape.backward();
      adam.step(params, grads);
    }
  }
  context_proj_ = params.value(wc);
  response_proj_ = params.value(wr);
}

void BiEncoderMatcher::save(const std::filesystem::path& path) const {
  std::ostringstream out;
  out.precision(17);
  out << context_proj_.rows() << "\n";
  for (const auto* m : {&context_proj_, &response_proj_}) {
    for (Eigen::Index i = 0; i < m->rows(); ++i) {
      for (Eigen::Index j = 0; j < m->cols(); ++j) out << (j ? " " : "") << (*m)(i, j);
      out << "\n";
    }
  }
  write_file(path, out.str());
}

void BiEncoderMatcher::load(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  Eigen::Index d = 0;
  if (!(in >> d) || d != static_cast<Eigen::Index>(embeddings_->dim()))
    throw FormatError(path.string() + ": projection dimension mismatch");
  for (auto* m : {&context_proj_, &response_proj_}) {
    m->resize(d, d);
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index j = 0; j < d; ++j)
        if (!(in >> (*m)(i, j))) throw FormatError(path.string() + ": truncated projection");
  }
}

namespace {

void check_raw(double raw) {
  if (!(raw >= -1.0 && raw <= 1.0))
    throw DomainError("matching score outside [-1, 1]: " + std::to_string(raw));
}

}  // namespace

double to_positive_weight(double raw) {
  check_raw(raw);
  return std::max(raw, kPositiveWeightFloor);
}

double to_negative_weight(double raw) {
  check_raw(raw);
  return std::min(raw, 0.0);
}

MatchScore make_match_score(double raw, SampleRole role) {
  return MatchScore{raw, role,
                    role == SampleRole::Positive ? to_positive_weight(raw)
                                                 : to_negative_weight(raw)};
}

}  // namespace gcdl
