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

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "gcdl/synthbench.hpp"
#include "test_util.hpp"

namespace gcdl {
namespace {

using testing::TempDir;

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

TEST(EmbedUtterance, SingleTokenIsItsVector) {
  EmbeddingTable t(2);
  t.set("u", vec({0.3, -0.7}));
  const std::vector<std::string> toks = {"u"};
  EXPECT_TRUE(embed_utterance(toks, t).isApprox(vec({0.3, -0.7})));
}

TEST(EmbedUtterance, RepeatedTokenIsIdempotent) {
  EmbeddingTable t(2);
  t.set("u", vec({0.3, -0.7}));
  const std::vector<std::string> one = {"u"}, two = {"u", "u"};
  EXPECT_TRUE(embed_utterance(two, t).isApprox(embed_utterance(one, t)));
}

TEST(EmbedUtterance, MeanOfTwo) {
  EmbeddingTable t(2);
  t.set("u", vec({1, 0}));
  t.set("v", vec({0, 1}));
  const std::vector<std::string> toks = {"u", "v"};
  EXPECT_TRUE(embed_utterance(toks, t).isApprox(vec({0.5, 0.5})));
}

TEST(EmbedUtterance, EmptyThrows) {
  EmbeddingTable t(2);
  EXPECT_THROW(embed_utterance(std::vector<std::string>{}, t), DomainError);
}

TEST(EmbeddingTable, Word2VecRoundTrip) {
  TempDir dir;
  EmbeddingTable t(3);
  t.set("a", vec({1, 2, 3}));
  t.set("b", vec({-1, 0.5, 0.25}));
  t.save_word2vec(dir / "e.txt");
  const auto back = EmbeddingTable::load_word2vec(dir / "e.txt");
  EXPECT_EQ(back.size(), 2u);
  EXPECT_EQ(back.lookup("a"), t.lookup("a"));
  EXPECT_EQ(back.lookup("b"), t.lookup("b"));
}

TEST(EmbeddingTable, MalformedFileThrows) {
  TempDir dir;
  write_file(dir / "e.txt", "2 3\na 1 2\n");
  EXPECT_THROW(EmbeddingTable::load_word2vec(dir / "e.txt"), FormatError);
}

struct Toy {
  Vocab vocab;
  EmbeddingTable table{4};
  std::shared_ptr<const VocabEmbeddings> emb;
};

Toy toy() {
  Toy t;
  std::vector<DialoguePair> pairs(1);
  pairs[0].context = {"a b c d e f g h"};
  pairs[0].response = "a";
  t.vocab = Vocab::build(pairs, 100, 1);
  const char* words[] = {"a", "b", "c", "d", "e", "f", "g", "h"};
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0, 1);
  for (const char* w : words) t.table.set(w, vec({n(rng), n(rng), n(rng), n(rng)}));
  t.table.set("a", vec({1, 0, 0, 0}));
  t.table.set("b", vec({0, 1, 0, 0}));
  t.emb = std::make_shared<VocabEmbeddings>(t.table, t.vocab);
  return t;
}

TEST(CosineMatcher, IdenticalTextScoresOne) {
  const Toy t = toy();
  CosineMatcher m(t.emb);
  const TokenSeq s = {t.vocab.id("c"), t.vocab.id("d")};
  TokenSeq r = s;
  r.push_back(kEos);
  EXPECT_NEAR(m.score(s, r), 1.0, 1e-12);
}

TEST(CosineMatcher, OrthogonalScoresZero) {
  const Toy t = toy();
  CosineMatcher m(t.emb);
  const TokenSeq c = {t.vocab.id("a")};
  const TokenSeq r = {t.vocab.id("b"), kEos};
  EXPECT_NEAR(m.score(c, r), 0.0, 1e-12);
}

TEST(CosineMatcher, EmptyInputThrows) {
  const Toy t = toy();
  CosineMatcher m(t.emb);
  EXPECT_THROW(m.score(TokenSeq{}, TokenSeq{t.vocab.id("a")}), DomainError);
}

// Ranking of ten candidate responses agrees with a cosine coded from scratch.
TEST(CosineMatcher, RankingMatchesOracle) {
  const Toy t = toy();
  CosineMatcher m(t.emb);
  std::mt19937_64 rng(4);
  const char* words[] = {"a", "b", "c", "d", "e", "f", "g", "h"};
  auto random_utt = [&] {
    std::vector<std::string> u;
    for (std::size_t i = 0; i < 1 + rng() % 4; ++i) u.push_back(words[rng() % 8]);
    return u;
  };
  auto oracle_mean = [&](const std::vector<std::string>& u) {
    std::vector<double> acc(4, 0.0);
    for (const auto& w : u)
      for (int d = 0; d < 4; ++d) acc[static_cast<std::size_t>(d)] += t.table.lookup(w)(d);
    for (double& x : acc) x /= static_cast<double>(u.size());
    return acc;
  };
  auto oracle_cos = [](const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      dot += a[i] * b[i];
      na += a[i] * a[i];
      nb += b[i] * b[i];
    }
    return dot / std::sqrt(na * nb);
  };
  auto ids = [&](const std::vector<std::string>& u) {
    TokenSeq s;
    for (const auto& w : u) s.push_back(t.vocab.id(w));
    return s;
  };
  const auto context = random_utt();
  std::vector<std::vector<std::string>> responses;
  for (int i = 0; i < 10; ++i) responses.push_back(random_utt());
  std::vector<double> got, want;
  for (const auto& r : responses) {
    got.push_back(m.score(ids(context), ids(r)));
    want.push_back(oracle_cos(oracle_mean(context), oracle_mean(r)));
  }
  std::vector<std::size_t> rg(10), rw(10);
  std::iota(rg.begin(), rg.end(), 0);
  std::iota(rw.begin(), rw.end(), 0);
  auto by = [](const std::vector<double>& s) {
    return [&s](std::size_t a, std::size_t b) { return s[a] > s[b] || (s[a] == s[b] && a < b); };
  };
  std::stable_sort(rg.begin(), rg.end(), by(got));
  std::stable_sort(rw.begin(), rw.end(), by(want));
  for (std::size_t i = 0; i < 10; ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
  EXPECT_EQ(rg, rw);
}

TEST(CosineMatcher, BitIdenticalRepeats) {
  const Toy t = toy();
  CosineMatcher m(t.emb);
  const TokenSeq c = {t.vocab.id("c"), t.vocab.id("e")};
  const TokenSeq r = {t.vocab.id("f"), kEos};
  const double a = m.score(c, r);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(m.score(c, r), a);
}

TEST(Weights, Examples) {
  EXPECT_DOUBLE_EQ(to_positive_weight(0.8), 0.8);
  EXPECT_DOUBLE_EQ(to_positive_weight(-0.3), 0.05);
  EXPECT_DOUBLE_EQ(to_negative_weight(0.2), 0.0);
  EXPECT_DOUBLE_EQ(to_negative_weight(-0.4), -0.4);
  EXPECT_THROW(to_positive_weight(1.5), DomainError);
  EXPECT_THROW(to_negative_weight(-1.01), DomainError);
}

TEST(Weights, RangeAndMonotoneProperty) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 2000; ++i) {
    double a = u(rng), b = u(rng);
    if (a > b) std::swap(a, b);
    const auto pa = make_match_score(a, SampleRole::Positive);
    const auto na = make_match_score(a, SampleRole::Negative);
    EXPECT_GT(pa.weighted, 0.0);
    EXPECT_LE(pa.weighted, 1.0);
    EXPECT_GE(na.weighted, -1.0);
    EXPECT_LE(na.weighted, 0.0);
    EXPECT_LE(to_positive_weight(a), to_positive_weight(b));
    EXPECT_LE(to_negative_weight(a), to_negative_weight(b));
  }
}

struct SynthToy {
  std::vector<TokenizedPair> pairs;
  Vocab vocab;
  std::shared_ptr<const VocabEmbeddings> emb;
};

SynthToy synth_toy() {
  SynthSpec spec;
  spec.train_size = 400;
  spec.valid_size = 20;
  spec.test_size = 20;
  spec.embedding_dim = 16;
  spec.seed = 2;
  const SynthCorpus c = make_corpus(spec);
  SynthToy t;
  t.vocab = Vocab::build(c.train, 1000, 1);
  t.pairs = tokenize_all(c.train, t.vocab);
  t.emb = std::make_shared<VocabEmbeddings>(c.embeddings, t.vocab);
  return t;
}

TEST(BiEncoder, UntrainedEqualsCosine) {
  const SynthToy t = synth_toy();
  BiEncoderMatcher bi(t.emb);
  CosineMatcher cos(t.emb);
  for (std::size_t i = 0; i < 20; ++i)
    EXPECT_NEAR(bi.score(t.pairs[i].context, t.pairs[(i * 7) % 400].response),
                cos.score(t.pairs[i].context, t.pairs[(i * 7) % 400].response), 1e-12);
}

TEST(BiEncoder, TrainingSeparatesTrueFromShuffledPairs) {
  const SynthToy t = synth_toy();
  BiEncoderMatcher bi(t.emb);
  BiEncoderConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 32;
  cfg.lr = 0.01;
  bi.train(t.pairs, cfg);
  double truth = 0.0, shuffled = 0.0;
  for (std::size_t i = 0; i < t.pairs.size(); ++i) {
    truth += bi.score(t.pairs[i].context, t.pairs[i].response);
    shuffled += bi.score(t.pairs[i].context, t.pairs[(i * 131 + 17) % t.pairs.size()].response);
  }
  EXPECT_GT(truth, shuffled);

  // Context and response projections differ after training, so the score
  // depends on argument order.
  TokenSeq c = t.pairs[0].context;
  TokenSeq r = t.pairs[0].response;
  r.pop_back();
  TokenSeq c_as_r = c;
  c_as_r.push_back(kEos);
  EXPECT_NE(bi.score(c, t.pairs[0].response), bi.score(r, c_as_r));
}

TEST(BiEncoder, SaveLoadRoundTrip) {
  TempDir dir;
  const SynthToy t = synth_toy();
  BiEncoderMatcher bi(t.emb);
  BiEncoderConfig cfg;
  cfg.epochs = 1;
  bi.train(t.pairs, cfg);
  bi.save(dir / "m.txt");
  BiEncoderMatcher back(t.emb);
  back.load(dir / "m.txt");
  EXPECT_EQ(back.context_projection(), bi.context_projection());
  EXPECT_EQ(back.response_projection(), bi.response_projection());
}

TEST(BiEncoder, TooFewPairsThrows) {
  const SynthToy t = synth_toy();
  BiEncoderMatcher bi(t.emb);
  BiEncoderConfig cfg;
  cfg.batch_size = 32;
  EXPECT_THROW(bi.train(std::span<const TokenizedPair>(t.pairs).first(63), cfg), DomainError);
}

}  // namespace
}  // namespace gcdl
