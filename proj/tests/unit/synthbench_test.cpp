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

#include "gcdl/synthbench.hpp"

#include <gtest/gtest.h>

#include "gcdl/sampler.hpp"
#include "test_util.hpp"

namespace gcdl {
namespace {

using testing::TempDir;

TEST(Relation, FanoutsAndGenericValidity) {
  const SynthSpec spec;
  const RelationTable t = build_relation(spec);
  EXPECT_EQ(t.contexts().size(), spec.topics * spec.contexts_per_response);
  for (std::size_t c = 0; c < t.contexts().size(); ++c) {
    EXPECT_EQ(t.topical_fanout(c), 5u);
    EXPECT_TRUE(t.valid().count({c, t.generic_response()}));
  }
  for (std::size_t r = 0; r < t.responses().size(); ++r)
    if (r != t.generic_response()) EXPECT_EQ(t.reverse_fanout(r), 3u);
}

TEST(Relation, SerializeParseRoundTrip) {
  const RelationTable t = build_relation(SynthSpec{});
  const RelationTable back = RelationTable::parse(t.serialize());
  EXPECT_EQ(back.serialize(), t.serialize());
  EXPECT_EQ(back.valid(), t.valid());
}

TEST(Corpus, EveryPairInTableAndExactGenericCount) {
  SynthSpec spec;
  spec.train_size = 1000;
  spec.embedding_dim = 8;
  const SynthCorpus c = make_corpus(spec);
  ASSERT_EQ(c.train.size(), 1000u);
  EXPECT_EQ(generic_count(0.4, 1000), 400u);
  for (const auto* split : {&c.train, &c.valid, &c.test}) {
    std::size_t generic = 0;
    for (const auto& p : *split) {
      EXPECT_TRUE(c.relation.is_valid(p.context, p.response));
      generic += p.response == kGenericResponse ? 1 : 0;
    }
    EXPECT_EQ(generic, generic_count(spec.generic_rate, split->size()));
  }
  EXPECT_EQ(c.valid.size(), spec.valid_size);
  EXPECT_EQ(c.test.size(), spec.test_size);
}

TEST(Corpus, SameSeedByteIdentical) {
  TempDir a, b;
  SynthSpec spec;
  spec.train_size = 300;
  spec.embedding_dim = 8;
  generate_corpus(spec, a.path());
  generate_corpus(spec, b.path());
  for (const char* f : {"train.jsonl", "valid.jsonl", "test.jsonl", "relation.json",
                        "embeddings.txt", "metadata.json"})
    EXPECT_EQ(read_file(a / f), read_file(b / f)) << f;
  spec.seed = 1;
  TempDir c;
  generate_corpus(spec, c.path());
  EXPECT_NE(read_file(a / "train.jsonl"), read_file(c / "train.jsonl"));
}

TEST(Corpus, VocabularyTooSmallThrows) {
  SynthSpec spec;
  spec.vocab_size = 40;
  EXPECT_THROW(spec.validate(), DomainError);
  EXPECT_THROW(make_corpus(spec), DomainError);
}

TEST(OracleRelation, ForeignAndTamperedCorporaRejected) {
  TempDir dir;
  write_file(dir / "train.jsonl", "");
  EXPECT_THROW(oracle_relation(dir.path()), FormatError);

  SynthSpec spec;
  spec.train_size = 200;
  spec.embedding_dim = 8;
  generate_corpus(spec, dir.path());
  const RelationTable t = oracle_relation(dir.path());
  EXPECT_EQ(t.serialize(), build_relation(spec).serialize());
  write_file(dir / "train.jsonl", read_file(dir / "train.jsonl") + "\n");
  EXPECT_THROW(oracle_relation(dir.path()), FormatError);
}

// Positive precision of a sampled cache against the table, counted by hand.
TEST(OracleRelation, SamplerPositivePrecision) {
  SynthSpec spec;
  spec.train_size = 200;
  spec.embedding_dim = 16;
  const SynthCorpus c = make_corpus(spec);
  const Vocab vocab = Vocab::build(c.train, 1000, 1);
  const auto pairs = tokenize_all(c.train, vocab);
  auto emb = std::make_shared<VocabEmbeddings>(c.embeddings, vocab);
  CosineMatcher m(emb);
  const auto groups = sample_groups(pairs, build_indexes(pairs), m, SamplerConfig{});
  std::size_t total = 0, hits = 0;
  for (const auto& g : groups)
    for (const auto& e : g.positives) {
      if (e.source == EntrySource::Anchor) continue;
      ++total;
      hits += c.relation.is_valid(c.train[static_cast<std::size_t>(e.context_id)].context,
                                  c.train[static_cast<std::size_t>(e.response_id)].response);
    }
  ASSERT_EQ(total, 200u * 6u);
  const double precision = static_cast<double>(hits) / static_cast<double>(total);
  EXPECT_GE(precision, 0.5);
  EXPECT_LE(precision, 1.0);
  // Every anchor itself is a true positive.
  for (const auto& p : c.train) EXPECT_TRUE(c.relation.is_valid(p.context, p.response));
}

}  // namespace
}  // namespace gcdl
