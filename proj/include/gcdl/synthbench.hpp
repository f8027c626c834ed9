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

// Synthetic multi-mapping dialogue corpora with a known relation table.
//
// Every topic owns a pool of pseudo-words. Within a topic, each of
// `contexts_per_response` contexts is validly answered by each of
// `responses_per_context` responses (a complete bipartite block), and one
// generic response is valid for every context. All responses share a
// scaffold ("well , i do ... about that one .") and differ in one verb slot
// and one topic word; the generic reply fills the slots with "not know".

#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "gcdl/corpus.hpp"
#include "gcdl/matcher.hpp"

namespace gcdl {

struct SynthSpec {
  std::size_t topics = 20;
  std::size_t responses_per_context = 5;  // one-to-many fanout
  std::size_t contexts_per_response = 3;  // many-to-one fanout
  double generic_rate = 0.4;
  std::size_t vocab_size = 200;  // topic content words across all topics
  std::uint64_t seed = 0;
  std::size_t train_size = 1600;
  std::size_t valid_size = 200;
  std::size_t test_size = 200;
  std::size_t embedding_dim = 300;

  void validate() const;
};

inline constexpr const char* kGenericResponse = "well , i do not know about that one .";

/// Ground-truth matching structure of a generated corpus.
class RelationTable {
 public:
  struct Context {
    std::vector<std::string> turns;
    int topic = 0;
  };
  struct Response {
    std::string text;
    int topic = -1;  // -1 for the generic response
  };

  const std::vector<Context>& contexts() const { return contexts_; }
  const std::vector<Response>& responses() const { return responses_; }
  const std::set<std::pair<std::size_t, std::size_t>>& valid() const { return valid_; }
  std::size_t generic_response() const { return generic_; }

  std::optional<std::size_t> context_index(const std::vector<std::string>& turns) const;
  std::optional<std::size_t> response_index(const std::string& text) const;

  /// True when (context, response) is a valid combination. Unknown
  /// utterances are invalid.
  bool is_valid(const std::vector<std::string>& context, const std::string& response) const;
  /// Number of valid responses of context `c`, excluding the generic one.
  std::size_t topical_fanout(std::size_t context) const;
  /// Number of contexts for which topical response `r` is valid.
  std::size_t reverse_fanout(std::size_t response) const;

  std::string serialize() const;
  static RelationTable parse(std::string_view text);

 private:
  friend RelationTable build_relation(const SynthSpec& spec);

  std::vector<Context> contexts_;
  std::vector<Response> responses_;
  std::set<std::pair<std::size_t, std::size_t>> valid_;
  std::size_t generic_ = 0;
};

RelationTable build_relation(const SynthSpec& spec);

struct SynthCorpus {
  std::vector<DialoguePair> train;
  std::vector<DialoguePair> valid;
  std::vector<DialoguePair> test;
  RelationTable relation;
  EmbeddingTable embeddings{1};
};

/// Deterministic in the spec. Throws DomainError when the word budget cannot
/// cover the topics.
SynthCorpus make_corpus(const SynthSpec& spec);

/// Writes train.jsonl, valid.jsonl, test.jsonl, relation.json,
/// embeddings.txt and metadata.json into `dir`.
void generate_corpus(const SynthSpec& spec, const std::filesystem::path& dir);

/// Loads the relation table of a generated corpus directory. Throws
/// FormatError when the directory was not produced by generate_corpus or its
/// files no longer match the recorded fingerprints.
RelationTable oracle_relation(const std::filesystem::path& dir);

/// Number of generic-response pairs that a split of `size` pairs receives.
std::size_t generic_count(double rate, std::size_t size);

}  // namespace gcdl
