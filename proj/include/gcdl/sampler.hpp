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

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "gcdl/corpus.hpp"
#include "gcdl/matcher.hpp"

namespace gcdl {

enum class IndexSide { Context, Response };

std::string_view to_string(IndexSide side);

/// Okapi BM25 over one side of a corpus. Document i is pair i. Reserved
/// tokens (turn separators, EOS, UNK) are not indexed.
class Bm25Index {
 public:
  struct Posting {
    PairId doc;
    std::uint32_t tf;
  };

  static Bm25Index build(std::span<const TokenizedPair> pairs, IndexSide side, double k1 = 1.2,
                         double b = 0.75);

  /// Terms of one document of `side` (what build() indexes).
  static TokenSeq document_terms(const TokenizedPair& pair, IndexSide side);

  /// BM25 score of every document for the query; query terms are deduplicated.
  std::vector<double> score_all(std::span<const TokenId> query) const;
  double idf(TokenId term) const;

  std::size_t doc_count() const { return doc_len_.size(); }
  double avg_doc_len() const { return avg_len_; }
  std::uint32_t doc_len(PairId doc) const { return doc_len_.at(static_cast<std::size_t>(doc)); }
  const std::vector<Posting>* postings(TokenId term) const;
  IndexSide side() const { return side_; }
  double k1() const { return k1_; }
  double b() const { return b_; }

  void save(const std::filesystem::path& path) const;
  static Bm25Index load(const std::filesystem::path& path);

 private:
  IndexSide side_ = IndexSide::Context;
  double k1_ = 1.2;
  double b_ = 0.75;
  double avg_len_ = 1.0;
  std::vector<std::uint32_t> doc_len_;
  std::unordered_map<TokenId, std::vector<Posting>> postings_;
};

/// Top-M documents by BM25 score, descending, ties by ascending id, with
/// `exclude` removed. Zero-scoring documents are ranked too.
std::vector<PairId> retrieve(const Bm25Index& index, std::span<const TokenId> query,
                             std::size_t m, PairId exclude);

enum class EntrySource { Anchor, ResponseSide, ContextSide, RandomPad };

std::string_view to_string(EntrySource source);
EntrySource entry_source_from_string(std::string_view name);

/// One (context, response) combination scored for a group.
struct GroupEntry {
  PairId context_id = 0;
  PairId response_id = 0;
  double raw = 0.0;     // matcher output
  double weight = 0.0;  // s+ for positives, s- for negatives
  EntrySource source = EntrySource::Anchor;

  bool operator==(const GroupEntry&) const = default;
};

/// Anchor pair plus 2k+1 positives (anchor first) and 2k negatives.
/// Positives list response-side then context-side picks, best first;
/// negatives list response-side then context-side picks, worst first.
struct ContrastiveGroup {
  PairId anchor = 0;
  std::vector<GroupEntry> positives;
  std::vector<GroupEntry> negatives;

  bool operator==(const ContrastiveGroup&) const = default;
};

struct SamplerConfig {
  std::size_t k = 3;
  std::size_t pool = 100;  // M
  std::size_t pad = 50;
  std::uint64_t seed = 0;

  void validate() const;
};

struct IndexPair {
  Bm25Index context;
  Bm25Index response;
};

IndexPair build_indexes(std::span<const TokenizedPair> pairs, double k1 = 1.2, double b = 0.75);

/// Uniform random pad ids for an anchor, deterministic in (seed, anchor).
std::vector<PairId> random_pad(PairId anchor, std::size_t corpus_size, std::size_t count,
                               std::uint64_t seed);

/// Contrastive dual sampling for one anchor. Throws DomainError when the
/// corpus cannot supply k positives and k disjoint negatives per side.
ContrastiveGroup dual_sample(const TokenizedPair& anchor, std::span<const TokenizedPair> pairs,
                             const IndexPair& indexes, const Matcher& matcher,
                             const SamplerConfig& config);

/// Returns a description of the first violated group invariant, or empty.
std::string check_group(const ContrastiveGroup& group, std::size_t k, std::size_t corpus_size);

std::vector<ContrastiveGroup> sample_groups(std::span<const TokenizedPair> pairs,
                                            const IndexPair& indexes, const Matcher& matcher,
                                            const SamplerConfig& config,
                                            std::size_t workers = 1);

std::string serialize_group(const ContrastiveGroup& group);
ContrastiveGroup parse_group(std::string_view line);

/// Samples one group per pair and writes them, in anchor order, as one JSON
/// record per line.
void sample_corpus(std::span<const TokenizedPair> pairs, const IndexPair& indexes,
                   const Matcher& matcher, const SamplerConfig& config,
                   const std::filesystem::path& out, std::size_t workers = 1);

void save_groups(const std::filesystem::path& path, std::span<const ContrastiveGroup> groups);
std::vector<ContrastiveGroup> load_groups(const std::filesystem::path& path);

}  // namespace gcdl
