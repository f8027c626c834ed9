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

#include "gcdl/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <random>
#include <set>
#include <sstream>
#include <unordered_set>

namespace gcdl {

using nlohmann::json;

std::string_view to_string(IndexSide side) {
  return side == IndexSide::Context ? "context" : "response";
}

// ---------------------------------------------------------------------------
// BM25

TokenSeq Bm25Index::document_terms(const TokenizedPair& pair, IndexSide side) {
  const TokenSeq& src = side == IndexSide::Context ? pair.context : pair.response;
  TokenSeq terms;
  terms.reserve(src.size());
  for (TokenId t : src)
    if (!is_reserved(t)) terms.push_back(t);
  return terms;
}

Bm25Index Bm25Index::build(std::span<const TokenizedPair> pairs, IndexSide side, double k1,
                           double b) {
  if (pairs.empty()) throw DomainError("build_index: no pairs");
  Bm25Index index;
  index.side_ = side;
  index.k1_ = k1;
  index.b_ = b;
  index.doc_len_.reserve(pairs.size());
  double total = 0.0;
  for (std::size_t doc = 0; doc < pairs.size(); ++doc) {
    if (pairs[doc].id != static_cast<PairId>(doc))
      throw DomainError("build_index: pair ids must be dense and ordered");
    const TokenSeq terms = document_terms(pairs[doc], side);
    std::map<TokenId, std::uint32_t> tf;
    for (TokenId t : terms) ++tf[t];
    for (const auto& [term, count] : tf)
      index.postings_[term].push_back(Posting{static_cast<PairId>(doc), count});
    index.doc_len_.push_back(static_cast<std::uint32_t>(terms.size()));
    total += static_cast<double>(terms.size());
  }
  index.avg_len_ = total > 0 ? total / static_cast<double>(pairs.size()) : 1.0;
  return index;
}

const std::vector<Bm25Index::Posting>* Bm25Index::postings(TokenId term) const {
  auto it = postings_.find(term);
  return it == postings_.end() ? nullptr : &it->second;
}

double Bm25Index::idf(TokenId term) const {
  const auto* list = postings(term);
  const double df = list ? static_cast<double>(list->size()) : 0.0;
  const double n = static_cast<double>(doc_count());
  return std::log((n - df + 0.5) / (df + 0.5) + 1.0);
}

std::vector<double> Bm25Index::score_all(std::span<const TokenId> query) const {
  std::vector<double> scores(doc_count(), 0.0);
  std::set<TokenId> terms(query.begin(), query.end());
  for (TokenId term : terms) {
    const auto* list = postings(term);
    if (!list) continue;
    const double w = idf(term);
    for (const auto& p : *list) {
      const double tf = p.tf;
      const double len = doc_len_[static_cast<std::size_t>(p.doc)];
      scores[static_cast<std::size_t>(p.doc)] +=
          w * tf * (k1_ + 1.0) / (tf + k1_ * (1.0 - b_ + b_ * len / avg_len_));
    }
  }
  return scores;
}

void Bm25Index::save(const std::filesystem::path& path) const {
  json postings = json::array();
  std::vector<TokenId> terms;
  for (const auto& [t, _] : postings_) terms.push_back(t);
  std::sort(terms.begin(), terms.end());
  for (TokenId t : terms) {
    json list = json::array();
    for (const auto& p : postings_.at(t)) list.push_back({p.doc, p.tf});
    postings.push_back({{"term", t}, {"docs", std::move(list)}});
  }
  json doc = {{"side", to_string(side_)}, {"k1", k1_},       {"b", b_},
              {"avg_len", avg_len_},      {"doc_len", doc_len_}, {"postings", std::move(postings)}};
  write_file(path, doc.dump() + "\n");
}

Bm25Index Bm25Index::load(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(read_file(path));
    Bm25Index index;
    const auto side = doc.at("side").get<std::string>();
    if (side != "context" && side != "response") throw FormatError("bad side " + side);
    index.side_ = side == "context" ? IndexSide::Context : IndexSide::Response;
    index.k1_ = doc.at("k1").get<double>();
    index.b_ = doc.at("b").get<double>();
    index.avg_len_ = doc.at("avg_len").get<double>();
    index.doc_len_ = doc.at("doc_len").get<std::vector<std::uint32_t>>();
    for (const auto& entry : doc.at("postings")) {
      auto& list = index.postings_[entry.at("term").get<TokenId>()];
      for (const auto& p : entry.at("docs")) {
        const auto d = p.at(0).get<PairId>();
        if (d < 0 || static_cast<std::size_t>(d) >= index.doc_len_.size())
          throw FormatError("posting references unknown document");
        list.push_back(Posting{d, p.at(1).get<std::uint32_t>()});
      }
    }
    return index;
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": malformed index: " + e.what());
  }
}

std::vector<PairId> retrieve(const Bm25Index& index, std::span<const TokenId> query,
                             std::size_t m, PairId exclude) {
  const std::vector<double> scores = index.score_all(query);
  std::vector<PairId> ids;
  ids.reserve(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (static_cast<PairId>(i) != exclude) ids.push_back(static_cast<PairId>(i));
  const std::size_t keep = std::min(m, ids.size());
  auto better = [&](PairId a, PairId b) {
    const double sa = scores[static_cast<std::size_t>(a)];
    const double sb = scores[static_cast<std::size_t>(b)];
    if (sa != sb) return sa > sb;
    return a < b;
  };
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(keep), ids.end(),
                    better);
  ids.resize(keep);
  return ids;
}

// ---------------------------------------------------------------------------
// Groups

std::string_view to_string(EntrySource source) {
  switch (source) {
    case EntrySource::Anchor: return "anchor";
    case EntrySource::ResponseSide: return "response";
    case EntrySource::ContextSide: return "context";
    case EntrySource::RandomPad: return "pad";
  }
  return "anchor";
}

EntrySource entry_source_from_string(std::string_view name) {
  if (name == "anchor") return EntrySource::Anchor;
  if (name == "response") return EntrySource::ResponseSide;
  if (name == "context") return EntrySource::ContextSide;
  if (name == "pad") return EntrySource::RandomPad;
  throw FormatError("unknown entry source: " + std::string(name));
}

void SamplerConfig::validate() const {
  if (k < 1) throw DomainError("sampler.k must be >= 1");
  if (pool < 2 * k) throw DomainError("sampler.pool must be >= 2k");
}

IndexPair build_indexes(std::span<const TokenizedPair> pairs, double k1, double b) {
  return IndexPair{Bm25Index::build(pairs, IndexSide::Context, k1, b),
                   Bm25Index::build(pairs, IndexSide::Response, k1, b)};
}

std::vector<PairId> random_pad(PairId anchor, std::size_t corpus_size, std::size_t count,
                               std::uint64_t seed) {
  std::vector<PairId> out;
  if (corpus_size < 2) return out;
  std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(anchor)));
  std::uniform_int_distribution<PairId> pick(0, static_cast<PairId>(corpus_size) - 2);
  std::unordered_set<PairId> seen;
  for (std::size_t i = 0; i < count; ++i) {
    PairId id = pick(rng);
    if (id >= anchor) ++id;  // skip the anchor itself
    if (seen.insert(id).second) out.push_back(id);
  }
  return out;
}

namespace {

struct Scored {
  PairId id;
  double raw;
  bool retrieved;
};

// Picks k positives and k negatives for one side. `score_of(j)` scores
// candidate pair j against the anchor.
template <typename ScoreFn>
void sample_side(PairId anchor, const std::vector<PairId>& retrieved,
                 const std::vector<PairId>& pad, std::size_t k, EntrySource source,
                 ScoreFn score_of, std::vector<GroupEntry>& positives,
                 std::vector<GroupEntry>& negatives) {
  auto make_entry = [&](const Scored& s, SampleRole role) {
    GroupEntry e;
    if (source == EntrySource::ResponseSide) {
      e.context_id = anchor;
      e.response_id = s.id;
    } else {
      e.context_id = s.id;
      e.response_id = anchor;
    }
    e.raw = s.raw;
    e.weight = make_match_score(s.raw, role).weighted;
    e.source = s.retrieved ? source : EntrySource::RandomPad;
    return e;
  };

  std::vector<Scored> ranked;
  ranked.reserve(retrieved.size());
  for (PairId j : retrieved) ranked.push_back({j, score_of(j), true});
  if (ranked.size() < k)
    throw DomainError("anchor " + std::to_string(anchor) + ": only " +
                      std::to_string(ranked.size()) + " " + std::string(to_string(source)) +
                      "-side candidates for k=" + std::to_string(k));
  std::sort(ranked.begin(), ranked.end(), [](const Scored& a, const Scored& b) {
    if (a.raw != b.raw) return a.raw > b.raw;
    return a.id < b.id;
  });
  std::unordered_set<PairId> taken;
  for (std::size_t i = 0; i < k; ++i) {
    positives.push_back(make_entry(ranked[i], SampleRole::Positive));
    taken.insert(ranked[i].id);
  }

  std::vector<Scored> pool;
  std::unordered_set<PairId> in_pool;
  for (std::size_t i = k; i < ranked.size(); ++i) {
    pool.push_back(ranked[i]);
    in_pool.insert(ranked[i].id);
  }
  for (PairId j : pad) {
    if (j == anchor || taken.count(j) || in_pool.count(j)) continue;
    pool.push_back({j, score_of(j), false});
    in_pool.insert(j);
  }
  if (pool.size() < k)
    throw DomainError("anchor " + std::to_string(anchor) + ": corpus too small for " +
                      std::to_string(k) + " distinct " + std::string(to_string(source)) +
                      "-side negatives");
  std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k), pool.end(),
                    [](const Scored& a, const Scored& b) {
                      if (a.raw != b.raw) return a.raw < b.raw;
                      return a.id < b.id;
                    });
  for (std::size_t i = 0; i < k; ++i) negatives.push_back(make_entry(pool[i], SampleRole::Negative));
}

}  // namespace

ContrastiveGroup dual_sample(const TokenizedPair& anchor, std::span<const TokenizedPair> pairs,
                             const IndexPair& indexes, const Matcher& matcher,
                             const SamplerConfig& config) {
  config.validate();
  const auto a = anchor.id;
  if (a < 0 || static_cast<std::size_t>(a) >= pairs.size())
    throw DomainError("anchor id outside corpus");

  ContrastiveGroup group;
  group.anchor = a;
  group.positives.push_back(GroupEntry{a, a, 1.0, 1.0, EntrySource::Anchor});

  const auto pad = random_pad(a, pairs.size(), config.pad, config.seed);

  std::vector<GroupEntry> resp_pos, resp_neg, ctx_pos, ctx_neg;
  const auto by_context = retrieve(indexes.context, anchor.context, config.pool, a);
  sample_side(a, by_context, pad, config.k, EntrySource::ResponseSide,
              [&](PairId j) {
                return matcher.score(anchor.context, pairs[static_cast<std::size_t>(j)].response);
              },
              resp_pos, resp_neg);

  const auto by_response = retrieve(
      indexes.response, Bm25Index::document_terms(anchor, IndexSide::Response), config.pool, a);
  sample_side(a, by_response, pad, config.k, EntrySource::ContextSide,
              [&](PairId j) {
                return matcher.score(pairs[static_cast<std::size_t>(j)].context, anchor.response);
              },
              ctx_pos, ctx_neg);

  group.positives.insert(group.positives.end(), resp_pos.begin(), resp_pos.end());
  group.positives.insert(group.positives.end(), ctx_pos.begin(), ctx_pos.end());
  group.negatives.insert(group.negatives.end(), resp_neg.begin(), resp_neg.end());
  group.negatives.insert(group.negatives.end(), ctx_neg.begin(), ctx_neg.end());
  return group;
}

std::string check_group(const ContrastiveGroup& group, std::size_t k, std::size_t corpus_size) {
  std::ostringstream err;
  if (group.positives.size() != 2 * k + 1) {
    err << "anchor " << group.anchor << ": " << group.positives.size() << " positives, expected "
        << 2 * k + 1;
    return err.str();
  }
  if (group.negatives.size() != 2 * k) {
    err << "anchor " << group.anchor << ": " << group.negatives.size() << " negatives, expected "
        << 2 * k;
    return err.str();
  }
  std::size_t anchors = 0;
  std::set<std::pair<PairId, PairId>> seen;
  auto in_corpus = [&](PairId id) { return id >= 0 && static_cast<std::size_t>(id) < corpus_size; };
  for (const auto* list : {&group.positives, &group.negatives}) {
    const bool positive = list == &group.positives;
    for (const auto& e : *list) {
      if (!in_corpus(e.context_id) || !in_corpus(e.response_id)) {
        err << "anchor " << group.anchor << ": entry references a pair outside the corpus";
        return err.str();
      }
      if (!seen.insert({e.context_id, e.response_id}).second) {
        err << "anchor " << group.anchor << ": duplicate combination (" << e.context_id << ", "
            << e.response_id << ")";
        return err.str();
      }
      if (e.context_id == group.anchor && e.response_id == group.anchor) {
        if (!positive) {
          err << "anchor " << group.anchor << ": anchor pair listed as a negative";
          return err.str();
        }
        ++anchors;
      }
      const bool ok = positive ? (e.weight > 0.0 && e.weight <= 1.0)
                               : (e.weight >= -1.0 && e.weight <= 0.0);
      if (!ok || !(e.raw >= -1.0 && e.raw <= 1.0)) {
        err << "anchor " << group.anchor << ": weight " << e.weight << " / raw " << e.raw
            << " out of range for a " << (positive ? "positive" : "negative");
        return err.str();
      }
    }
  }
  if (anchors != 1) {
    err << "anchor " << group.anchor << ": anchor pair appears " << anchors << " times";
    return err.str();
  }
  return {};
}

std::vector<ContrastiveGroup> sample_groups(std::span<const TokenizedPair> pairs,
                                            const IndexPair& indexes, const Matcher& matcher,
                                            const SamplerConfig& config, std::size_t workers) {
  config.validate();
  std::vector<ContrastiveGroup> groups(pairs.size());
  parallel_for(pairs.size(), workers, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i)
      groups[i] = dual_sample(pairs[i], pairs, indexes, matcher, config);
  });
  return groups;
}

std::string serialize_group(const ContrastiveGroup& group) {
  auto entries = [](const std::vector<GroupEntry>& list) {
    json out = json::array();
    for (const auto& e : list)
      out.push_back({{"context_id", e.context_id},
                     {"response_id", e.response_id},
                     {"raw", e.raw},
                     {"weight", e.weight},
                     {"source", to_string(e.source)}});
    return out;
  };
  json record = {{"anchor_id", group.anchor},
                 {"positives", entries(group.positives)},
                 {"negatives", entries(group.negatives)}};
  return record.dump();
}

ContrastiveGroup parse_group(std::string_view line) {
  try {
    const json record = json::parse(line);
    ContrastiveGroup group;
    group.anchor = record.at("anchor_id").get<PairId>();
    auto entries = [](const json& list) {
      std::vector<GroupEntry> out;
      for (const auto& e : list) {
        GroupEntry g;
        g.context_id = e.at("context_id").get<PairId>();
        g.response_id = e.at("response_id").get<PairId>();
        g.weight = e.at("weight").get<double>();
        g.raw = e.contains("raw") ? e.at("raw").get<double>() : g.weight;
        g.source = entry_source_from_string(e.at("source").get<std::string>());
        out.push_back(g);
      }
      return out;
    };
    group.positives = entries(record.at("positives"));
    group.negatives = entries(record.at("negatives"));
    return group;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed group record: ") + e.what());
  }
}

void save_groups(const std::filesystem::path& path, std::span<const ContrastiveGroup> groups) {
  std::string out;
  for (const auto& g : groups) {
    out += serialize_group(g);
    out += '\n';
  }
  write_file(path, out);
}

std::vector<ContrastiveGroup> load_groups(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::vector<ContrastiveGroup> groups;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      groups.push_back(parse_group(line));
    } catch (const FormatError& e) {
      throw FormatError(path.string() + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return groups;
}

void sample_corpus(std::span<const TokenizedPair> pairs, const IndexPair& indexes,
                   const Matcher& matcher, const SamplerConfig& config,
                   const std::filesystem::path& out, std::size_t workers) {
  const auto groups = sample_groups(pairs, indexes, matcher, config, workers);
  save_groups(out, groups);
}

}  // namespace gcdl
