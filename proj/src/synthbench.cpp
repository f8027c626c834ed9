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

#include <algorithm>
#include <cmath>
#include <map>
#include <nlohmann/json.hpp>
#include <numeric>
#include <random>
#include <unordered_set>

namespace gcdl {

namespace {

constexpr const char* kGeneratorTag = "gcdl-synthbench";

// Verb slot of topical responses; response j of a topic uses kVerbs[j % size].
const std::vector<std::string> kVerbs = {"like", "love", "enjoy", "prefer", "miss",
                                         "want", "need", "remember"};
const std::vector<std::string> kScaffold = {"well", ",", "i", "do", "about", "that", "one", ".",
                                            "and", "are", "great", "what", "?", "tell", "me",
                                            "so", "is", "my", "favorite", "how", "your", "or"};
const std::vector<std::string> kGenericSlot = {"not", "know"};

// Pronounceable pseudo-words, unique and disjoint from the fixed tokens.
std::vector<std::string> pseudo_words(std::size_t count, std::uint64_t seed) {
  static const char* kOnsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r",
                                  "s", "t", "v", "z", "br", "kr", "st", "tr"};
  static const char* kVowels[] = {"a", "e", "i", "o", "u", "ai", "ou"};
  std::mt19937_64 rng(mix_seed(seed, 0x57a7));
  std::uniform_int_distribution<std::size_t> onset(0, std::size(kOnsets) - 1);
  std::uniform_int_distribution<std::size_t> vowel(0, std::size(kVowels) - 1);
  std::unordered_set<std::string> taken(kScaffold.begin(), kScaffold.end());
  taken.insert(kVerbs.begin(), kVerbs.end());
  taken.insert(kGenericSlot.begin(), kGenericSlot.end());
  std::vector<std::string> out;
  while (out.size() < count) {
    std::string w;
    for (int s = 0; s < 3; ++s) w += std::string(kOnsets[onset(rng)]) + kVowels[vowel(rng)];
    if (taken.insert(w).second) out.push_back(std::move(w));
  }
  return out;
}

std::size_t words_per_topic(const SynthSpec& spec) { return spec.vocab_size / spec.topics; }

struct Layout {
  std::vector<std::vector<std::string>> pools;  // per topic
};

Layout make_layout(const SynthSpec& spec) {
  const auto words = pseudo_words(spec.vocab_size, spec.seed);
  const std::size_t w = words_per_topic(spec);
  Layout layout;
  for (std::size_t t = 0; t < spec.topics; ++t)
    layout.pools.emplace_back(words.begin() + static_cast<std::ptrdiff_t>(t * w),
                              words.begin() + static_cast<std::ptrdiff_t>((t + 1) * w));
  return layout;
}

std::vector<std::string> context_turns(const std::vector<std::string>& pool, std::size_t i) {
  const std::size_t w = pool.size();
  const auto& a = pool[(3 * i) % w];
  const auto& b = pool[(3 * i + 1) % w];
  const auto& c = pool[(3 * i + 2) % w];
  switch (i % 3) {
    case 0:
      return {a + " and " + b + " are great .", "what about " + c + " ?"};
    case 1:
      return {"tell me about " + a + " .", "is " + b + " your favorite or " + c + " ?"};
    default:
      return {"so " + a + " is my favorite .", "how about " + b + " and " + c + " ?"};
  }
}

std::string topical_response(const std::vector<std::string>& pool, std::size_t j) {
  const auto& word = pool[(2 * j + 1) % pool.size()];
  return "well , i do " + kVerbs[j % kVerbs.size()] + " " + word + " about that one .";
}

}  // namespace

void SynthSpec::validate() const {
  if (topics == 0) throw DomainError("synth topics must be positive");
  if (responses_per_context < 2 || contexts_per_response < 2)
    throw DomainError("synth fanouts must be >= 2");
  if (responses_per_context > kVerbs.size())
    throw DomainError("synth responses_per_context exceeds " + std::to_string(kVerbs.size()));
  if (!(generic_rate >= 0.0 && generic_rate < 1.0))
    throw DomainError("synth generic_rate must lie in [0, 1)");
  if (embedding_dim < 2) throw DomainError("synth embedding_dim must be >= 2");
  const std::size_t need = std::max<std::size_t>(3 * contexts_per_response, 2 * responses_per_context);
  if (words_per_topic(*this) < need)
    throw DomainError("synth vocab_size " + std::to_string(vocab_size) + " too small for " +
                      std::to_string(topics) + " topics (needs " + std::to_string(need * topics) +
                      ")");
  if (train_size == 0 || valid_size == 0 || test_size == 0)
    throw DomainError("synth split sizes must be positive");
}

std::size_t generic_count(double rate, std::size_t size) {
  return static_cast<std::size_t>(std::llround(rate * static_cast<double>(size)));
}

// ---------------------------------------------------------------------------
// Relation table

std::optional<std::size_t> RelationTable::context_index(const std::vector<std::string>& turns) const {
  for (std::size_t i = 0; i < contexts_.size(); ++i)
    if (contexts_[i].turns == turns) return i;
  return std::nullopt;
}

std::optional<std::size_t> RelationTable::response_index(const std::string& text) const {
  for (std::size_t i = 0; i < responses_.size(); ++i)
    if (responses_[i].text == text) return i;
  return std::nullopt;
}

bool RelationTable::is_valid(const std::vector<std::string>& context,
                             const std::string& response) const {
  const auto c = context_index(context);
  const auto r = response_index(response);
  return c && r && valid_.count({*c, *r}) > 0;
}

std::size_t RelationTable::topical_fanout(std::size_t context) const {
  std::size_t n = 0;
  for (const auto& [c, r] : valid_)
    if (c == context && r != generic_) ++n;
  return n;
}

std::size_t RelationTable::reverse_fanout(std::size_t response) const {
  std::size_t n = 0;
  for (const auto& [c, r] : valid_)
    if (r == response) ++n;
  return n;
}

std::string RelationTable::serialize() const {
  nlohmann::json j;
  auto& cs = j["contexts"] = nlohmann::json::array();
  for (const auto& c : contexts_) cs.push_back({{"turns", c.turns}, {"topic", c.topic}});
  auto& rs = j["responses"] = nlohmann::json::array();
  for (const auto& r : responses_) rs.push_back({{"text", r.text}, {"topic", r.topic}});
  auto& vs = j["valid"] = nlohmann::json::array();
  for (const auto& [c, r] : valid_) vs.push_back({c, r});
  j["generic_response"] = generic_;
  return j.dump(1) + "\n";
}

RelationTable RelationTable::parse(std::string_view text) {
  RelationTable table;
  try {
    const auto j = nlohmann::json::parse(text);
    for (const auto& c : j.at("contexts"))
      table.contexts_.push_back({c.at("turns").get<std::vector<std::string>>(), c.at("topic").get<int>()});
    for (const auto& r : j.at("responses"))
      table.responses_.push_back({r.at("text").get<std::string>(), r.at("topic").get<int>()});
    for (const auto& v : j.at("valid")) {
      const auto c = v.at(0).get<std::size_t>();
      const auto r = v.at(1).get<std::size_t>();
      if (c >= table.contexts_.size() || r >= table.responses_.size())
        throw FormatError("relation table entry out of range");
      table.valid_.insert({c, r});
    }
    table.generic_ = j.at("generic_response").get<std::size_t>();
    if (table.generic_ >= table.responses_.size())
      throw FormatError("relation table generic response out of range");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("relation table: ") + e.what());
  }
  return table;
}

RelationTable build_relation(const SynthSpec& spec) {
  spec.validate();
  const Layout layout = make_layout(spec);
  RelationTable table;
  for (std::size_t t = 0; t < spec.topics; ++t) {
    const std::size_t c0 = table.contexts_.size();
    const std::size_t r0 = table.responses_.size();
    for (std::size_t i = 0; i < spec.contexts_per_response; ++i)
      table.contexts_.push_back({context_turns(layout.pools[t], i), static_cast<int>(t)});
    for (std::size_t j = 0; j < spec.responses_per_context; ++j)
      table.responses_.push_back({topical_response(layout.pools[t], j), static_cast<int>(t)});
    for (std::size_t i = 0; i < spec.contexts_per_response; ++i)
      for (std::size_t j = 0; j < spec.responses_per_context; ++j)
        table.valid_.insert({c0 + i, r0 + j});
  }
  table.generic_ = table.responses_.size();
  table.responses_.push_back({kGenericResponse, -1});
  for (std::size_t c = 0; c < table.contexts_.size(); ++c) table.valid_.insert({c, table.generic_});
  return table;
}

// ---------------------------------------------------------------------------
// Corpus

namespace {

std::vector<DialoguePair> make_split(const SynthSpec& spec, const RelationTable& table,
                                     std::size_t size, std::uint64_t salt) {
  std::mt19937_64 rng(mix_seed(spec.seed, salt));
  const std::size_t generic = generic_count(spec.generic_rate, size);
  std::vector<bool> is_generic(size, false);
  std::fill(is_generic.begin(), is_generic.begin() + static_cast<std::ptrdiff_t>(generic), true);
  std::shuffle(is_generic.begin(), is_generic.end(), rng);

  // Topical (context, response) combinations, in table order.
  std::vector<std::pair<std::size_t, std::size_t>> topical;
  for (const auto& v : table.valid())
    if (v.second != table.generic_response()) topical.push_back(v);
  std::uniform_int_distribution<std::size_t> pick_topical(0, topical.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_context(0, table.contexts().size() - 1);

  std::vector<DialoguePair> out(size);
  for (std::size_t i = 0; i < size; ++i) {
    std::size_t c, r;
    if (is_generic[i]) {
      c = pick_context(rng);
      r = table.generic_response();
    } else {
      std::tie(c, r) = topical[pick_topical(rng)];
    }
    out[i].id = static_cast<PairId>(i);
    out[i].context = table.contexts()[c].turns;
    out[i].response = table.responses()[r].text;
  }
  return out;
}

Eigen::VectorXd gaussian(std::mt19937_64& rng, std::size_t dim, double scale) {
  std::normal_distribution<double> n(0.0, scale / std::sqrt(static_cast<double>(dim)));
  Eigen::VectorXd v(static_cast<Eigen::Index>(dim));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = n(rng);
  return v;
}

// Topic words cluster around a per-topic direction plus a shared "content"
// direction; the generic slot words point against the content direction, so
// the cosine matcher rates the generic reply as a poor match. Scaffold
// tokens are short random vectors.
EmbeddingTable make_embeddings(const SynthSpec& spec, const Layout& layout) {
  const std::size_t d = spec.embedding_dim;
  std::mt19937_64 rng(mix_seed(spec.seed, 0xe3b));
  EmbeddingTable table(d);
  Eigen::VectorXd content = gaussian(rng, d, 1.0).normalized();
  for (const auto& w : kScaffold) table.set(w, gaussian(rng, d, 0.1));
  for (const auto& w : kVerbs) table.set(w, gaussian(rng, d, 0.5));
  for (const auto& w : kGenericSlot) table.set(w, -content + gaussian(rng, d, 0.3));
  for (const auto& pool : layout.pools) {
    Eigen::VectorXd dir = gaussian(rng, d, 1.0).normalized();
    for (const auto& w : pool) table.set(w, dir + 0.3 * content + gaussian(rng, d, 0.3));
  }
  return table;
}

}  // namespace

SynthCorpus make_corpus(const SynthSpec& spec) {
  spec.validate();
  SynthCorpus corpus;
  corpus.relation = build_relation(spec);
  corpus.train = make_split(spec, corpus.relation, spec.train_size, 1);
  corpus.valid = make_split(spec, corpus.relation, spec.valid_size, 2);
  corpus.test = make_split(spec, corpus.relation, spec.test_size, 3);
  corpus.embeddings = make_embeddings(spec, make_layout(spec));
  return corpus;
}

void generate_corpus(const SynthSpec& spec, const std::filesystem::path& dir) {
  const SynthCorpus corpus = make_corpus(spec);
  std::filesystem::create_directories(dir);
  save_dataset(dir / "train.jsonl", corpus.train);
  save_dataset(dir / "valid.jsonl", corpus.valid);
  save_dataset(dir / "test.jsonl", corpus.test);
  write_file(dir / "relation.json", corpus.relation.serialize());
  corpus.embeddings.save_word2vec(dir / "embeddings.txt");

  nlohmann::json meta = {
      {"generator", kGeneratorTag},
      {"code_version", std::string(kCodeVersion)},
      {"spec",
       {{"topics", spec.topics},
        {"responses_per_context", spec.responses_per_context},
        {"contexts_per_response", spec.contexts_per_response},
        {"generic_rate", spec.generic_rate},
        {"vocab_size", spec.vocab_size},
        {"seed", spec.seed},
        {"train_size", spec.train_size},
        {"valid_size", spec.valid_size},
        {"test_size", spec.test_size},
        {"embedding_dim", spec.embedding_dim}}},
      {"sha256", {}}};
  for (const char* name : {"train.jsonl", "valid.jsonl", "test.jsonl", "relation.json"})
    meta["sha256"][name] = sha256_file(dir / name);
  write_file(dir / "metadata.json", meta.dump(2) + "\n");
}

RelationTable oracle_relation(const std::filesystem::path& dir) {
  const auto meta_path = dir / "metadata.json";
  if (!std::filesystem::exists(meta_path))
    throw FormatError(dir.string() + " has no synthetic-corpus metadata (foreign corpus)");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(read_file(meta_path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(meta_path.string() + ": " + e.what());
  }
  if (meta.value("generator", std::string()) != kGeneratorTag)
    throw FormatError(dir.string() + " was not produced by the synthetic generator");
  if (!meta.contains("sha256") || !meta["sha256"].is_object())
    throw FormatError(meta_path.string() + ": missing fingerprints");
  for (const auto& [name, hash] : meta["sha256"].items())
    if (sha256_file(dir / name) != hash.get<std::string>())
      throw FormatError(dir.string() + "/" + name + " no longer matches its fingerprint");
  return RelationTable::parse(read_file(dir / "relation.json"));
}

}  // namespace gcdl
