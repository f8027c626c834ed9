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

#include "gcdl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <nlohmann/json.hpp>
#include <unordered_set>

namespace gcdl {

std::vector<std::string> ngrams(const Sentence& sentence, std::size_t n) {
  std::vector<std::string> out;
  if (n == 0 || sentence.size() < n) return out;
  for (std::size_t i = 0; i + n <= sentence.size(); ++i) {
    std::string key = sentence[i];
    for (std::size_t j = 1; j < n; ++j) key += ' ' + sentence[i + j];
    out.push_back(std::move(key));
  }
  return out;
}

// ---------------------------------------------------------------------------
// BLEU

double sentence_bleu(const Sentence& hyp, const Sentence& ref, std::size_t n) {
  if (n == 0) throw DomainError("BLEU order must be >= 1");
  if (hyp.empty()) return 0.0;
  double log_sum = 0.0;
  for (std::size_t k = 1; k <= n; ++k) {
    std::map<std::string, int> ref_counts;
    for (auto& g : ngrams(ref, k)) ++ref_counts[g];
    const auto hyp_grams = ngrams(hyp, k);
    std::map<std::string, int> hyp_counts;
    for (auto& g : hyp_grams) ++hyp_counts[g];
    double matches = 0.0;
    for (const auto& [g, c] : hyp_counts) {
      auto it = ref_counts.find(g);
      if (it != ref_counts.end()) matches += std::min(c, it->second);
    }
    const double total = static_cast<double>(hyp_grams.size());
    double precision;
    if (k == 1) {
      if (matches == 0.0) return 0.0;
      precision = matches / total;
    } else {
      precision = (matches + 1.0) / (total + 1.0);
    }
    log_sum += std::log(precision);
  }
  const double h = static_cast<double>(hyp.size());
  const double r = static_cast<double>(ref.size());
  const double bp = h >= r ? 1.0 : std::exp(1.0 - r / h);
  return bp * std::exp(log_sum / static_cast<double>(n));
}

double bleu_n(std::span<const Sentence> hyps, std::span<const Sentence> refs, std::size_t n) {
  if (hyps.size() != refs.size()) throw DomainError("BLEU: hypothesis/reference count mismatch");
  if (hyps.empty()) throw DomainError("BLEU: empty corpus");
  double sum = 0.0;
  for (std::size_t i = 0; i < hyps.size(); ++i) sum += sentence_bleu(hyps[i], refs[i], n);
  return sum / static_cast<double>(hyps.size());
}

// ---------------------------------------------------------------------------
// Dist-n

double distinct_n(std::span<const Sentence> hyps, std::size_t n) {
  if (hyps.empty()) throw DomainError("distinct_n: empty hypothesis list");
  std::unordered_set<std::string> unique;
  std::size_t total = 0;
  for (const auto& h : hyps)
    for (auto& g : ngrams(h, n)) {
      unique.insert(std::move(g));
      ++total;
    }
  return total == 0 ? 0.0 : static_cast<double>(unique.size()) / static_cast<double>(total);
}

// ---------------------------------------------------------------------------
// Embedding metrics

namespace {

void require_tokens(const Sentence& s) {
  if (s.empty()) throw DomainError("embedding metric on an empty utterance");
}

Eigen::VectorXd extrema_vector(const Sentence& s, const EmbeddingTable& table) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(table.dim()));
  for (const auto& tok : s) {
    const auto& v = table.lookup(tok);
    for (Eigen::Index i = 0; i < out.size(); ++i)
      if (std::abs(v(i)) > std::abs(out(i))) out(i) = v(i);
  }
  return out;
}

double directed_greedy(const Sentence& from, const Sentence& to, const EmbeddingTable& table) {
  double sum = 0.0;
  for (const auto& a : from) {
    double best = -1.0;
    for (const auto& b : to) best = std::max(best, cosine(table.lookup(a), table.lookup(b)));
    sum += best;
  }
  return sum / static_cast<double>(from.size());
}

}  // namespace

double average_score(const Sentence& hyp, const Sentence& ref, const EmbeddingTable& table) {
  require_tokens(hyp);
  require_tokens(ref);
  return cosine(embed_utterance(hyp, table), embed_utterance(ref, table));
}

double extrema_score(const Sentence& hyp, const Sentence& ref, const EmbeddingTable& table) {
  require_tokens(hyp);
  require_tokens(ref);
  return cosine(extrema_vector(hyp, table), extrema_vector(ref, table));
}

double greedy_score(const Sentence& hyp, const Sentence& ref, const EmbeddingTable& table) {
  require_tokens(hyp);
  require_tokens(ref);
  return 0.5 * (directed_greedy(hyp, ref, table) + directed_greedy(ref, hyp, table));
}

EmbeddingScores embedding_metrics(std::span<const Sentence> hyps, std::span<const Sentence> refs,
                                  const EmbeddingTable& table) {
  if (hyps.size() != refs.size())
    throw DomainError("embedding metrics: hypothesis/reference count mismatch");
  if (hyps.empty()) throw DomainError("embedding metrics: empty corpus");
  EmbeddingScores s;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    s.average += average_score(hyps[i], refs[i], table);
    s.extrema += extrema_score(hyps[i], refs[i], table);
    s.greedy += greedy_score(hyps[i], refs[i], table);
  }
  const double n = static_cast<double>(hyps.size());
  s.average /= n;
  s.extrema /= n;
  s.greedy /= n;
  return s;
}

double coherence(std::span<const Sentence> contexts, std::span<const Sentence> hyps,
                 const EmbeddingTable& table) {
  if (contexts.size() != hyps.size()) throw DomainError("coherence: count mismatch");
  if (hyps.empty()) throw DomainError("coherence: empty corpus");
  double sum = 0.0;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    require_tokens(contexts[i]);
    require_tokens(hyps[i]);
    sum += cosine(embed_utterance(contexts[i], table), embed_utterance(hyps[i], table));
  }
  return sum / static_cast<double>(hyps.size());
}

// ---------------------------------------------------------------------------
// Ent-n

NgramDistribution NgramDistribution::fit(std::span<const Sentence> corpus, std::size_t n) {
  if (n == 0) throw DomainError("n-gram order must be >= 1");
  NgramDistribution d;
  d.n_ = n;
  for (const auto& s : corpus)
    for (auto& g : ngrams(s, n)) {
      ++d.counts_[g];
      ++d.total_;
    }
  if (d.total_ == 0) throw DomainError("n-gram distribution fitted on an n-gram-free corpus");
  return d;
}

double NgramDistribution::log_prob(const std::string& key) const {
  auto it = counts_.find(key);
  const double count = it == counts_.end() ? 0.0 : static_cast<double>(it->second);
  return std::log((count + 1.0) / static_cast<double>(total_ + counts_.size()));
}

double NgramDistribution::floor_log_prob() const {
  return std::log(1.0 / static_cast<double>(total_ + counts_.size()));
}

std::string NgramDistribution::most_frequent() const {
  const std::string* best = nullptr;
  std::size_t best_count = 0;
  for (const auto& [key, count] : counts_)
    if (count > best_count) {
      best = &key;
      best_count = count;
    }
  return best ? *best : std::string();
}

double entropy_n(std::span<const Sentence> hyps, const NgramDistribution& dist) {
  double sum = 0.0;
  std::size_t used = 0;
  for (const auto& h : hyps) {
    const auto grams = ngrams(h, dist.order());
    if (grams.empty()) continue;
    double s = 0.0;
    for (const auto& g : grams) s -= dist.log_prob(g);
    sum += s / static_cast<double>(grams.size());
    ++used;
  }
  if (used == 0) throw DomainError("entropy_n: no hypothesis contains an n-gram");
  return sum / static_cast<double>(used);
}

// ---------------------------------------------------------------------------
// Reports

std::string EvalReport::range_violation() const {
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  auto cos = [](double v) { return v >= -1.0 && v <= 1.0; };
  for (std::size_t i = 0; i < bleu.size(); ++i)
    if (!unit(bleu[i])) return "bleu" + std::to_string(i + 1);
  for (std::size_t i = 0; i < dist.size(); ++i)
    if (!unit(dist[i])) return "dist" + std::to_string(i + 1);
  if (!cos(average)) return "average";
  if (!cos(extrema)) return "extrema";
  if (!cos(greedy)) return "greedy";
  if (!cos(coherence)) return "coherence";
  for (std::size_t i = 0; i < ent.size(); ++i)
    if (!(ent[i] >= 0.0) || !std::isfinite(ent[i])) return "ent" + std::to_string(i + 1);
  return {};
}

EvalReport evaluate_generator(const ResponseGenerator& generator,
                              std::span<const TokenizedPair> test, const Vocab& vocab,
                              const EvalResources& res, std::size_t workers) {
  if (test.empty()) throw DomainError("evaluation set is empty");
  if (!res.table || !res.unigrams || !res.bigrams)
    throw DomainError("evaluation resources are incomplete");
  const std::size_t n = test.size();
  std::vector<Sentence> hyps(n), refs(n), contexts(n);
  parallel_for(n, workers, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      hyps[i] = detokenize(generator(test[i]), vocab);
      refs[i] = detokenize(test[i].response, vocab);
      contexts[i] = detokenize(test[i].context, vocab);
    }
  });

  EvalReport report;
  for (std::size_t k = 0; k < 4; ++k) report.bleu[k] = bleu_n(hyps, refs, k + 1);
  for (std::size_t k = 0; k < 3; ++k) report.dist[k] = distinct_n(hyps, k + 1);

  const auto& table = *res.table;
  for (std::size_t i = 0; i < n; ++i) {
    if (hyps[i].empty()) continue;
    report.average += average_score(hyps[i], refs[i], table);
    report.extrema += extrema_score(hyps[i], refs[i], table);
    report.greedy += greedy_score(hyps[i], refs[i], table);
    report.coherence += cosine(embed_utterance(contexts[i], table), embed_utterance(hyps[i], table));
  }
  const double dn = static_cast<double>(n);
  report.average /= dn;
  report.extrema /= dn;
  report.greedy /= dn;
  report.coherence /= dn;

  auto safe_entropy = [&](const NgramDistribution& d) {
    try {
      return entropy_n(hyps, d);
    } catch (const DomainError&) {
      return 0.0;
    }
  };
  report.ent[0] = safe_entropy(*res.unigrams);
  report.ent[1] = safe_entropy(*res.bigrams);

  report.manifest.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    report.manifest.push_back({join_tokens(contexts[i]), join_tokens(refs[i]), join_tokens(hyps[i])});
  return report;
}

EvalReport evaluate_model(const DialogueModel& model, std::span<const TokenizedPair> test,
                          const Vocab& vocab, const DecodeConfig& decode,
                          const EvalResources& resources, std::size_t workers) {
  decode.validate();
  return evaluate_generator(
      [&](const TokenizedPair& pair) { return generate(model, pair.context, decode); }, test,
      vocab, resources, workers);
}

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

}  // namespace

std::string report_json(const EvalReport& r) {
  nlohmann::json j = {{"bleu", {r.bleu[0], r.bleu[1], r.bleu[2], r.bleu[3]}},
                      {"dist", {r.dist[0], r.dist[1], r.dist[2]}},
                      {"average", r.average},
                      {"extrema", r.extrema},
                      {"greedy", r.greedy},
                      {"coherence", r.coherence},
                      {"ent", {r.ent[0], r.ent[1]}},
                      {"count", r.manifest.size()}};
  return j.dump(2) + "\n";
}

void write_report(const std::filesystem::path& dir, const EvalReport& r, const std::string& label) {
  std::string text;
  text += "# evaluation report: " + label + "\n";
  text += "# bleu: sentence-level, add-one smoothing for n >= 2, brevity penalty, corpus mean\n";
  text += "# embedding metrics: no stopword filtering; extrema keeps the signed max magnitude\n";
  text += "# ent: add-one smoothed training-response n-grams, nats\n";
  text += "# bleu, dist and embedding metrics are percentages\n";
  for (std::size_t k = 0; k < 4; ++k)
    text += "bleu" + std::to_string(k + 1) + " = " + fmt(100.0 * r.bleu[k]) + "\n";
  for (std::size_t k = 0; k < 3; ++k)
    text += "dist" + std::to_string(k + 1) + " = " + fmt(100.0 * r.dist[k]) + "\n";
  text += "average = " + fmt(100.0 * r.average) + "\n";
  text += "extrema = " + fmt(100.0 * r.extrema) + "\n";
  text += "greedy = " + fmt(100.0 * r.greedy) + "\n";
  text += "coherence = " + fmt(100.0 * r.coherence) + "\n";
  text += "ent1 = " + fmt(r.ent[0]) + "\n";
  text += "ent2 = " + fmt(r.ent[1]) + "\n";
  write_file(dir / "report.txt", text);
  write_file(dir / "report.json", report_json(r));

  std::string manifest;
  for (const auto& m : r.manifest)
    manifest += nlohmann::json{{"context", m.context},
                               {"reference", m.reference},
                               {"hypothesis", m.hypothesis}}
                    .dump() +
                "\n";
  write_file(dir / "manifest.jsonl", manifest);
}

}  // namespace gcdl
