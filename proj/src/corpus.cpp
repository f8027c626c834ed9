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

#include "gcdl/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

namespace gcdl {

using nlohmann::json;

namespace {

std::string where(const std::filesystem::path& path, std::string_view split,
                  std::size_t line) {
  std::ostringstream ss;
  ss << path.string() << " [" << split << "] line " << line;
  return ss.str();
}

}  // namespace

std::vector<DialoguePair> load_dataset(const std::filesystem::path& path,
                                       std::string_view split) {
  std::ifstream in(path);
  if (!in) throw Error("dataset not found: " + path.string());

  std::vector<DialoguePair> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); }))
      continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      throw FormatError(where(path, split, line_no) + ": invalid JSON: " + e.what());
    }
    if (!record.is_object())
      throw FormatError(where(path, split, line_no) + ": record is not an object");
    auto ctx = record.find("context");
    if (ctx == record.end() || !ctx->is_array())
      throw FormatError(where(path, split, line_no) + ": missing array field `context`");
    auto resp = record.find("response");
    if (resp == record.end() || !resp->is_string())
      throw FormatError(where(path, split, line_no) + ": missing string field `response`");
    if (ctx->empty())
      throw FormatError(where(path, split, line_no) + ": `context` has no turns");

    DialoguePair pair;
    pair.id = static_cast<PairId>(pairs.size());
    for (const auto& turn : *ctx) {
      if (!turn.is_string())
        throw FormatError(where(path, split, line_no) + ": context turn is not a string");
      pair.context.push_back(turn.get<std::string>());
    }
    pair.response = resp->get<std::string>();
    if (tokenize_text(pair.response).empty())
      throw FormatError(where(path, split, line_no) + ": empty `response`");
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

void save_dataset(const std::filesystem::path& path, std::span<const DialoguePair> pairs) {
  std::string out;
  for (const auto& p : pairs) {
    json record = {{"context", p.context}, {"response", p.response}};
    out += record.dump();
    out += '\n';
  }
  write_file(path, out);
}

std::vector<std::string> tokenize_text(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) tokens.push_back(std::move(current));
    current.clear();
  };
  for (char raw : text) {
    const auto c = static_cast<unsigned char>(raw);
    if (std::isspace(c)) {
      flush();
    } else if (c == '.' || c == ',' || c == '?' || c == '!') {
      flush();
      tokens.emplace_back(1, static_cast<char>(c));
    } else {
      current.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return tokens;
}

const std::vector<std::string>& Vocab::reserved_tokens() {
  static const std::vector<std::string> kReserved = {"__null__", "__unk__", "__start__",
                                                     "__end__"};
  return kReserved;
}

Vocab::Vocab() {
  for (const auto& t : reserved_tokens()) append(t);
}

void Vocab::append(std::string token) {
  index_.emplace(token, static_cast<TokenId>(tokens_.size()));
  tokens_.push_back(std::move(token));
}

Vocab Vocab::build(std::span<const DialoguePair> pairs, std::size_t cap, std::size_t min_freq) {
  if (pairs.empty()) throw DomainError("build_vocab: no pairs");
  if (cap <= static_cast<std::size_t>(kNumReserved))
    throw DomainError("build_vocab: cap must exceed the reserved token count");

  struct Stat {
    std::size_t count = 0;
    std::size_t first = 0;
  };
  std::unordered_map<std::string, Stat> stats;
  std::vector<std::string> order;
  auto observe = [&](std::string_view text) {
    for (auto& tok : tokenize_text(text)) {
      auto [it, inserted] = stats.try_emplace(tok, Stat{0, order.size()});
      if (inserted) order.push_back(tok);
      ++it->second.count;
    }
  };
  for (const auto& p : pairs) {
    for (const auto& turn : p.context) observe(turn);
    observe(p.response);
  }

  const auto& reserved = reserved_tokens();
  std::vector<std::string> kept;
  for (const auto& tok : order) {
    if (stats[tok].count < min_freq) continue;
    if (std::find(reserved.begin(), reserved.end(), tok) != reserved.end()) continue;
    kept.push_back(tok);
  }
  std::stable_sort(kept.begin(), kept.end(), [&](const std::string& a, const std::string& b) {
    const auto& sa = stats[a];
    const auto& sb = stats[b];
    if (sa.count != sb.count) return sa.count > sb.count;
    return sa.first < sb.first;
  });

  Vocab vocab;
  const std::size_t room = cap - kNumReserved;
  for (std::size_t i = 0; i < kept.size() && i < room; ++i) vocab.append(kept[i]);
  return vocab;
}

std::string Vocab::serialize() const {
  std::string out;
  for (const auto& t : tokens_) {
    out += t;
    out += '\n';
  }
  return out;
}

void Vocab::save(const std::filesystem::path& path) const { write_file(path, serialize()); }

Vocab Vocab::load(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  const auto& reserved = reserved_tokens();
  if (lines.size() < reserved.size() ||
      !std::equal(reserved.begin(), reserved.end(), lines.begin()))
    throw FormatError("vocab file " + path.string() + ": reserved tokens missing or out of order");
  Vocab vocab;
  for (std::size_t i = reserved.size(); i < lines.size(); ++i) {
    if (vocab.contains(lines[i]))
      throw FormatError("vocab file " + path.string() + ": duplicate token on line " +
                        std::to_string(i + 1));
    vocab.append(lines[i]);
  }
  return vocab;
}

TokenId Vocab::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
    throw DomainError("token id out of vocab: " + std::to_string(id));
  return tokens_[static_cast<std::size_t>(id)];
}

bool Vocab::contains(std::string_view token) const {
  return index_.find(std::string(token)) != index_.end();
}

std::string Vocab::hash() const { return sha256_hex(serialize()); }

TokenizedPair tokenize(const DialoguePair& pair, const Vocab& vocab,
                       const TokenizeOptions& options) {
  TokenizedPair out;
  out.id = pair.id;
  for (const auto& turn : pair.context) {
    TokenSeq ids;
    for (const auto& tok : tokenize_text(turn)) ids.push_back(vocab.id(tok));
    out.turns.push_back(std::move(ids));
  }

  TokenSeq flat;
  for (std::size_t i = 0; i < out.turns.size(); ++i) {
    if (i > 0) flat.push_back(kTurnSeparator);
    flat.insert(flat.end(), out.turns[i].begin(), out.turns[i].end());
  }
  if (options.context_limit > 0 && flat.size() > options.context_limit)
    flat.erase(flat.begin(), flat.end() - static_cast<std::ptrdiff_t>(options.context_limit));
  if (std::all_of(flat.begin(), flat.end(), [](TokenId t) { return t == kTurnSeparator; }))
    throw DomainError("pair " + std::to_string(pair.id) + ": empty context after tokenization");
  out.context = std::move(flat);

  for (const auto& tok : tokenize_text(pair.response)) out.response.push_back(vocab.id(tok));
  if (out.response.empty())
    throw DomainError("pair " + std::to_string(pair.id) + ": empty response after tokenization");
  out.response.push_back(kEos);
  return out;
}

std::vector<TokenizedPair> tokenize_all(std::span<const DialoguePair> pairs, const Vocab& vocab,
                                        const TokenizeOptions& options) {
  std::vector<TokenizedPair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(tokenize(p, vocab, options));
  return out;
}

std::vector<std::string> detokenize(std::span<const TokenId> ids, const Vocab& vocab) {
  std::vector<std::string> out;
  for (TokenId id : ids) {
    if (id == kPad || id == kBos || id == kEos) continue;
    out.push_back(vocab.token(id));
  }
  return out;
}

std::string join_tokens(std::span<const std::string> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

}  // namespace gcdl
