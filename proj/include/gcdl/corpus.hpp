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

#include "gcdl/common.hpp"

namespace gcdl {

/// One context-response training instance. Ids are dense within a split.
struct DialoguePair {
  PairId id = 0;
  std::vector<std::string> context;  // turns, oldest first
  std::string response;
};

/// Reads a line-delimited dataset: one {"context": [...], "response": "..."}
/// object per line. Blank lines are skipped. Throws FormatError naming the
/// offending line on schema violations.
std::vector<DialoguePair> load_dataset(const std::filesystem::path& path,
                                       std::string_view split);

void save_dataset(const std::filesystem::path& path, std::span<const DialoguePair> pairs);

/// Lowercases, detaches . , ? ! from neighbouring characters and splits on
/// whitespace.
std::vector<std::string> tokenize_text(std::string_view text);

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kUnk = 1;
inline constexpr TokenId kBos = 2;
inline constexpr TokenId kEos = 3;
inline constexpr TokenId kNumReserved = 4;

/// Flattened contexts join turns with EOS.
inline constexpr TokenId kTurnSeparator = kEos;

inline bool is_reserved(TokenId id) { return id >= 0 && id < kNumReserved; }

class Vocab {
 public:
  Vocab();

  /// Frequency-ranked vocabulary (ties broken by first occurrence) over all
  /// context turns and responses. Tokens seen fewer than `min_freq` times are
  /// dropped; at most `cap` entries including the four reserved ones.
  static Vocab build(std::span<const DialoguePair> pairs, std::size_t cap,
                     std::size_t min_freq);

  static Vocab load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
  std::string serialize() const;

  TokenId id(std::string_view token) const;  // kUnk when absent
  const std::string& token(TokenId id) const;
  bool contains(std::string_view token) const;
  std::size_t size() const { return tokens_.size(); }

  /// SHA-256 of the serialized vocab file.
  std::string hash() const;

  static const std::vector<std::string>& reserved_tokens();

 private:
  void append(std::string token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

struct TokenizedPair {
  PairId id = 0;
  std::vector<TokenSeq> turns;
  TokenSeq context;   // turns joined by kTurnSeparator, keeps the newest tokens
  TokenSeq response;  // terminated by kEos
};

struct TokenizeOptions {
  std::size_t context_limit = 64;
};

TokenizedPair tokenize(const DialoguePair& pair, const Vocab& vocab,
                       const TokenizeOptions& options = {});

std::vector<TokenizedPair> tokenize_all(std::span<const DialoguePair> pairs,
                                        const Vocab& vocab,
                                        const TokenizeOptions& options = {});

/// Maps ids back to surface tokens, dropping PAD/BOS/EOS.
std::vector<std::string> detokenize(std::span<const TokenId> ids, const Vocab& vocab);

std::string join_tokens(std::span<const std::string> tokens);

}  // namespace gcdl
