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

#include "gcdl/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

namespace gcdl {

namespace {

using T = FieldType;

std::vector<ConfigField> make_schema() {
  return {
      {"seed", T::UInt, "", true, "master random seed"},
      {"workers", T::UInt, "1", false, "intra-stage worker threads"},
      {"paths.workdir", T::Path, "", true, "artifact root; stage outputs go to <workdir>/<stage>/"},
      {"paths.data", T::Path, "", false,
       "dataset directory with train/valid/test.jsonl (unused when synth.generate = true)"},
      {"paths.embeddings", T::Path, "", false,
       "word2vec text embeddings; synthetic or seeded random vectors when unset"},
      {"data.vocab_cap", T::UInt, "40000", false, "vocabulary size cap including reserved tokens"},
      {"data.min_freq", T::UInt, "1", false, "minimum token frequency"},
      {"data.context_limit", T::UInt, "64", false, "flattened context length limit (newest kept)"},
      {"data.embedding_dim", T::UInt, "300", false, "dimension of seeded random embeddings"},
      {"synth.generate", T::Bool, "false", false, "generate a synthetic corpus in prepare"},
      {"synth.topics", T::UInt, "20", false, "synthetic topic count"},
      {"synth.responses_per_context", T::UInt, "5", false, "one-to-many fanout"},
      {"synth.contexts_per_response", T::UInt, "3", false, "many-to-one fanout"},
      {"synth.generic_rate", T::Double, "0.4", false, "generic-response injection rate"},
      {"synth.vocab_size", T::UInt, "200", false, "topic content words"},
      {"synth.train_size", T::UInt, "1600", false, "synthetic train pairs"},
      {"synth.valid_size", T::UInt, "200", false, "synthetic valid pairs"},
      {"synth.test_size", T::UInt, "200", false, "synthetic test pairs"},
      {"synth.embedding_dim", T::UInt, "300", false, "synthetic embedding dimension"},
      {"bm25.k1", T::Double, "1.2", false, "BM25 term saturation"},
      {"bm25.b", T::Double, "0.75", false, "BM25 length normalization"},
      {"matcher.kind", T::String, "cosine", false, "cosine | biencoder"},
      {"matcher.epochs", T::UInt, "5", false, "bi-encoder training epochs"},
      {"matcher.batch_size", T::UInt, "32", false, "bi-encoder batch size"},
      {"matcher.lr", T::Double, "0.001", false, "bi-encoder learning rate"},
      {"matcher.temperature", T::Double, "0.1", false, "bi-encoder softmax temperature"},
      {"sampler.k", T::UInt, "3", false, "group size per side"},
      {"sampler.pool", T::UInt, "100", false, "retrieval pool size M"},
      {"sampler.pad", T::UInt, "50", false, "random negative pad size"},
      {"model.arch", T::String, "seq2seq-attention", false, "seq2seq-attention | transformer"},
      {"model.embed_dim", T::UInt, "32", false, "token embedding size (seq2seq)"},
      {"model.hidden", T::UInt, "64", false, "hidden size"},
      {"model.layers", T::UInt, "1", false, "encoder/decoder layers"},
      {"model.heads", T::UInt, "4", false, "attention heads (transformer)"},
      {"model.ffn", T::UInt, "128", false, "feed-forward size (transformer)"},
      {"model.max_positions", T::UInt, "256", false, "position table size (transformer)"},
      {"model.init_scale", T::Double, "0.1", false, "uniform init range"},
      {"model.normalize_by_length", T::Bool, "false", false, "length-normalized log p(r|c)"},
      {"pretrain.lr", T::Double, "0.001", false, "MLE learning rate"},
      {"pretrain.batch_size", T::UInt, "128", false, "MLE batch size"},
      {"pretrain.max_epochs", T::UInt, "30", false, "MLE epoch limit"},
      {"pretrain.patience", T::UInt, "5", false, "validations without improvement before stopping"},
      {"pretrain.validations_per_epoch", T::UInt, "2", false, "validation frequency"},
      {"pretrain.clip_norm", T::Double, "5", false, "global gradient norm clip (0 disables)"},
      {"train.lr", T::Double, "0.001", false, "contrastive learning rate"},
      {"train.batch_size", T::UInt, "128", false, "groups per batch"},
      {"train.max_epochs", T::UInt, "10", false, "contrastive epoch limit"},
      {"train.patience", T::UInt, "5", false, "validations without improvement before stopping"},
      {"train.validations_per_epoch", T::UInt, "2", false, "validation frequency"},
      {"train.clip_norm", T::Double, "5", false, "global gradient norm clip (0 disables)"},
      {"loss.variant", T::String, "weighted", false, "pairwise | group | weighted"},
      {"loss.no_group", T::Bool, "false", false, "ablation (a)"},
      {"loss.no_pos_group", T::Bool, "false", false, "ablation (b)"},
      {"loss.no_neg_group", T::Bool, "false", false, "ablation (c)"},
      {"loss.no_response_side", T::Bool, "false", false, "ablation (d)"},
      {"loss.no_context_side", T::Bool, "false", false, "ablation (e)"},
      {"loss.no_scores", T::Bool, "false", false, "ablation (f)"},
      {"loss.epsilon", T::Double, "1e-7", false, "sigmoid / log-argument clamp"},
      {"loss.mle_mix", T::Double, "0", false, "weight of an added anchor NLL term"},
      {"decode.strategy", T::String, "greedy", false, "greedy | beam"},
      {"decode.beam_width", T::UInt, "1", false, "beam width"},
      {"decode.max_len", T::UInt, "20", false, "maximum generated tokens"},
      {"generate.source", T::String, "train", false, "checkpoint to decode: pretrain | train"},
      {"ablate.max_epochs", T::UInt, "0", false, "epoch limit per ablation run (0 = train.max_epochs)"},
  };
}

std::string_view type_name(FieldType t) {
  switch (t) {
    case T::String:
      return "string";
    case T::Path:
      return "path";
    case T::UInt:
      return "uint";
    case T::Double:
      return "double";
    case T::Bool:
      return "bool";
  }
  return "?";
}

const ConfigField* find_field(std::string_view key) {
  for (const auto& f : config_schema())
    if (f.key == key) return &f;
  return nullptr;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

bool parse_bool(const std::string& v, bool& out) {
  if (v == "true" || v == "1" || v == "yes") return out = true, true;
  if (v == "false" || v == "0" || v == "no") return out = false, true;
  return false;
}

void check_value(const ConfigField& f, const std::string& value, const std::string& where) {
  auto fail = [&] {
    throw FormatError(where + ": field '" + f.key + "' expects " + std::string(type_name(f.type)) +
                      ", got '" + value + "'");
  };
  if (value.empty()) {
    if (f.type == T::String || f.type == T::Path) return;
    fail();
  }
  switch (f.type) {
    case T::UInt: {
      std::uint64_t v = 0;
      auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
      if (ec != std::errc() || p != value.data() + value.size()) fail();
      break;
    }
    case T::Double: {
      std::size_t used = 0;
      double v = 0;
      try {
        v = std::stod(value, &used);
      } catch (const std::exception&) {
        fail();
      }
      if (used != value.size() || !std::isfinite(v)) fail();
      break;
    }
    case T::Bool: {
      bool b;
      if (!parse_bool(value, b)) fail();
      break;
    }
    default:
      break;
  }
}

}  // namespace

const std::vector<ConfigField>& config_schema() {
  static const std::vector<ConfigField> schema = make_schema();
  return schema;
}

std::string print_schema() {
  std::string out;
  for (const auto& f : config_schema()) {
    out += f.key + " = " + f.default_value + "  # " + std::string(type_name(f.type));
    if (f.required) out += ", required";
    out += "; " + f.doc + "\n";
  }
  return out;
}

RunConfig::RunConfig() {
  for (const auto& f : config_schema()) values_[f.key] = f.default_value;
}

RunConfig RunConfig::parse(std::string_view text, std::string_view origin) {
  RunConfig config;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = std::min(text.find('\n', pos), text.size());
    const std::string line = trim(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const std::string where = std::string(origin) + ":" + std::to_string(line_no);
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError(where + ": expected 'key = value'");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    std::string value = trim(std::string_view(line).substr(eq + 1));
    const auto* field = find_field(key);
    if (!field) throw FormatError(where + ": unknown field '" + key + "'");
    check_value(*field, value, where);
    config.values_[key] = std::move(value);
    if (end == text.size()) break;
  }
  return config;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw FormatError("config not found: " + path.string());
  return parse(read_file(path), path.string());
}

void RunConfig::set(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos)
    throw FormatError("override '" + std::string(assignment) + "' is not key=value");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto* field = find_field(key);
  if (!field) throw FormatError("override: unknown field '" + key + "'");
  check_value(*field, value, "override");
  values_[key] = value;
}

void RunConfig::validate() const {
  for (const auto& f : config_schema())
    if (f.required && values_.at(f.key).empty())
      throw FormatError("config: required field '" + f.key + "' is missing");
  if (!get_bool("synth.generate")) {
    const auto data = get_path("paths.data");
    if (data.empty())
      throw FormatError("config: field 'paths.data' is required unless synth.generate = true");
    if (!std::filesystem::is_directory(data))
      throw FormatError("config: field 'paths.data' does not name a directory: " + data.string());
  }
  if (has("paths.embeddings") && !std::filesystem::exists(get_path("paths.embeddings")))
    throw FormatError("config: field 'paths.embeddings' does not exist: " +
                      get_path("paths.embeddings").string());
  const std::string kind = get("matcher.kind");
  if (kind != "cosine" && kind != "biencoder")
    throw FormatError("config: field 'matcher.kind' must be cosine or biencoder");
  const std::string strategy = get("decode.strategy");
  if (strategy != "greedy" && strategy != "beam")
    throw FormatError("config: field 'decode.strategy' must be greedy or beam");
  const std::string source = get("generate.source");
  if (source != "pretrain" && source != "train")
    throw FormatError("config: field 'generate.source' must be pretrain or train");
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw FormatError("config: unknown field '" + key + "'");
  return it->second;
}

bool RunConfig::has(const std::string& key) const { return !get(key).empty(); }

std::filesystem::path RunConfig::get_path(const std::string& key) const { return get(key); }

std::uint64_t RunConfig::get_uint(const std::string& key) const {
  const auto& v = get(key);
  if (v.empty()) throw FormatError("config: field '" + key + "' is unset");
  return std::stoull(v);
}

double RunConfig::get_double(const std::string& key) const {
  const auto& v = get(key);
  if (v.empty()) throw FormatError("config: field '" + key + "' is unset");
  return std::stod(v);
}

bool RunConfig::get_bool(const std::string& key) const {
  bool b = false;
  if (!parse_bool(get(key), b)) throw FormatError("config: field '" + key + "' is not a bool");
  return b;
}

std::string RunConfig::canonical() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

}  // namespace gcdl
