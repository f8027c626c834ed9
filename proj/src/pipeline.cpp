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

#include "gcdl/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <memory>
#include <nlohmann/json.hpp>
#include <ostream>
#include <sstream>

namespace gcdl {

namespace fs = std::filesystem;
using nlohmann::json;

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names = {"prepare",  "build-index", "sample",   "pretrain",
                                                 "train",    "generate",    "evaluate", "ablate"};
  return names;
}

fs::path stage_dir(const RunConfig& config, std::string_view stage) {
  return config.get_path("paths.workdir") / std::string(stage);
}

ModelConfig model_config(const RunConfig& config, std::size_t vocab_size) {
  ModelConfig m;
  m.arch = architecture_from_string(config.get("model.arch"));
  m.vocab_size = vocab_size;
  m.embed_dim = config.get_uint("model.embed_dim");
  m.hidden = config.get_uint("model.hidden");
  m.layers = config.get_uint("model.layers");
  m.heads = config.get_uint("model.heads");
  m.ffn = config.get_uint("model.ffn");
  m.max_positions = config.get_uint("model.max_positions");
  m.init_scale = config.get_double("model.init_scale");
  m.normalize_by_length = config.get_bool("model.normalize_by_length");
  m.seed = mix_seed(config.get_uint("seed"), 11);
  m.validate();
  return m;
}

LossConfig loss_config(const RunConfig& config) {
  LossConfig l;
  l.variant = loss_variant_from_string(config.get("loss.variant"));
  l.no_group = config.get_bool("loss.no_group");
  l.no_pos_group = config.get_bool("loss.no_pos_group");
  l.no_neg_group = config.get_bool("loss.no_neg_group");
  l.no_response_side = config.get_bool("loss.no_response_side");
  l.no_context_side = config.get_bool("loss.no_context_side");
  l.no_scores = config.get_bool("loss.no_scores");
  l.epsilon = config.get_double("loss.epsilon");
  l.mle_mix = config.get_double("loss.mle_mix");
  l.k = config.get_uint("sampler.k");
  l.validate();
  return l;
}

TrainConfig train_config(const RunConfig& config, std::string_view section) {
  const std::string s(section);
  TrainConfig t;
  t.lr = config.get_double(s + ".lr");
  t.batch_size = config.get_uint(s + ".batch_size");
  t.max_epochs = config.get_uint(s + ".max_epochs");
  t.patience = config.get_uint(s + ".patience");
  t.validations_per_epoch = config.get_uint(s + ".validations_per_epoch");
  t.clip_norm = config.get_double(s + ".clip_norm");
  t.seed = mix_seed(config.get_uint("seed"), s == "pretrain" ? 21 : 22);
  t.workers = std::max<std::size_t>(1, config.get_uint("workers"));
  t.stage = s;
  t.validate();
  return t;
}

SamplerConfig sampler_config(const RunConfig& config) {
  SamplerConfig c;
  c.k = config.get_uint("sampler.k");
  c.pool = config.get_uint("sampler.pool");
  c.pad = config.get_uint("sampler.pad");
  c.seed = mix_seed(config.get_uint("seed"), 31);
  c.validate();
  return c;
}

DecodeConfig decode_config(const RunConfig& config) {
  DecodeConfig d;
  d.strategy = config.get("decode.strategy") == "beam" ? DecodeStrategy::Beam : DecodeStrategy::Greedy;
  d.beam_width = config.get_uint("decode.beam_width");
  d.max_len = config.get_uint("decode.max_len");
  d.validate();
  return d;
}

SynthSpec synth_spec(const RunConfig& config) {
  SynthSpec s;
  s.topics = config.get_uint("synth.topics");
  s.responses_per_context = config.get_uint("synth.responses_per_context");
  s.contexts_per_response = config.get_uint("synth.contexts_per_response");
  s.generic_rate = config.get_double("synth.generic_rate");
  s.vocab_size = config.get_uint("synth.vocab_size");
  s.train_size = config.get_uint("synth.train_size");
  s.valid_size = config.get_uint("synth.valid_size");
  s.test_size = config.get_uint("synth.test_size");
  s.embedding_dim = config.get_uint("synth.embedding_dim");
  s.seed = mix_seed(config.get_uint("seed"), 41);
  s.validate();
  return s;
}

namespace {

std::size_t workers_of(const RunConfig& config) {
  return std::max<std::size_t>(1, config.get_uint("workers"));
}

void require(const fs::path& path, std::string_view stage, std::string_view upstream) {
  if (fs::exists(path)) return;
  throw DependencyError("stage '" + std::string(stage) + "' requires stage '" +
                        std::string(upstream) + "' to have run first (missing " + path.string() +
                        ")");
}

// Records hashes of the inputs read and of every file the stage wrote.
class Provenance {
 public:
  Provenance(const RunConfig& config, std::string_view stage)
      : workdir_(config.get_path("paths.workdir")), stage_(stage), config_hash_(config.hash()) {}

  void input(const fs::path& path) { inputs_[label(path)] = sha256_file(path); }

  void write(const fs::path& dir) const {
    json outputs = json::object();
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(dir))
      if (e.is_regular_file() && e.path().filename() != "provenance.json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) outputs[fs::relative(f, dir).generic_string()] = sha256_file(f);
    json inputs = json::object();
    for (const auto& [k, v] : inputs_) inputs[k] = v;
    json j = {{"stage", stage_},
              {"code_version", std::string(kCodeVersion)},
              {"config_hash", config_hash_},
              {"inputs", inputs},
              {"outputs", outputs}};
    write_file(dir / "provenance.json", j.dump(2) + "\n");
  }

 private:
  std::string label(const fs::path& path) const {
    const fs::path rel = path.lexically_relative(workdir_);
    if (!rel.empty() && *rel.begin() != "..") return rel.generic_string();
    return path.generic_string();
  }

  fs::path workdir_;
  std::string stage_;
  std::string config_hash_;
  std::map<std::string, std::string> inputs_;
};

fs::path fresh_dir(const RunConfig& config, std::string_view stage) {
  const fs::path dir = stage_dir(config, stage);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

TrainObserver progress(std::ostream& log, std::string_view stage) {
  return [&log, stage = std::string(stage)](const TrainLogRecord& r) {
    if (r.split != "valid") return;
    log << "[" << stage << "] step " << r.step << " valid loss " << fixed(r.loss);
    if (!std::isnan(r.mean_d_pos))
      log << " mean D+ " << fixed(r.mean_d_pos) << " mean D- " << fixed(r.mean_d_neg);
    log << "\n" << std::flush;
  };
}

json num(double v) {
  if (std::isnan(v)) return nullptr;
  return v;
}

json training_summary(const TrainResult& r) {
  json j = {{"best_validation_loss", r.best_validation_loss},
            {"final_validation_loss", r.final_validation_loss},
            {"best_validation_index", r.best_validation_index},
            {"steps", r.steps},
            {"validations", r.validations},
            {"early_stopped", r.early_stopped}};
  std::size_t index = 0;
  for (const auto& rec : r.log) {
    if (rec.split != "valid") continue;
    if (index++ != r.best_validation_index) continue;
    j["best_valid_mean_D_pos"] = num(rec.mean_d_pos);
    j["best_valid_mean_D_neg"] = num(rec.mean_d_neg);
  }
  return j;
}

std::string params_hash(const DialogueModel& model) {
  std::string bytes;
  const auto& p = model.params();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto& m = p.value(i);
    bytes.append(reinterpret_cast<const char*>(m.data()),
                 static_cast<std::size_t>(m.size()) * sizeof(double));
  }
  return sha256_hex(bytes);
}

struct PrepareFiles {
  fs::path vocab, train, valid, test, embeddings;
};

PrepareFiles prepare_files(const RunConfig& config) {
  const fs::path dir = stage_dir(config, "prepare");
  return {dir / "vocab.txt", dir / "train.jsonl", dir / "valid.jsonl", dir / "test.jsonl",
          dir / "embeddings.txt"};
}

std::optional<RelationTable> relation_of(const RunConfig& config) {
  const fs::path corpus = stage_dir(config, "prepare") / "corpus";
  if (!fs::exists(corpus / "relation.json")) return std::nullopt;
  return oracle_relation(corpus);
}

void require_prepared(const RunConfig& config, std::string_view stage, Provenance& prov) {
  const auto f = prepare_files(config);
  for (const auto& p : {f.vocab, f.train, f.valid, f.test, f.embeddings}) {
    require(p, stage, "prepare");
    prov.input(p);
  }
}

void run_prepare(const RunConfig& config, std::ostream& log) {
  const fs::path dir = fresh_dir(config, "prepare");
  Provenance prov(config, "prepare");
  const std::uint64_t seed = config.get_uint("seed");

  fs::path data;
  fs::path embeddings;
  if (config.get_bool("synth.generate")) {
    data = dir / "corpus";
    generate_corpus(synth_spec(config), data);
    embeddings = data / "embeddings.txt";
    log << "[prepare] generated synthetic corpus in " << data.string() << "\n";
  } else {
    data = config.get_path("paths.data");
  }
  if (config.has("paths.embeddings")) embeddings = config.get_path("paths.embeddings");

  const auto train = load_dataset(data / "train.jsonl", "train");
  const auto valid = load_dataset(data / "valid.jsonl", "valid");
  const auto test = load_dataset(data / "test.jsonl", "test");
  for (const char* split : {"train.jsonl", "valid.jsonl", "test.jsonl"}) prov.input(data / split);

  const Vocab vocab =
      Vocab::build(train, config.get_uint("data.vocab_cap"), config.get_uint("data.min_freq"));
  const auto files = prepare_files(config);
  vocab.save(files.vocab);
  save_dataset(files.train, train);
  save_dataset(files.valid, valid);
  save_dataset(files.test, test);

  if (!embeddings.empty()) {
    prov.input(embeddings);
    EmbeddingTable::load_word2vec(embeddings).save_word2vec(files.embeddings);
  } else {
    std::vector<std::string> tokens;
    for (std::size_t i = kNumReserved; i < vocab.size(); ++i)
      tokens.push_back(vocab.token(static_cast<TokenId>(i)));
    EmbeddingTable::random(tokens, config.get_uint("data.embedding_dim"), mix_seed(seed, 51))
        .save_word2vec(files.embeddings);
  }
  log << "[prepare] " << train.size() << " train, " << valid.size() << " valid, " << test.size()
      << " test pairs; vocab " << vocab.size() << "\n";
  prov.write(dir);
}

void run_build_index(const RunConfig& config, std::ostream& log) {
  Provenance prov(config, "build-index");
  require_prepared(config, "build-index", prov);
  const PreparedData data = load_prepared(config);
  const fs::path dir = fresh_dir(config, "build-index");
  const double k1 = config.get_double("bm25.k1");
  const double b = config.get_double("bm25.b");
  for (const auto& [name, pairs] : {std::pair{"train", &data.train}, {"valid", &data.valid}}) {
    const IndexPair idx = build_indexes(*pairs, k1, b);
    idx.context.save(dir / (std::string(name) + ".context.bm25.json"));
    idx.response.save(dir / (std::string(name) + ".response.bm25.json"));
    log << "[build-index] " << name << ": " << idx.context.doc_count() << " documents\n";
  }
  prov.write(dir);
}

std::vector<ContrastiveGroup> load_split_groups(const RunConfig& config, std::string_view stage,
                                                std::string_view split, Provenance& prov) {
  const fs::path path = stage_dir(config, "sample") / (std::string(split) + ".groups.jsonl");
  require(path, stage, "sample");
  prov.input(path);
  return load_groups(path);
}

// Fraction of mined positives / negatives that the oracle table labels
// valid / invalid. The anchor is excluded.
json sample_stats(std::span<const ContrastiveGroup> groups, std::span<const DialoguePair> raw,
                  const std::optional<RelationTable>& relation) {
  std::size_t pos = 0, neg = 0, true_pos = 0, true_neg = 0;
  std::map<std::string, std::size_t> sources;
  for (const auto& g : groups) {
    for (const auto& e : g.positives) {
      ++sources["positive." + std::string(to_string(e.source))];
      if (e.source == EntrySource::Anchor) continue;
      ++pos;
      if (relation && relation->is_valid(raw[e.context_id].context, raw[e.response_id].response))
        ++true_pos;
    }
    for (const auto& e : g.negatives) {
      ++sources["negative." + std::string(to_string(e.source))];
      ++neg;
      if (relation && !relation->is_valid(raw[e.context_id].context, raw[e.response_id].response))
        ++true_neg;
    }
  }
  json j = {{"groups", groups.size()}, {"positives", pos}, {"negatives", neg}, {"sources", sources}};
  if (relation) {
    j["positive_precision"] = pos ? static_cast<double>(true_pos) / static_cast<double>(pos) : 0.0;
    j["negative_precision"] = neg ? static_cast<double>(true_neg) / static_cast<double>(neg) : 0.0;
  }
  return j;
}

void run_sample(const RunConfig& config, std::ostream& log) {
  Provenance prov(config, "sample");
  require_prepared(config, "sample", prov);
  const fs::path index_dir = stage_dir(config, "build-index");
  for (const char* split : {"train", "valid"})
    for (const char* side : {"context", "response"}) {
      const fs::path p = index_dir / (std::string(split) + "." + side + ".bm25.json");
      require(p, "sample", "build-index");
      prov.input(p);
    }
  const PreparedData data = load_prepared(config);
  const auto files = prepare_files(config);
  const EmbeddingTable table = EmbeddingTable::load_word2vec(files.embeddings);
  auto embeddings = std::make_shared<const VocabEmbeddings>(table, data.vocab);
  const fs::path dir = fresh_dir(config, "sample");
  const std::size_t workers = workers_of(config);

  std::unique_ptr<Matcher> matcher;
  if (config.get("matcher.kind") == "biencoder") {
    auto bi = std::make_unique<BiEncoderMatcher>(embeddings);
    BiEncoderConfig bc;
    bc.epochs = config.get_uint("matcher.epochs");
    bc.batch_size = config.get_uint("matcher.batch_size");
    bc.lr = config.get_double("matcher.lr");
    bc.temperature = config.get_double("matcher.temperature");
    bc.seed = mix_seed(config.get_uint("seed"), 61);
    bi->train(data.train, bc);
    bi->save(dir / "matcher.txt");
    matcher = std::move(bi);
  } else {
    matcher = std::make_unique<CosineMatcher>(embeddings);
  }

  const SamplerConfig sc = sampler_config(config);
  const auto relation = relation_of(config);
  json stats = json::object();
  stats["matcher"] = matcher->name();
  for (const auto& [name, pairs, raw] :
       {std::tuple{"train", &data.train, &data.raw_train}, {"valid", &data.valid, &data.raw_valid}}) {
    const IndexPair idx{Bm25Index::load(index_dir / (std::string(name) + ".context.bm25.json")),
                        Bm25Index::load(index_dir / (std::string(name) + ".response.bm25.json"))};
    const fs::path out = dir / (std::string(name) + ".groups.jsonl");
    sample_corpus(*pairs, idx, *matcher, sc, out, workers);
    const auto groups = load_groups(out);
    stats[name] = sample_stats(groups, *raw, relation);
    log << "[sample] " << name << ": " << groups.size() << " groups";
    if (relation)
      log << ", positive precision " << fixed(stats[name]["positive_precision"].get<double>());
    log << "\n";
  }
  write_file(dir / "stats.json", stats.dump(2) + "\n");
  prov.write(dir);
}

void run_pretrain(const RunConfig& config, std::ostream& log) {
  Provenance prov(config, "pretrain");
  require_prepared(config, "pretrain", prov);
  const PreparedData data = load_prepared(config);
  const fs::path dir = fresh_dir(config, "pretrain");

  auto model = make_model(model_config(config, data.vocab.size()));
  TrainConfig tc = train_config(config, "pretrain");
  tc.run_dir = dir / "run";
  tc.vocab_hash = data.vocab.hash();
  const TrainResult result = train_mle(*model, data.train, data.valid, tc, progress(log, "pretrain"));
  save_checkpoint(dir / "model.ckpt", *model, tc.vocab_hash);
  write_file(dir / "summary.json", training_summary(result).dump(2) + "\n");
  log << "[pretrain] best valid loss " << fixed(result.best_validation_loss) << " after "
      << result.steps << " steps\n";
  prov.write(dir);
}

struct TrainInputs {
  PreparedData data;
  std::unique_ptr<DialogueModel> model;
  std::vector<ContrastiveGroup> train_groups;
  std::vector<ContrastiveGroup> valid_groups;
};

TrainInputs load_train_inputs(const RunConfig& config, std::string_view stage, Provenance& prov) {
  require_prepared(config, stage, prov);
  const fs::path ckpt = stage_dir(config, "pretrain") / "model.ckpt";
  require(ckpt, stage, "pretrain");
  prov.input(ckpt);
  TrainInputs in;
  in.train_groups = load_split_groups(config, stage, "train", prov);
  in.valid_groups = load_split_groups(config, stage, "valid", prov);
  in.data = load_prepared(config);
  in.model = load_checkpoint(ckpt, in.data.vocab.hash()).model;
  return in;
}

void run_train(const RunConfig& config, std::ostream& log) {
  Provenance prov(config, "train");
  TrainInputs in = load_train_inputs(config, "train", prov);
  const fs::path dir = fresh_dir(config, "train");

  const ReferenceModel reference = snapshot_reference(*in.model);
  const std::string ref_before = params_hash(reference.model());
  TrainConfig tc = train_config(config, "train");
  tc.run_dir = dir / "run";
  tc.vocab_hash = in.data.vocab.hash();
  const TrainResult result =
      train_contrastive(*in.model, reference, in.data.train, in.train_groups, in.data.valid,
                        in.valid_groups, loss_config(config), tc, progress(log, "train"));
  if (params_hash(reference.model()) != ref_before)
    throw Error("reference model changed during contrastive training");
  save_checkpoint(dir / "model.ckpt", *in.model, tc.vocab_hash);
  json summary = training_summary(result);
  summary["loss"] = loss_config(config).describe();
  summary["reference_params_sha256"] = ref_before;
  write_file(dir / "summary.json", summary.dump(2) + "\n");
  log << "[train] best valid loss " << fixed(result.best_validation_loss) << " after "
      << result.steps << " steps\n";
  prov.write(dir);
}

std::unique_ptr<DialogueModel> load_source(const RunConfig& config, std::string_view stage,
                                           std::string_view source, const Vocab& vocab,
                                           Provenance& prov) {
  const fs::path ckpt = stage_dir(config, source) / "model.ckpt";
  require(ckpt, stage, source);
  prov.input(ckpt);
  return load_checkpoint(ckpt, vocab.hash()).model;
}

void run_generate(const RunConfig& config, std::ostream& log) {
  Provenance prov(config, "generate");
  require_prepared(config, "generate", prov);
  const std::string source = config.get("generate.source");
  const PreparedData data = load_prepared(config);
  auto model = load_source(config, "generate", source, data.vocab, prov);
  const fs::path dir = stage_dir(config, "generate");
  fs::create_directories(dir);
  const DecodeConfig dc = decode_config(config);

  std::vector<TokenSeq> outputs(data.test.size());
  parallel_for(data.test.size(), workers_of(config), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) outputs[i] = generate(*model, data.test[i].context, dc);
  });
  std::string text;
  for (std::size_t i = 0; i < data.test.size(); ++i) {
    const auto hyp = detokenize(outputs[i], data.vocab);
    text += json{{"id", data.raw_test[i].id},
                 {"context", data.raw_test[i].context},
                 {"reference", data.raw_test[i].response},
                 {"hypothesis", join_tokens(hyp)}}
                .dump() +
            "\n";
  }
  write_file(dir / (source + ".jsonl"), text);
  log << "[generate] decoded " << outputs.size() << " test contexts with the " << source
      << " model\n";
  prov.write(dir);
}

struct EvalInputs {
  EmbeddingTable table{1};
  NgramDistribution unigrams;
  NgramDistribution bigrams;
  EvalResources resources() const { return {&table, &unigrams, &bigrams}; }
};

std::unique_ptr<EvalInputs> eval_inputs(const RunConfig& config, const PreparedData& data) {
  auto in = std::make_unique<EvalInputs>();
  in->table = EmbeddingTable::load_word2vec(prepare_files(config).embeddings);
  std::vector<Sentence> responses;
  responses.reserve(data.raw_train.size());
  for (const auto& p : data.raw_train) responses.push_back(tokenize_text(p.response));
  in->unigrams = NgramDistribution::fit(responses, 1);
  in->bigrams = NgramDistribution::fit(responses, 2);
  return in;
}

std::string report_row(const std::string& label, const EvalReport& r, std::size_t width) {
  std::string row = label;
  row.resize(std::max(width, label.size()), ' ');
  auto cell = [&](double v) {
    std::string s = fixed(v, 2);
    row += std::string(s.size() < 9 ? 9 - s.size() : 1, ' ') + s;
  };
  for (double v : r.bleu) cell(100.0 * v);
  for (double v : r.dist) cell(100.0 * v);
  cell(100.0 * r.average);
  cell(100.0 * r.extrema);
  cell(100.0 * r.greedy);
  cell(100.0 * r.coherence);
  for (double v : r.ent) cell(v);
  return row + "\n";
}

std::string report_header(std::size_t width) {
  std::string row = "variant";
  row.resize(width, ' ');
  for (const char* h : {"BLEU-1", "BLEU-2", "BLEU-3", "BLEU-4", "Dist-1", "Dist-2", "Dist-3",
                        "Avg", "Ext", "Gre", "Coh", "Ent-1", "Ent-2"}) {
    const std::string s = h;
    row += std::string(9 - s.size(), ' ') + s;
  }
  return row + "\n";
}

void run_evaluate(const RunConfig& config, std::ostream& log) {
  Provenance prov(config, "evaluate");
  require_prepared(config, "evaluate", prov);
  const PreparedData data = load_prepared(config);
  auto mle = load_source(config, "evaluate", "pretrain", data.vocab, prov);
  auto contrastive = load_source(config, "evaluate", "train", data.vocab, prov);
  const fs::path dir = fresh_dir(config, "evaluate");
  const auto in = eval_inputs(config, data);
  const DecodeConfig dc = decode_config(config);
  const std::size_t workers = workers_of(config);

  const EvalReport a = evaluate_model(*mle, data.test, data.vocab, dc, in->resources(), workers);
  const EvalReport b =
      evaluate_model(*contrastive, data.test, data.vocab, dc, in->resources(), workers);
  for (const auto* r : {&a, &b})
    if (auto v = r->range_violation(); !v.empty()) throw Error("metric out of range: " + v);
  write_report(dir / "mle", a, "mle");
  write_report(dir / "contrastive", b, "contrastive");
  const std::size_t width = 14;
  const std::string table = "# bleu, dist and embedding metrics are percentages; ent in nats\n" +
                            report_header(width) + report_row("mle", a, width) +
                            report_row("contrastive", b, width);
  write_file(dir / "comparison.txt", table);
  log << table;
  prov.write(dir);
}

std::string row_slug(const std::string& label) {
  if (label.size() > 2 && label[0] == '(') return label.substr(1, label.find(')') - 1);
  return label;
}

void run_ablate(const RunConfig& config, std::ostream& log) {
  Provenance prov(config, "ablate");
  TrainInputs in = load_train_inputs(config, "ablate", prov);
  const fs::path dir = fresh_dir(config, "ablate");
  const ReferenceModel reference = snapshot_reference(*in.model);
  const auto ev = eval_inputs(config, in.data);
  const DecodeConfig dc = decode_config(config);
  const std::size_t workers = workers_of(config);

  TrainConfig tc = train_config(config, "train");
  if (const auto e = config.get_uint("ablate.max_epochs"); e > 0) tc.max_epochs = e;
  tc.vocab_hash = in.data.vocab.hash();

  json rows = json::array();
  std::string table = "# bleu, dist and embedding metrics are percentages; ent in nats\n";
  const std::size_t width = 38;
  table += report_header(width);
  for (const auto& row : ablation_rows(loss_config(config))) {
    const std::string slug = row_slug(row.label);
    log << "[ablate] " << row.label << ": " << row.config.describe() << "\n";
    auto target = in.model->clone();
    TrainConfig rc = tc;
    rc.run_dir = dir / slug / "run";
    const TrainResult result =
        train_contrastive(*target, reference, in.data.train, in.train_groups, in.data.valid,
                          in.valid_groups, row.config, rc, progress(log, "ablate " + slug));
    const EvalReport report =
        evaluate_model(*target, in.data.test, in.data.vocab, dc, ev->resources(), workers);
    write_report(dir / slug, report, row.label);
    rows.push_back({{"label", row.label},
                    {"loss", row.config.describe()},
                    {"training", training_summary(result)},
                    {"report", json::parse(report_json(report))}});
    table += report_row(row.label, report, width);
  }
  write_file(dir / "table.json", rows.dump(2) + "\n");
  write_file(dir / "table.txt", table);
  log << table;
  prov.write(dir);
}

EvalReport report_from_json(const json& j) {
  EvalReport r;
  for (std::size_t i = 0; i < 4; ++i) r.bleu[i] = j.at("bleu").at(i).get<double>();
  for (std::size_t i = 0; i < 3; ++i) r.dist[i] = j.at("dist").at(i).get<double>();
  r.average = j.at("average").get<double>();
  r.extrema = j.at("extrema").get<double>();
  r.greedy = j.at("greedy").get<double>();
  r.coherence = j.at("coherence").get<double>();
  for (std::size_t i = 0; i < 2; ++i) r.ent[i] = j.at("ent").at(i).get<double>();
  return r;
}

}  // namespace

PreparedData load_prepared(const RunConfig& config) {
  const auto f = prepare_files(config);
  PreparedData d;
  d.vocab = Vocab::load(f.vocab);
  d.raw_train = load_dataset(f.train, "train");
  d.raw_valid = load_dataset(f.valid, "valid");
  d.raw_test = load_dataset(f.test, "test");
  const TokenizeOptions opts{config.get_uint("data.context_limit")};
  d.train = tokenize_all(d.raw_train, d.vocab, opts);
  d.valid = tokenize_all(d.raw_valid, d.vocab, opts);
  d.test = tokenize_all(d.raw_test, d.vocab, opts);
  return d;
}

EvalReport load_report(const fs::path& dir) {
  try {
    return report_from_json(json::parse(read_file(dir / "report.json")));
  } catch (const json::exception& e) {
    throw FormatError((dir / "report.json").string() + ": " + e.what());
  }
}

std::vector<std::pair<std::string, EvalReport>> load_ablation_table(const RunConfig& config) {
  const fs::path path = stage_dir(config, "ablate") / "table.json";
  if (!fs::exists(path)) throw DependencyError("missing ablation table " + path.string());
  std::vector<std::pair<std::string, EvalReport>> out;
  try {
    for (const auto& row : json::parse(read_file(path)))
      out.emplace_back(row.at("label").get<std::string>(), report_from_json(row.at("report")));
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  return out;
}

void run_stage(std::string_view stage, const RunConfig& config, std::ostream& log) {
  config.validate();
  if (stage == "prepare") return run_prepare(config, log);
  if (stage == "build-index") return run_build_index(config, log);
  if (stage == "sample") return run_sample(config, log);
  if (stage == "pretrain") return run_pretrain(config, log);
  if (stage == "train") return run_train(config, log);
  if (stage == "generate") return run_generate(config, log);
  if (stage == "evaluate") return run_evaluate(config, log);
  if (stage == "ablate") return run_ablate(config, log);
  throw DomainError("unknown stage '" + std::string(stage) + "'");
}

}  // namespace gcdl
