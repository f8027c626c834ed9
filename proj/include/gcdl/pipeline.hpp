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

// End-to-end stages. Every stage reads its inputs from earlier stage
// directories under <workdir>, writes into <workdir>/<stage>/ and records a
// provenance.json (config hash, input and output hashes, code version).
//
//   prepare      datasets, vocab, embeddings (optionally a synthetic corpus)
//   build-index  BM25 indexes over contexts and responses of train and valid
//   sample       contrastive group caches for train and valid
//   pretrain     MLE model
//   train        contrastive fine-tuning from the MLE checkpoint
//   generate     decoded test responses of one checkpoint
//   evaluate     metric reports for the MLE and contrastive models
//   ablate       six ablation variants plus the full objective

#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "gcdl/config.hpp"
#include "gcdl/contrastive.hpp"
#include "gcdl/eval.hpp"
#include "gcdl/matcher.hpp"
#include "gcdl/synthbench.hpp"

namespace gcdl {

const std::vector<std::string>& stage_names();

std::filesystem::path stage_dir(const RunConfig& config, std::string_view stage);

/// Runs one stage. Throws DependencyError when an upstream stage has not
/// produced the artifacts this stage needs.
void run_stage(std::string_view stage, const RunConfig& config, std::ostream& log);

/// Tokenized splits and vocab written by `prepare`.
struct PreparedData {
  Vocab vocab;
  std::vector<DialoguePair> raw_train, raw_valid, raw_test;
  std::vector<TokenizedPair> train, valid, test;
};
PreparedData load_prepared(const RunConfig& config);

/// One row of the ablation table.
struct AblationResult {
  std::string label;
  EvalReport report;
  TrainResult training;
};

/// Reads <workdir>/ablate/table.json.
std::vector<std::pair<std::string, EvalReport>> load_ablation_table(const RunConfig& config);

/// Reads <dir>/report.json.
EvalReport load_report(const std::filesystem::path& dir);

ModelConfig model_config(const RunConfig& config, std::size_t vocab_size);
LossConfig loss_config(const RunConfig& config);
TrainConfig train_config(const RunConfig& config, std::string_view section);
SamplerConfig sampler_config(const RunConfig& config);
DecodeConfig decode_config(const RunConfig& config);
SynthSpec synth_spec(const RunConfig& config);

}  // namespace gcdl
