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

#include <gtest/gtest.h>

#include <nlohmann/json.hpp>
#include <sstream>

#include "test_util.hpp"

namespace gcdl {
namespace {

using testing::TempDir;

RunConfig tiny_config(const std::filesystem::path& workdir) {
  RunConfig c = RunConfig::parse(
      "seed = 13\n"
      "paths.workdir = " + workdir.string() + "\n"
      "synth.generate = true\n"
      "synth.topics = 6\n"
      "synth.vocab_size = 60\n"
      "synth.train_size = 120\n"
      "synth.valid_size = 40\n"
      "synth.test_size = 20\n"
      "synth.embedding_dim = 12\n"
      "sampler.pool = 20\n"
      "sampler.pad = 10\n"
      "model.embed_dim = 8\n"
      "model.hidden = 8\n"
      "pretrain.batch_size = 32\n"
      "pretrain.max_epochs = 1\n"
      "train.batch_size = 32\n"
      "train.max_epochs = 1\n"
      "ablate.max_epochs = 1\n"
      "decode.max_len = 8\n",
      "tiny");
  c.validate();
  return c;
}

void run(const RunConfig& c, std::string_view stage) {
  std::ostringstream log;
  run_stage(stage, c, log);
}

TEST(Pipeline, TrainBeforePretrainNamesMissingStage) {
  TempDir dir;
  const RunConfig c = tiny_config(dir.path());
  run(c, "prepare");
  try {
    run(c, "train");
    FAIL() << "expected DependencyError";
  } catch (const DependencyError& e) {
    EXPECT_NE(std::string(e.what()).find("'pretrain'"), std::string::npos) << e.what();
  }
  try {
    run(c, "sample");
    FAIL() << "expected DependencyError";
  } catch (const DependencyError& e) {
    EXPECT_NE(std::string(e.what()).find("'build-index'"), std::string::npos) << e.what();
  }
}

TEST(Pipeline, UnknownStageRejected) {
  TempDir dir;
  EXPECT_THROW(run(tiny_config(dir.path()), "deploy"), Error);
}

TEST(Pipeline, EndToEndWithProvenance) {
  TempDir dir;
  const RunConfig c = tiny_config(dir.path());
  for (const auto& stage : stage_names()) {
    SCOPED_TRACE(stage);
    run(c, stage);
    const auto prov_path = stage_dir(c, stage) / "provenance.json";
    ASSERT_TRUE(std::filesystem::exists(prov_path));
    const auto prov = nlohmann::json::parse(read_file(prov_path));
    EXPECT_EQ(prov.at("stage"), stage);
    EXPECT_EQ(prov.at("config_hash"), c.hash());
    EXPECT_FALSE(prov.at("outputs").empty());
  }

  const std::string groups = read_file(stage_dir(c, "sample") / "train.groups.jsonl");
  run(c, "sample");
  EXPECT_EQ(read_file(stage_dir(c, "sample") / "train.groups.jsonl"), groups);

  const EvalReport mle = load_report(stage_dir(c, "evaluate") / "mle");
  EXPECT_GE(mle.dist[0], 0.0);
  EXPECT_LE(mle.bleu[0], 100.0);
  const auto table = load_ablation_table(c);
  ASSERT_EQ(table.size(), 7u);
  EXPECT_EQ(table.front().first, "(a) w/o group-wise sampling");
  EXPECT_EQ(table.back().first, "full");

  const auto summary = nlohmann::json::parse(read_file(stage_dir(c, "train") / "summary.json"));
  EXPECT_TRUE(summary.contains("reference_params_sha256"));
}

}  // namespace
}  // namespace gcdl
