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

#include "gcdl/models.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "gcdl/training.hpp"
#include "test_util.hpp"

namespace gcdl {
namespace {

using testing::micro_config;
using testing::random_pairs;
using testing::TempDir;

class ModelsTest : public ::testing::TestWithParam<Architecture> {};

INSTANTIATE_TEST_SUITE_P(Arch, ModelsTest,
                         ::testing::Values(Architecture::Seq2SeqAttention,
                                           Architecture::Transformer),
                         [](const auto& info) {
                           return info.param == Architecture::Transformer ? "Transformer"
                                                                          : "Seq2Seq";
                         });

void zero_params(DialogueModel& m) {
  for (std::size_t i = 0; i < m.params().size(); ++i) m.params().value(i).setZero();
}

TEST_P(ModelsTest, UniformModelLogProb) {
  auto model = make_model(micro_config(GetParam()));
  zero_params(*model);
  const TokenSeq context = {4, 5, 6};
  const TokenSeq response = {7, 8, 9, kEos};
  EXPECT_NEAR(model->cond_log_prob(context, response), -4.0 * std::log(12.0), 1e-12);
  const auto pairs = random_pairs(4, 12, 1);
  EXPECT_NEAR(mle_loss(*model, pairs), std::log(12.0), 1e-12);
}

TEST_P(ModelsTest, LogProbIsNonPositive) {
  auto model = make_model(micro_config(GetParam()));
  for (const auto& p : random_pairs(30, 12, 2))
    EXPECT_LE(model->cond_log_prob(p.context, p.response), 0.0);
}

// Step-by-step decoding pass recomputes the teacher-forced sum.
TEST_P(ModelsTest, StepwiseOracleMatchesTeacherForcing) {
  auto model = make_model(micro_config(GetParam()));
  for (const auto& p : random_pairs(10, 12, 3)) {
    ad::Tape tape(model->params(), nullptr);
    const auto enc = model->encode(tape, p.context);
    auto state = model->start(tape, enc);
    double total = 0.0;
    TokenId prev = kBos;
    for (TokenId t : p.response) {
      const auto& row = tape.value(model->step(tape, enc, state, prev));
      total += row(0, t);
      prev = t;
    }
    EXPECT_NEAR(model->cond_log_prob(p.context, p.response), total, 1e-9);
  }
}

TEST_P(ModelsTest, StepDistributionsNormalized) {
  auto model = make_model(micro_config(GetParam()));
  for (const auto& p : random_pairs(5, 12, 4)) {
    ad::Tape tape(model->params(), nullptr);
    const auto enc = model->encode(tape, p.context);
    const auto& lp = tape.value(model->teacher_forced_log_probs(tape, enc, p.response));
    for (Eigen::Index r = 0; r < lp.rows(); ++r)
      EXPECT_NEAR(lp.row(r).array().exp().sum(), 1.0, 1e-5);
  }
}

TEST_P(ModelsTest, BatchAgreesWithSingle) {
  auto model = make_model(micro_config(GetParam()));
  const auto pairs = random_pairs(9, 12, 5);
  const auto batch = model->cond_log_prob_batch(pairs, 3);
  for (std::size_t i = 0; i < pairs.size(); ++i)
    EXPECT_NEAR(batch[i], model->cond_log_prob(pairs[i].context, pairs[i].response), 1e-5);
}

TEST_P(ModelsTest, MleBatchIsMeanOfSingles) {
  auto model = make_model(micro_config(GetParam()));
  const auto pairs = random_pairs(6, 12, 6);
  double mean = 0.0;
  for (const auto& p : pairs) mean += mle_loss(*model, std::span<const TokenizedPair>(&p, 1));
  EXPECT_NEAR(mle_loss(*model, pairs), mean / 6.0, 1e-12);
}

TEST_P(ModelsTest, MleGradientMatchesFiniteDifferences) {
  auto model = make_model(micro_config(GetParam()));
  const auto pairs = random_pairs(3, 12, 7);
  ad::Gradients grads(model->params());
  mle_loss_and_grad(*model, pairs, grads);
  const double err = testing::max_fd_relative_error(
      *model, grads, [&] { return mle_loss(*model, pairs); });
  EXPECT_LT(err, 1e-4);
}

TEST_P(ModelsTest, OutOfVocabThrows) {
  auto model = make_model(micro_config(GetParam()));
  EXPECT_THROW(model->cond_log_prob(TokenSeq{4}, TokenSeq{12, kEos}), DomainError);
  EXPECT_THROW(model->cond_log_prob(TokenSeq{40}, TokenSeq{5, kEos}), DomainError);
  EXPECT_THROW(model->cond_log_prob(TokenSeq{4}, TokenSeq{5}), DomainError);
}

TEST_P(ModelsTest, BeamOneEqualsGreedyAndRespectsMaxLen) {
  auto model = make_model(micro_config(GetParam()));
  for (const auto& p : random_pairs(8, 12, 8)) {
    DecodeConfig greedy;
    greedy.max_len = 6;
    DecodeConfig beam = greedy;
    beam.strategy = DecodeStrategy::Beam;
    beam.beam_width = 1;
    const auto a = generate(*model, p.context, greedy);
    EXPECT_EQ(a, generate(*model, p.context, beam));
    EXPECT_LE(a.size(), 6u);
    beam.beam_width = 3;
    EXPECT_LE(generate(*model, p.context, beam).size(), 6u);
  }
}

TEST_P(ModelsTest, MemorizesFivePairs) {
  ModelConfig cfg = micro_config(GetParam());
  cfg.vocab_size = 16;
  cfg.hidden = 32;
  cfg.embed_dim = 16;
  cfg.ffn = 64;
  cfg.heads = 4;
  cfg.init_scale = 0.1;
  auto model = make_model(cfg);
  const auto pairs = random_pairs(5, 16, 9);
  TrainConfig tc;
  tc.lr = 0.01;
  tc.batch_size = 5;
  tc.max_epochs = 500;
  tc.patience = 1000;
  tc.validations_per_epoch = 1;
  train_mle(*model, pairs, pairs, tc);
  DecodeConfig dc;
  int hits = 0;
  for (const auto& p : pairs) {
    TokenSeq want(p.response.begin(), p.response.end() - 1);
    hits += generate(*model, p.context, dc) == want ? 1 : 0;
  }
  EXPECT_GE(hits, 4);
}

TEST_P(ModelsTest, SnapshotIsFrozenAndDifferenceZero) {
  auto model = make_model(micro_config(GetParam()));
  const ReferenceModel ref = snapshot_reference(*model);
  const auto pairs = random_pairs(5, 12, 10);
  std::vector<double> before;
  for (const auto& p : pairs) {
    before.push_back(ref.cond_log_prob(p.context, p.response));
    EXPECT_EQ(before.back(), model->cond_log_prob(p.context, p.response));
  }
  testing::jitter(*model, 0.1, 1);
  for (std::size_t i = 0; i < pairs.size(); ++i)
    EXPECT_EQ(ref.cond_log_prob(pairs[i].context, pairs[i].response), before[i]);
}

TEST_P(ModelsTest, CheckpointRoundTripBitExact) {
  TempDir dir;
  auto model = make_model(micro_config(GetParam()));
  testing::jitter(*model, 0.05, 2);
  save_checkpoint(dir / "m.ckpt", *model, "abc");
  const auto loaded = load_checkpoint(dir / "m.ckpt", std::string_view("abc"));
  EXPECT_TRUE(loaded.model->params().identical(model->params()));
  EXPECT_EQ(loaded.model->arch(), GetParam());
  EXPECT_EQ(loaded.vocab_hash, "abc");
  EXPECT_THROW(load_checkpoint(dir / "m.ckpt", std::string_view("xyz")), FormatError);
}

TEST(Checkpoint, CorruptFilesRejected) {
  TempDir dir;
  auto model = make_model(micro_config());
  save_checkpoint(dir / "m.ckpt", *model, "h");
  std::string bytes = read_file(dir / "m.ckpt");
  write_file(dir / "magic.ckpt", "XXXXXXXX" + bytes.substr(8));
  write_file(dir / "short.ckpt", bytes.substr(0, bytes.size() - 8));
  write_file(dir / "long.ckpt", bytes + "junk");
  EXPECT_THROW(load_checkpoint(dir / "magic.ckpt"), FormatError);
  EXPECT_THROW(load_checkpoint(dir / "short.ckpt"), FormatError);
  EXPECT_THROW(load_checkpoint(dir / "long.ckpt"), FormatError);
}

TEST(ModelConfig, Validation) {
  ModelConfig c = micro_config();
  c.vocab_size = 3;
  EXPECT_THROW(c.validate(), DomainError);
  c = micro_config(Architecture::Transformer);
  c.heads = 3;
  EXPECT_THROW(c.validate(), DomainError);
  EXPECT_EQ(architecture_from_string("seq2seq"), Architecture::Seq2SeqAttention);
  EXPECT_THROW(architecture_from_string("hred"), DomainError);
}

TEST(ModelConfig, LengthNormalizationDividesByLength) {
  ModelConfig c = micro_config();
  auto raw = make_model(c);
  c.normalize_by_length = true;
  auto norm = make_model(c);
  const TokenSeq ctx = {4, 5}, resp = {6, 7, kEos};
  EXPECT_NEAR(norm->cond_log_prob(ctx, resp), raw->cond_log_prob(ctx, resp) / 3.0, 1e-12);
}

}  // namespace
}  // namespace gcdl
