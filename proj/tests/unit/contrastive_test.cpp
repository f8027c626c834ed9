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

#include "gcdl/contrastive.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "../common/oracles.hpp"
#include "test_util.hpp"

namespace gcdl {
namespace {

using testing::micro_config;
using testing::random_pairs;

const double kTwoLn2 = 2.0 * std::log(2.0);

std::vector<double> random_vec(std::mt19937_64& rng, std::size_t n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

TEST(ScalarLoss, ZeroDifferencesGiveTwoLn2) {
  EXPECT_NEAR(pairwise_loss(0.0, 0.0).loss, kTwoLn2, 1e-12);
  for (std::size_t k : {1u, 3u, 5u}) {
    const std::vector<double> dp(2 * k + 1, 0.0), dn(2 * k, 0.0);
    const std::vector<double> wp(2 * k + 1, 1.0), wn(2 * k, -1.0);
    EXPECT_NEAR(group_loss(dp, dn).loss, kTwoLn2, 1e-12);
    EXPECT_NEAR(weighted_group_loss(dp, wp, dn, wn).loss, kTwoLn2, 1e-12);
  }
}

TEST(ScalarLoss, PairwiseAtPlusMinusOne) {
  // -2 ln s(1); s(1) = 0.7310585786300049.
  EXPECT_NEAR(pairwise_loss(1.0, -1.0).loss, 0.626523, 1e-6);
  EXPECT_NEAR(pairwise_loss(1.0, -1.0).loss, oracle::pairwise(1.0, -1.0), 1e-12);
}

TEST(ScalarLoss, PerfectSeparationApproachesZero) {
  const double l = pairwise_loss(1e3, -1e3).loss;
  EXPECT_GE(l, 0.0);
  EXPECT_LT(l, 3e-7);
}

TEST(ScalarLoss, DegenerateGroupEqualsPairwise) {
  const std::vector<double> dp = {0.7, 0.7, 0.7}, dn = {-0.2, -0.2};
  EXPECT_NEAR(group_loss(dp, dn).loss, pairwise_loss(0.7, -0.2).loss, 1e-12);
}

TEST(ScalarLoss, HandSetGroupMatchesDirectSum) {
  const std::vector<double> dp = {0.3, -1.2, 2.5, 0.0, 0.9, -0.4, 1.1};
  const std::vector<double> dn = {-2.0, 0.5, 1.7, -0.3, 0.05, -0.8};
  EXPECT_NEAR(group_loss(dp, dn).loss, oracle::group(dp, dn), 1e-12);
}

TEST(ScalarLoss, WeightedWorkedExample) {
  const std::vector<double> dp = {0, 0, 0}, wp = {1.0, 0.5, 0.5};
  const std::vector<double> dn = {0, 0}, wn = {-1.0, -0.5};
  const auto v = weighted_group_loss(dp, wp, dn, wn);
  const double pos = -(std::log(0.5) + 2.0 * std::log(0.25)) / 3.0;
  const double neg = -(std::log(0.5) + std::log(0.75)) / 2.0;
  EXPECT_NEAR(pos, 1.15525, 1e-5);
  EXPECT_NEAR(neg, 0.49041, 1e-5);
  EXPECT_NEAR(v.loss, 1.64566, 1e-5);
  EXPECT_NEAR(v.loss, pos + neg, 1e-12);
}

TEST(ScalarLoss, ZeroNegativeWeightAnnihilatesTerm) {
  const std::vector<double> dp = {0.4, 0.1, -0.3};
  const std::vector<double> wp = {1.0, 0.8, 0.6};
  const std::vector<double> wn = {0.0, -0.7};
  const auto a = weighted_group_loss(dp, wp, std::vector<double>{3.0, 0.2}, wn);
  const auto b = weighted_group_loss(dp, wp, std::vector<double>{-5.0, 0.2}, wn);
  EXPECT_NEAR(a.loss, b.loss, 1e-12);
  EXPECT_EQ(a.grad_neg[0], 0.0);
}

TEST(ScalarLoss, WeightRangeViolationThrows) {
  const std::vector<double> d1 = {0.0}, d2 = {0.0};
  EXPECT_THROW(weighted_group_loss(d1, std::vector<double>{0.0}, d2, std::vector<double>{-1.0}),
               DomainError);
  EXPECT_THROW(weighted_group_loss(d1, std::vector<double>{1.0}, d2, std::vector<double>{0.1}),
               DomainError);
}

// Reduction chain over random D vectors.
TEST(ScalarLossProperty, ReductionChain) {
  std::mt19937_64 rng(21);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t k = 1 + t % 5;
    const auto dp = random_vec(rng, 2 * k + 1, -6, 6);
    const auto dn = random_vec(rng, 2 * k, -6, 6);
    const std::vector<double> wp(dp.size(), 1.0), wn(dn.size(), -1.0);
    EXPECT_NEAR(weighted_group_loss(dp, wp, dn, wn).loss, group_loss(dp, dn).loss, 1e-10);
    const std::vector<double> p1 = {dp[0]}, n1 = {dn[0]};
    EXPECT_NEAR(group_loss(p1, n1).loss, pairwise_loss(dp[0], dn[0]).loss, 1e-10);
  }
}

// Analytic dL/dD against central differences, and the sign conditions.
TEST(ScalarLossProperty, GradientSignsAndValues) {
  std::mt19937_64 rng(22);
  const double h = 1e-6;
  for (int t = 0; t < 200; ++t) {
    const std::size_t k = 1 + t % 4;
    auto dp = random_vec(rng, 2 * k + 1, -5, 5);
    auto dn = random_vec(rng, 2 * k, -5, 5);
    const auto wp = random_vec(rng, dp.size(), 0.05, 1.0);
    const auto wn = random_vec(rng, dn.size(), -1.0, -0.01);
    const auto v = weighted_group_loss(dp, wp, dn, wn);
    EXPECT_NEAR(v.loss, oracle::weighted(dp, wp, dn, wn), 1e-12);
    for (std::size_t i = 0; i < dp.size(); ++i) {
      EXPECT_LT(v.grad_pos[i], 0.0);
      const double saved = dp[i];
      dp[i] = saved + h;
      const double up = weighted_group_loss(dp, wp, dn, wn).loss;
      dp[i] = saved - h;
      const double down = weighted_group_loss(dp, wp, dn, wn).loss;
      dp[i] = saved;
      EXPECT_NEAR(v.grad_pos[i], (up - down) / (2 * h), 1e-6);
    }
    for (std::size_t i = 0; i < dn.size(); ++i) {
      EXPECT_GT(v.grad_neg[i], 0.0);
      const double saved = dn[i];
      dn[i] = saved + h;
      const double up = weighted_group_loss(dp, wp, dn, wn).loss;
      dn[i] = saved - h;
      const double down = weighted_group_loss(dp, wp, dn, wn).loss;
      dn[i] = saved;
      EXPECT_NEAR(v.grad_neg[i], (up - down) / (2 * h), 1e-6);
    }
  }
}

TEST(ScalarLossProperty, LowerBound) {
  std::mt19937_64 rng(23);
  for (int t = 0; t < 200; ++t) {
    const std::size_t k = 1 + t % 4;
    const auto wp = random_vec(rng, 2 * k + 1, 0.05, 1.0);
    const auto wn = random_vec(rng, 2 * k, -1.0, 0.0);
    double bound = 0.0;
    for (double w : wp) bound -= std::log(w);
    bound /= static_cast<double>(wp.size());
    const auto dp = random_vec(rng, wp.size(), -5, 5);
    const auto dn = random_vec(rng, wn.size(), -5, 5);
    EXPECT_GE(weighted_group_loss(dp, wp, dn, wn).loss, bound - 1e-12);
    const std::vector<double> best_p(wp.size(), 40.0), best_n(wn.size(), -40.0);
    EXPECT_NEAR(weighted_group_loss(best_p, wp, best_n, wn).loss, bound, 1e-5);
  }
}

TEST(LossConfig, VariantsAndAblationRows) {
  LossConfig base;
  const auto rows = ablation_rows(base);
  ASSERT_EQ(rows.size(), 7u);
  EXPECT_EQ(rows.back().label, "full");
  std::set<std::string> described;
  for (const auto& r : rows) {
    r.config.validate();
    described.insert(r.config.describe());
  }
  EXPECT_EQ(described.size(), 7u);
  EXPECT_EQ(rows[0].config.effective_variant(), LossVariant::Pairwise);
  EXPECT_EQ(rows[5].config.effective_variant(), LossVariant::Group);
  EXPECT_EQ(rows[6].config.effective_variant(), LossVariant::Weighted);
  EXPECT_EQ(loss_variant_from_string("group"), LossVariant::Group);
  EXPECT_THROW(loss_variant_from_string("nce"), DomainError);
}

ContrastiveGroup micro_group(PairId a) {
  // Pairs 0..5; k = 1.
  ContrastiveGroup g;
  g.anchor = a;
  const PairId o1 = (a + 1) % 6, o2 = (a + 2) % 6, o3 = (a + 3) % 6, o4 = (a + 4) % 6;
  g.positives = {{a, a, 1.0, 1.0, EntrySource::Anchor},
                 {a, o1, 0.6, 0.6, EntrySource::ResponseSide},
                 {o2, a, 0.3, 0.3, EntrySource::ContextSide}};
  g.negatives = {{a, o3, -0.8, -0.8, EntrySource::ResponseSide},
                 {o4, a, -0.4, -0.4, EntrySource::RandomPad}};
  return g;
}

TEST(SelectTerms, AblationsPickExpectedEntries) {
  const auto g = micro_group(0);
  LossConfig c;
  c.k = 1;
  auto t = select_terms(g, c);
  EXPECT_EQ(t.positives.size(), 3u);
  EXPECT_EQ(t.negatives.size(), 2u);
  c.no_group = true;
  t = select_terms(g, c);
  EXPECT_EQ(t.positives.size(), 1u);
  EXPECT_EQ(t.positives[0].source, EntrySource::Anchor);
  EXPECT_EQ(t.negatives.size(), 1u);
  c = LossConfig{};
  c.k = 1;
  c.no_response_side = true;
  t = select_terms(g, c);
  EXPECT_EQ(t.positives.size(), 2u);
  ASSERT_EQ(t.negatives.size(), 1u);
  // The pad entry keeps the anchor response, so it counts as context-side.
  EXPECT_EQ(t.negatives[0].source, EntrySource::RandomPad);
  c = LossConfig{};
  c.k = 1;
  c.no_context_side = true;
  t = select_terms(g, c);
  EXPECT_EQ(t.positives.size(), 2u);
  ASSERT_EQ(t.negatives.size(), 1u);
  EXPECT_EQ(t.negatives[0].source, EntrySource::ResponseSide);
}

TEST(Difference, IdenticalModelsGiveZero) {
  auto model = make_model(micro_config());
  const ReferenceModel ref = snapshot_reference(*model);
  for (const auto& p : random_pairs(10, 12, 30)) EXPECT_EQ(difference(*model, ref, p).d, 0.0);
}

TEST(Difference, ScaledProbabilitiesGiveLength) {
  auto model = make_model(micro_config());
  const ReferenceModel ref = snapshot_reference(*model);
  LogProbFn reference = [&](auto c, auto r) { return ref.cond_log_prob(c, r); };
  LogProbFn target = [&](auto c, auto r) {
    return ref.cond_log_prob(c, r) + static_cast<double>(r.size());
  };
  for (const auto& p : random_pairs(5, 12, 31))
    EXPECT_NEAR(difference(target, reference, p, p).d, static_cast<double>(p.response.size()),
                1e-12);
}

TEST(Difference, TwoPassOracle) {
  auto target = make_model(micro_config(Architecture::Seq2SeqAttention, 5));
  auto other = make_model(micro_config(Architecture::Seq2SeqAttention, 6));
  const ReferenceModel ref = snapshot_reference(*other);
  const auto pairs = random_pairs(6, 12, 32);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& c = pairs[i];
    const auto& r = pairs[(i + 1) % pairs.size()];
    const double want = target->cond_log_prob(c.context, r.response) -
                        other->cond_log_prob(c.context, r.response);
    const auto dv = difference(*target, ref, c, r);
    EXPECT_NEAR(dv.d, want, 1e-12);
    EXPECT_EQ(dv.context_id, c.id);
    EXPECT_EQ(dv.response_id, r.id);
  }
}

TEST(Difference, VocabMismatchThrows) {
  auto target = make_model(micro_config());
  ModelConfig c = micro_config();
  c.vocab_size = 13;
  auto other = make_model(c);
  const ReferenceModel ref = snapshot_reference(*other);
  const auto pairs = random_pairs(1, 12, 33);
  EXPECT_THROW(difference(*target, ref, pairs[0]), DomainError);
}

TEST(ModelLoss, MatchesScalarFormsOnDifferences) {
  auto target = make_model(micro_config());
  const ReferenceModel ref = snapshot_reference(*target);
  testing::jitter(*target, 0.2, 4);
  const auto pairs = random_pairs(6, 12, 34);
  const auto g = micro_group(2);
  std::vector<double> dp, dn, wp, wn;
  for (const auto& e : g.positives) {
    dp.push_back(difference(*target, ref, pairs[static_cast<std::size_t>(e.context_id)],
                            pairs[static_cast<std::size_t>(e.response_id)])
                     .d);
    wp.push_back(e.weight);
  }
  for (const auto& e : g.negatives) {
    dn.push_back(difference(*target, ref, pairs[static_cast<std::size_t>(e.context_id)],
                            pairs[static_cast<std::size_t>(e.response_id)])
                     .d);
    wn.push_back(e.weight);
  }
  EXPECT_NEAR(group_loss(*target, ref, pairs, g, 1), oracle::group(dp, dn), 1e-12);
  EXPECT_NEAR(weighted_group_loss(*target, ref, pairs, g, 1), oracle::weighted(dp, wp, dn, wn),
              1e-12);
  EXPECT_NEAR(pairwise_loss(*target, ref, pairs, g.positives[0], g.negatives[0]),
              oracle::pairwise(dp[0], dn[0]), 1e-12);
  EXPECT_THROW(group_loss(*target, ref, pairs, g, 3), DomainError);
}

class WeightedGradient : public ::testing::TestWithParam<Architecture> {};
INSTANTIATE_TEST_SUITE_P(Arch, WeightedGradient,
                         ::testing::Values(Architecture::Seq2SeqAttention,
                                           Architecture::Transformer),
                         [](const auto& info) {
                           return info.param == Architecture::Transformer ? "Transformer"
                                                                          : "Seq2Seq";
                         });

TEST_P(WeightedGradient, MatchesFiniteDifferences) {
  auto target = make_model(micro_config(GetParam()));
  const ReferenceModel ref = snapshot_reference(*target);
  testing::jitter(*target, 0.15, 5);
  const auto pairs = random_pairs(6, 12, 35);
  const std::vector<ContrastiveGroup> groups = {micro_group(1)};
  LossConfig lc;
  lc.k = 1;
  ContrastiveObjective obj(ref, pairs, groups, pairs, groups, lc);
  ad::Gradients grads(target->params());
  obj.group_stats(*target, false, 0, &grads, 1.0);
  const double err = testing::max_fd_relative_error(
      *target, grads, [&] { return obj.group_stats(*target, false, 0, nullptr, 1.0).loss; });
  EXPECT_LT(err, 1e-4);
}

TEST(TrainContrastive, ZeroStepsKeepReferenceOutputs) {
  auto target = make_model(micro_config());
  const ReferenceModel ref = snapshot_reference(*target);
  const auto pairs = random_pairs(6, 12, 36);
  std::vector<ContrastiveGroup> groups;
  for (PairId a = 0; a < 6; ++a) {
    auto g = micro_group(a);
    for (auto& e : g.positives) e.weight = 1.0;
    for (auto& e : g.negatives) e.weight = -1.0;
    groups.push_back(g);
  }
  LossConfig lc;
  lc.k = 1;
  TrainConfig tc;
  tc.max_epochs = 0;
  const auto r = train_contrastive(*target, ref, pairs, groups, pairs, groups, lc, tc);
  EXPECT_EQ(r.steps, 0u);
  EXPECT_NEAR(r.final_validation_loss, kTwoLn2, 1e-12);
  EXPECT_TRUE(target->params().identical(ref.model().params()));
}

TEST(TrainContrastive, SeparatesAndKeepsReferenceFrozen) {
  auto target = make_model(micro_config());
  const ReferenceModel ref = snapshot_reference(*target);
  const auto frozen = ref.model().clone();
  const auto pairs = random_pairs(6, 12, 37);
  std::vector<ContrastiveGroup> groups;
  for (PairId a = 0; a < 6; ++a) groups.push_back(micro_group(a));
  LossConfig lc;
  lc.k = 1;
  TrainConfig tc;
  tc.lr = 0.01;
  tc.batch_size = 3;
  tc.max_epochs = 40;
  tc.patience = 100;
  tc.workers = 2;
  const auto r = train_contrastive(*target, ref, pairs, groups, pairs, groups, lc, tc);
  EXPECT_TRUE(ref.model().params().identical(frozen->params()));
  EXPECT_LT(r.best_validation_loss, kTwoLn2);
  const auto& last = r.log.back();
  EXPECT_GT(last.mean_d_pos, 0.0);
  EXPECT_LT(last.mean_d_neg, 0.0);
}

TEST(TrainContrastive, EmptyCacheThrows) {
  auto target = make_model(micro_config());
  const ReferenceModel ref = snapshot_reference(*target);
  const auto pairs = random_pairs(6, 12, 38);
  const std::vector<ContrastiveGroup> none;
  const std::vector<ContrastiveGroup> one = {micro_group(0)};
  LossConfig lc;
  lc.k = 1;
  EXPECT_THROW(train_contrastive(*target, ref, pairs, none, pairs, one, lc, TrainConfig{}),
               DomainError);
}

TEST(TrainContrastive, WorkerCountDoesNotChangeResult) {
  const auto pairs = random_pairs(6, 12, 39);
  std::vector<ContrastiveGroup> groups;
  for (PairId a = 0; a < 6; ++a) groups.push_back(micro_group(a));
  LossConfig lc;
  lc.k = 1;
  std::vector<double> losses;
  for (std::size_t w : {1u, 3u}) {
    auto target = make_model(micro_config());
    const ReferenceModel ref = snapshot_reference(*target);
    TrainConfig tc;
    tc.lr = 0.01;
    tc.batch_size = 4;
    tc.max_epochs = 3;
    tc.workers = w;
    losses.push_back(
        train_contrastive(*target, ref, pairs, groups, pairs, groups, lc, tc).final_validation_loss);
  }
  EXPECT_EQ(losses[0], losses[1]);
}

}  // namespace
}  // namespace gcdl
