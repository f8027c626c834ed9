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

#include "gcdl/autograd.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

namespace gcdl::ad {
namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

using Build = std::function<Var(Tape&)>;

// Contracts the op output against fixed weights so every entry matters.
double run(const ParameterSet& params, Gradients* grads, const Build& build) {
  Tape tape(params, grads);
  const Var out = build(tape);
  const Matrix w = random_matrix(tape.value(out).rows(), tape.value(out).cols(), 99);
  const Var loss = tape.sum(tape.mul(out, tape.constant(w)));
  if (grads) {
    tape.seed(loss, 1.0);
    tape.backward();
  }
  return tape.scalar_value(loss);
}

double max_fd_error(ParameterSet& params, const Build& build) {
  Gradients grads(params);
  run(params, &grads, build);
  double worst = 0.0;
  const double h = 1e-6;
  for (std::size_t p = 0; p < params.size(); ++p)
    for (Eigen::Index i = 0; i < params.value(p).size(); ++i) {
      double& x = params.value(p).data()[i];
      const double saved = x;
      x = saved + h;
      const double up = run(params, nullptr, build);
      x = saved - h;
      const double down = run(params, nullptr, build);
      x = saved;
      const double numeric = (up - down) / (2 * h);
      const double analytic = grads[p].data()[i];
      worst = std::max(worst, std::abs(numeric - analytic) /
                                  std::max({std::abs(numeric), std::abs(analytic), 1e-6}));
    }
  return worst;
}

struct OpCase {
  const char* name;
  Build build;
};

class OpGradient : public ::testing::TestWithParam<OpCase> {};

// a: 3x4, b: 4x3, c: 3x4, row: 1x4, table: 6x4, gates: 3x8, cell: 3x2
ParameterSet make_params() {
  ParameterSet p;
  p.add("a", random_matrix(3, 4, 1));
  p.add("b", random_matrix(4, 3, 2));
  p.add("c", random_matrix(3, 4, 3));
  p.add("row", random_matrix(1, 4, 4));
  p.add("table", random_matrix(6, 4, 5));
  p.add("gates", random_matrix(3, 8, 6));
  p.add("cell", random_matrix(3, 2, 7));
  return p;
}

const TokenId kIds[] = {5, 0, 3};
const TokenId kPick[] = {1, 3, 0};

TEST_P(OpGradient, MatchesFiniteDifferences) {
  ParameterSet params = make_params();
  EXPECT_LT(max_fd_error(params, GetParam().build), 1e-6) << GetParam().name;
}

INSTANTIATE_TEST_SUITE_P(
    Ops, OpGradient,
    ::testing::Values(
        OpCase{"matmul", [](Tape& t) { return t.matmul(t.param(0), t.param(1)); }},
        OpCase{"matmul_nt", [](Tape& t) { return t.matmul_nt(t.param(0), t.param(2)); }},
        OpCase{"add", [](Tape& t) { return t.add(t.param(0), t.param(2)); }},
        OpCase{"sub", [](Tape& t) { return t.sub(t.param(0), t.param(2)); }},
        OpCase{"mul", [](Tape& t) { return t.mul(t.param(0), t.param(2)); }},
        OpCase{"scale", [](Tape& t) { return t.scale(t.param(0), -2.5); }},
        OpCase{"add_row", [](Tape& t) { return t.add_row(t.param(0), t.param(3)); }},
        OpCase{"add_const",
               [](Tape& t) { return t.add_const(t.param(0), random_matrix(3, 4, 8)); }},
        OpCase{"sigmoid", [](Tape& t) { return t.sigmoid(t.param(0)); }},
        OpCase{"tanh", [](Tape& t) { return t.tanh(t.param(0)); }},
        OpCase{"relu", [](Tape& t) { return t.relu(t.param(0)); }},
        OpCase{"lstm_cell", [](Tape& t) { return t.lstm_cell(t.param(5), t.param(6)); }},
        OpCase{"concat_cols",
               [](Tape& t) {
                 const Var parts[] = {t.param(0), t.param(2)};
                 return t.concat_cols(parts);
               }},
        OpCase{"slice_cols", [](Tape& t) { return t.slice_cols(t.param(0), 1, 2); }},
        OpCase{"concat_rows",
               [](Tape& t) {
                 const Var parts[] = {t.param(0), t.param(3)};
                 return t.concat_rows(parts);
               }},
        OpCase{"slice_rows", [](Tape& t) { return t.slice_rows(t.param(0), 1, 2); }},
        OpCase{"softmax_rows", [](Tape& t) { return t.softmax_rows(t.param(0)); }},
        OpCase{"log_softmax_rows", [](Tape& t) { return t.log_softmax_rows(t.param(0)); }},
        OpCase{"l2_normalize_rows", [](Tape& t) { return t.l2_normalize_rows(t.param(0)); }},
        OpCase{"layer_norm",
               [](Tape& t) { return t.layer_norm(t.param(0), t.param(3), t.param(3)); }},
        OpCase{"embed", [](Tape& t) { return t.embed(4, kIds); }},
        OpCase{"pick",
               [](Tape& t) { return t.pick(t.log_softmax_rows(t.param(0)), kPick); }},
        OpCase{"sum", [](Tape& t) { return t.sum(t.tanh(t.param(1))); }},
        OpCase{"reused",
               [](Tape& t) {
                 const Var a = t.param(0);
                 return t.mul(t.tanh(a), t.add(a, a));
               }}),
    [](const auto& info) { return std::string(info.param.name); });

TEST(Tape, NoGradTapeMatchesRecordingForward) {
  const ParameterSet params = make_params();
  Gradients grads(params);
  const Build b = [](Tape& t) { return t.softmax_rows(t.matmul(t.param(0), t.param(1))); };
  EXPECT_EQ(run(params, nullptr, b), run(params, &grads, b));
}

TEST(Tape, GradientsAccumulateAcrossTapes) {
  const ParameterSet params = make_params();
  const Build b = [](Tape& t) { return t.tanh(t.param(0)); };
  Gradients once(params), twice(params);
  run(params, &once, b);
  run(params, &twice, b);
  run(params, &twice, b);
  EXPECT_TRUE(twice[0].isApprox(2.0 * once[0], 1e-14));
  EXPECT_EQ(twice[1].norm(), 0.0);
}

TEST(Adam, FirstStepMovesBySignTimesLr) {
  ParameterSet params;
  params.add("w", (Matrix(1, 3) << 1.0, 2.0, 3.0).finished());
  Gradients g(params);
  g[0] << 0.5, -4.0, 0.0;
  Adam adam(params, AdamConfig{.lr = 0.1});
  adam.step(params, g);
  EXPECT_NEAR(params.value(0)(0, 0), 0.9, 1e-6);
  EXPECT_NEAR(params.value(0)(0, 1), 2.1, 1e-6);
  EXPECT_EQ(params.value(0)(0, 2), 3.0);
  EXPECT_EQ(adam.steps(), 1u);
}

TEST(ClipGlobalNorm, ScalesOnlyAboveThreshold) {
  ParameterSet params;
  params.add("a", Matrix::Zero(1, 2));
  params.add("b", Matrix::Zero(1, 1));
  Gradients g(params);
  g[0] << 3.0, 0.0;
  g[1] << 4.0;
  EXPECT_DOUBLE_EQ(clip_global_norm(g, 10.0), 5.0);
  EXPECT_DOUBLE_EQ(g.norm(), 5.0);
  EXPECT_DOUBLE_EQ(clip_global_norm(g, 1.0), 5.0);
  EXPECT_NEAR(g.norm(), 1.0, 1e-12);
  EXPECT_NEAR(g[1](0, 0), 0.8, 1e-12);
}

TEST(ParameterSet, IdenticalAndFinite) {
  ParameterSet a = make_params();
  ParameterSet b = make_params();
  EXPECT_TRUE(a.identical(b));
  b.value(2)(0, 0) = std::nextafter(b.value(2)(0, 0), 10.0);
  EXPECT_FALSE(a.identical(b));
  EXPECT_TRUE(a.all_finite());
  a.value(0)(1, 1) = std::nan("");
  EXPECT_FALSE(a.all_finite());
  EXPECT_EQ(a.find("table"), std::optional<std::size_t>(4));
  EXPECT_FALSE(a.find("missing").has_value());
  EXPECT_EQ(a.scalar_count(), 12u + 12u + 12u + 4u + 24u + 24u + 6u);
}

}  // namespace
}  // namespace gcdl::ad
