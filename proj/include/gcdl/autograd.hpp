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

// Reverse-mode automatic differentiation over dense double matrices.
//
// A Tape records every operation of one forward pass. Parameters live in a
// ParameterSet owned by the model; gradients of a backward sweep are
// accumulated into a caller-provided Gradients buffer, so several tapes can
// share one parameter set read-only.

#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gcdl/common.hpp"

namespace gcdl::ad {

using Matrix = Eigen::MatrixXd;

class ParameterSet {
 public:
  std::size_t add(std::string name, Matrix init);

  std::size_t size() const { return values_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  Matrix& value(std::size_t i) { return values_[i]; }
  const Matrix& value(std::size_t i) const { return values_[i]; }
  std::optional<std::size_t> find(std::string_view name) const;

  std::size_t scalar_count() const;
  bool all_finite() const;

  /// True when names, shapes and every stored double match exactly.
  bool identical(const ParameterSet& other) const;

 private:
  std::vector<std::string> names_;
  std::vector<Matrix> values_;
};

class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(const ParameterSet& params);

  Matrix& operator[](std::size_t i) { return grads_[i]; }
  const Matrix& operator[](std::size_t i) const { return grads_[i]; }
  std::size_t size() const { return grads_.size(); }

  void zero();
  void add(const Gradients& other);
  void scale(double factor);
  double norm() const;
  bool all_finite() const;

 private:
  std::vector<Matrix> grads_;
};

/// Handle to a node on a tape.
struct Var {
  int index = -1;
  bool valid() const { return index >= 0; }
};

class Tape {
 public:
  /// `grads` may be null, in which case nothing is recorded for backward.
  Tape(const ParameterSet& params, Gradients* grads);

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return grads_ != nullptr; }

  Var param(std::size_t index);
  Var constant(Matrix value);
  Var scalar(double value);

  const Matrix& value(Var v) const;
  double scalar_value(Var v) const;

  /// Adds `seed` to the gradient of v. Call before backward().
  void seed(Var v, const Matrix& seed);
  void seed(Var v, double seed);

  /// Propagates every seeded gradient to the parameters.
  void backward();

  std::size_t node_count() const { return nodes_.size(); }

  // Linear algebra.
  Var matmul(Var a, Var b);
  Var matmul_nt(Var a, Var b);  // a * b^T
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);  // elementwise
  Var scale(Var a, double factor);
  Var add_row(Var a, Var row);  // broadcasts a 1 x n row over every row of a
  Var add_const(Var a, const Matrix& c);

  // Elementwise nonlinearities.
  Var sigmoid(Var a);
  Var tanh(Var a);
  Var relu(Var a);

  /// Fused LSTM cell. `gates` holds pre-activations [i f g o] (B x 4H);
  /// returns [h | c] (B x 2H).
  Var lstm_cell(Var gates, Var c_prev);

  // Shape manipulation.
  Var concat_cols(std::span<const Var> parts);
  Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
  Var concat_rows(std::span<const Var> parts);
  Var slice_rows(Var a, Eigen::Index start, Eigen::Index count);

  // Row-wise reductions and normalizations.
  Var softmax_rows(Var a);
  Var log_softmax_rows(Var a);
  Var l2_normalize_rows(Var a, double eps = 1e-12);
  Var layer_norm(Var a, Var gamma, Var beta, double eps = 1e-5);

  /// Gathers rows of parameter `param` (an embedding table).
  Var embed(std::size_t param, std::span<const TokenId> ids);
  /// Column vector out(i) = a(i, ids[i]).
  Var pick(Var a, std::span<const TokenId> ids);
  Var sum(Var a);

 private:
  using Backward = std::function<void(Tape&, int)>;

  struct Node {
    Matrix value;
    Matrix grad;
    const Matrix* ref = nullptr;  // parameter leaves alias the parameter value
    bool needs_grad = false;
    int param = -1;
    Backward backward;
  };

  Var push(Matrix value, bool needs_grad, Backward backward);
  bool needs(Var v) const { return nodes_[static_cast<std::size_t>(v.index)].needs_grad; }
  Matrix& grad_ref(int index);
  template <typename Expr>
  void accumulate(Var v, const Expr& g);

  const ParameterSet& params_;
  Gradients* grads_;
  std::vector<Node> nodes_;
  std::vector<int> param_nodes_;
};

/// Adam with bias correction; state is shaped after the parameter set.
struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(const ParameterSet& params, AdamConfig config);
  void step(ParameterSet& params, const Gradients& grads);
  std::size_t steps() const { return steps_; }
  const AdamConfig& config() const { return config_; }

 private:
  AdamConfig config_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  std::size_t steps_ = 0;
};

/// Scales grads so their global L2 norm is at most max_norm. Returns the
/// norm before clipping.
double clip_global_norm(Gradients& grads, double max_norm);

}  // namespace gcdl::ad
