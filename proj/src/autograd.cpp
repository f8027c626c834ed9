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

#include <cmath>
#include <cstring>

namespace gcdl::ad {

// ---------------------------------------------------------------------------
// ParameterSet / Gradients

std::size_t ParameterSet::add(std::string name, Matrix init) {
  if (find(name)) throw Error("duplicate parameter name: " + name);
  names_.push_back(std::move(name));
  values_.push_back(std::move(init));
  return values_.size() - 1;
}

std::optional<std::size_t> ParameterSet::find(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return i;
  return std::nullopt;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& v : values_) n += static_cast<std::size_t>(v.size());
  return n;
}

bool ParameterSet::all_finite() const {
  for (const auto& v : values_)
    if (!v.allFinite()) return false;
  return true;
}

bool ParameterSet::identical(const ParameterSet& other) const {
  if (names_ != other.names_) return false;
  for (std::size_t i = 0; i < values_.size(); ++i) {
    const auto& a = values_[i];
    const auto& b = other.values_[i];
    if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
    if (std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) != 0)
      return false;
  }
  return true;
}

Gradients::Gradients(const ParameterSet& params) {
  grads_.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i)
    grads_.push_back(Matrix::Zero(params.value(i).rows(), params.value(i).cols()));
}

void Gradients::zero() {
  for (auto& g : grads_) g.setZero();
}

void Gradients::add(const Gradients& other) {
  for (std::size_t i = 0; i < grads_.size(); ++i) grads_[i] += other.grads_[i];
}

void Gradients::scale(double factor) {
  for (auto& g : grads_) g *= factor;
}

double Gradients::norm() const {
  double sq = 0.0;
  for (const auto& g : grads_) sq += g.squaredNorm();
  return std::sqrt(sq);
}

bool Gradients::all_finite() const {
  for (const auto& g : grads_)
    if (!g.allFinite()) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Tape plumbing

Tape::Tape(const ParameterSet& params, Gradients* grads)
    : params_(params), grads_(grads), param_nodes_(params.size(), -1) {
  nodes_.reserve(256);
}

Var Tape::push(Matrix value, bool needs_grad, Backward backward) {
  Node node;
  node.value = std::move(value);
  node.needs_grad = needs_grad && recording();
  if (node.needs_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var{static_cast<int>(nodes_.size() - 1)};
}

Var Tape::param(std::size_t index) {
  int& slot = param_nodes_.at(index);
  if (slot >= 0) return Var{slot};
  Node node;
  node.ref = &params_.value(index);
  node.param = static_cast<int>(index);
  node.needs_grad = recording();
  if (node.needs_grad) {
    node.backward = [](Tape& t, int self) {
      auto& n = t.nodes_[static_cast<std::size_t>(self)];
      (*t.grads_)[static_cast<std::size_t>(n.param)] += n.grad;
    };
  }
  nodes_.push_back(std::move(node));
  slot = static_cast<int>(nodes_.size() - 1);
  return Var{slot};
}

Var Tape::constant(Matrix value) { return push(std::move(value), false, nullptr); }

Var Tape::scalar(double value) { return constant(Matrix::Constant(1, 1, value)); }

const Matrix& Tape::value(Var v) const {
  const auto& n = nodes_.at(static_cast<std::size_t>(v.index));
  return n.ref ? *n.ref : n.value;
}

double Tape::scalar_value(Var v) const {
  const auto& m = value(v);
  if (m.size() != 1) throw Error("scalar_value on a non-scalar node");
  return m(0, 0);
}

Matrix& Tape::grad_ref(int index) {
  auto& n = nodes_[static_cast<std::size_t>(index)];
  if (n.grad.size() == 0) {
    const auto& v = n.ref ? *n.ref : n.value;
    n.grad = Matrix::Zero(v.rows(), v.cols());
  }
  return n.grad;
}

template <typename Expr>
void Tape::accumulate(Var v, const Expr& g) {
  if (!needs(v)) return;
  grad_ref(v.index) += g;
}

void Tape::seed(Var v, const Matrix& seed) {
  if (!recording()) throw Error("seed on a non-recording tape");
  accumulate(v, seed);
}

void Tape::seed(Var v, double seed) { this->seed(v, Matrix::Constant(1, 1, seed)); }

void Tape::backward() {
  if (!recording()) throw Error("backward on a non-recording tape");
  for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
    auto& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.needs_grad || n.grad.size() == 0 || !n.backward) continue;
    n.backward(*this, i);
  }
}

// ---------------------------------------------------------------------------
// Linear algebra

Var Tape::matmul(Var a, Var b) {
  Matrix out = value(a) * value(b);
  return push(std::move(out), needs(a) || needs(b), [a, b](Tape& t, int self) {
    const Matrix& g = t.nodes_[static_cast<std::size_t>(self)].grad;
    if (t.needs(a)) t.accumulate(a, g * t.value(b).transpose());
    if (t.needs(b)) t.accumulate(b, t.value(a).transpose() * g);
  });
}

Var Tape::matmul_nt(Var a, Var b) {
  Matrix out = value(a) * value(b).transpose();
  return push(std::move(out), needs(a) || needs(b), [a, b](Tape& t, int self) {
    const Matrix& g = t.nodes_[static_cast<std::size_t>(self)].grad;
    if (t.needs(a)) t.accumulate(a, g * t.value(b));
    if (t.needs(b)) t.accumulate(b, g.transpose() * t.value(a));
  });
}

Var Tape::add(Var a, Var b) {
  Matrix out = value(a) + value(b);
  return push(std::move(out), needs(a) || needs(b), [a, b](Tape& t, int self) {
    const Matrix& g = t.nodes_[static_cast<std::size_t>(self)].grad;
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var Tape::sub(Var a, Var b) {
  Matrix out = value(a) - value(b);
  return push(std::move(out), needs(a) || needs(b), [a, b](Tape& t, int self) {
    const Matrix& g = t.nodes_[static_cast<std::size_t>(self)].grad;
    t.accumulate(a, g);
    t.accumulate(b, -g);
  });
}

Var Tape::mul(Var a, Var b) {
  Matrix out = value(a).cwiseProduct(value(b));
  return push(std::move(out), needs(a) || needs(b), [a, b](Tape& t, int self) {
    const Matrix& g = t.nodes_[static_cast<std::size_t>(self)].grad;
    if (t.needs(a)) t.accumulate(a, g.cwiseProduct(t.value(b)));
    if (t.needs(b)) t.accumulate(b, g.cwiseProduct(t.value(a)));
  });
}

Var Tape::scale(Var a, double factor) {
  Matrix out = value(a) * factor;
  return push(std::move(out), needs(a), [a, factor](Tape& t, int self) {
    t.accumulate(a, t.nodes_[static_cast<std::size_t>(self)].grad * factor);
  });
}

Var Tape::add_row(Var a, Var row) {
  if (value(row).rows() != 1 || value(row).cols() != value(a).cols())
    throw Error("add_row: shape mismatch");
  Matrix out = value(a).rowwise() + value(row).row(0);
  return push(std::move(out), needs(a) || needs(row), [a, row](Tape& t, int self) {
    const Matrix& g = t.nodes_[static_cast<std::size_t>(self)].grad;
    t.accumulate(a, g);
    if (t.needs(row)) t.accumulate(row, g.colwise().sum());
  });
}

Var Tape::add_const(Var a, const Matrix& c) {
  Matrix out = value(a) + c;
  return push(std::move(out), needs(a), [a](Tape& t, int self) {
    t.accumulate(a, t.nodes_[static_cast<std::size_t>(self)].grad);
  });
}

// ---------------------------------------------------------------------------
// Nonlinearities

Var Tape::sigmoid(Var a) {
  Matrix out = value(a).unaryExpr([](double x) {
    return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  });
  return push(std::move(out), needs(a), [a](Tape& t, int self) {
    const auto& n = t.nodes_[static_cast<std::size_t>(self)];
    t.accumulate(a, n.grad.cwiseProduct(n.value.cwiseProduct((1.0 - n.value.array()).matrix())));
  });
}

Var Tape::tanh(Var a) {
  Matrix out = value(a).array().tanh().matrix();
  return push(std::move(out), needs(a), [a](Tape& t, int self) {
    const auto& n = t.nodes_[static_cast<std::size_t>(self)];
    t.accumulate(a, n.grad.cwiseProduct((1.0 - n.value.array().square()).matrix()));
  });
}

Var Tape::relu(Var a) {
  Matrix out = value(a).cwiseMax(0.0);
  return push(std::move(out), needs(a), [a](Tape& t, int self) {
    const auto& n = t.nodes_[static_cast<std::size_t>(self)];
    t.accumulate(a, (t.value(a).array() > 0.0).cast<double>().matrix().cwiseProduct(n.grad));
  });
}

Var Tape::lstm_cell(Var gates, Var c_prev) {
  const Matrix& z = value(gates);
  const Matrix& cp = value(c_prev);
  const Eigen::Index h = cp.cols();
  if (z.cols() != 4 * h || z.rows() != cp.rows()) throw Error("lstm_cell: shape mismatch");
  auto sig = [](double x) {
    return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  };
  Matrix act(z.rows(), 4 * h);
  act.leftCols(2 * h) = z.leftCols(2 * h).unaryExpr(sig);
  act.middleCols(2 * h, h) = z.middleCols(2 * h, h).array().tanh().matrix();
  act.rightCols(h) = z.rightCols(h).unaryExpr(sig);
  Matrix c = act.leftCols(h).cwiseProduct(act.middleCols(2 * h, h)) +
             act.middleCols(h, h).cwiseProduct(cp);
  Matrix tc = c.array().tanh().matrix();
  Matrix out(z.rows(), 2 * h);
  out.leftCols(h) = act.rightCols(h).cwiseProduct(tc);
  out.rightCols(h) = c;
  return push(std::move(out), needs(gates) || needs(c_prev),
              [gates, c_prev, act, tc, h](Tape& t, int self) {
                const Matrix& g = t.nodes_[static_cast<std::size_t>(self)].grad;
                const auto gh = g.leftCols(h).array();
                const auto i = act.leftCols(h).array();
                const auto f = act.middleCols(h, h).array();
                const auto cand = act.middleCols(2 * h, h).array();
                const auto o = act.rightCols(h).array();
                const Eigen::ArrayXXd dc =
                    g.rightCols(h).array() + gh * o * (1.0 - tc.array().square());
                if (t.needs(gates)) {
                  Matrix dz(g.rows(), 4 * h);
                  dz.leftCols(h) = (dc * cand * i * (1.0 - i)).matrix();
                  dz.middleCols(h, h) = (dc * t.value(c_prev).array() * f * (1.0 - f)).matrix();
                  dz.middleCols(2 * h, h) = (dc * i * (1.0 - cand.square())).matrix();
                  dz.rightCols(h) = (gh * tc.array() * o * (1.0 - o)).matrix();
                  t.accumulate(gates, dz);
                }
                if (t.needs(c_prev)) t.accumulate(c_prev, (dc * f).matrix());
              });
}

// ---------------------------------------------------------------------------
// Shapes

Var Tape::concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw Error("concat_cols: no inputs");
  const Eigen::Index rows = value(parts[0]).rows();
  Eigen::Index cols = 0;
  bool any = false;
  for (Var p : parts) {
    if (value(p).rows() != rows) throw Error("concat_cols: row mismatch");
    cols += value(p).cols();
    any = any || needs(p);
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (Var p : parts) {
    out.middleCols(at, value(p).cols()) = value(p);
    at += value(p).cols();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return push(std::move(out), any, [inputs](Tape& t, int self) {
    const Matrix& g = t.nodes_[static_cast<std::size_t>(self)].grad;
    Eigen::Index at = 0;
    for (Var p : inputs) {
      const Eigen::Index c = t.value(p).cols();
      t.accumulate(p, g.middleCols(at, c));
      at += c;
    }
  });
}

Var Tape::slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > value(a).cols())
    throw Error("slice_cols: out of range");
  Matrix out = value(a).middleCols(start, count);
  return push(std::move(out), needs(a), [a, start, count](Tape& t, int self) {
    t.grad_ref(a.index).middleCols(start, count) += t.nodes_[static_cast<std::size_t>(self)].grad;
  });
}

Var Tape::concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw Error("concat_rows: no inputs");
  const Eigen::Index cols = value(parts[0]).cols();
  Eigen::Index rows = 0;
  bool any = false;
  for (Var p : parts) {
    if (value(p).cols() != cols) throw Error("concat_rows: column mismatch");
    rows += value(p).rows();
    any = any || needs(p);
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (Var p : parts) {
    out.middleRows(at, value(p).rows()) = value(p);
    at += value(p).rows();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return push(std::move(out), any, [inputs](Tape& t, int self) {
    const Matrix& g = t.nodes_[static_cast<std::size_t>(self)].grad;
    Eigen::Index at = 0;
    for (Var p : inputs) {
      const Eigen::Index r = t.value(p).rows();
      t.accumulate(p, g.middleRows(at, r));
      at += r;
    }
  });
}

Var Tape::slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > value(a).rows())
    throw Error("slice_rows: out of range");
  Matrix out = value(a).middleRows(start, count);
  return push(std::move(out), needs(a), [a, start, count](Tape& t, int self) {
    t.grad_ref(a.index).middleRows(start, count) += t.nodes_[static_cast<std::size_t>(self)].grad;
  });
}

// ---------------------------------------------------------------------------
// Row-wise ops

namespace {

Matrix softmax_of(const Matrix& x) {
  Matrix out = x.colwise() - x.rowwise().maxCoeff();
  out = out.array().exp().matrix();
  out = out.array().colwise() / out.rowwise().sum().array();
  return out;
}

}  // namespace

Var Tape::softmax_rows(Var a) {
  Matrix out = softmax_of(value(a));
  return push(std::move(out), needs(a), [a](Tape& t, int self) {
    const auto& n = t.nodes_[static_cast<std::size_t>(self)];
    const Eigen::VectorXd dot = n.grad.cwiseProduct(n.value).rowwise().sum();
    t.accumulate(a, n.value.cwiseProduct((n.grad.colwise() - dot)));
  });
}

Var Tape::log_softmax_rows(Var a) {
  const Matrix& x = value(a);
  const Eigen::VectorXd mx = x.rowwise().maxCoeff();
  Matrix shifted = x.colwise() - mx;
  const Eigen::VectorXd lse = shifted.array().exp().rowwise().sum().log().matrix();
  Matrix out = shifted.colwise() - lse;
  return push(std::move(out), needs(a), [a](Tape& t, int self) {
    const auto& n = t.nodes_[static_cast<std::size_t>(self)];
    const Eigen::VectorXd gsum = n.grad.rowwise().sum();
    Matrix probs = n.value.array().exp().matrix();
    t.accumulate(a, n.grad - Matrix(probs.array().colwise() * gsum.array()));
  });
}

Var Tape::l2_normalize_rows(Var a, double eps) {
  const Matrix& x = value(a);
  const Eigen::VectorXd norms = (x.rowwise().squaredNorm().array() + eps).sqrt().matrix();
  Matrix out = x.array().colwise() / norms.array();
  return push(std::move(out), needs(a), [a, norms](Tape& t, int self) {
    const auto& n = t.nodes_[static_cast<std::size_t>(self)];
    const Eigen::VectorXd dot = n.grad.cwiseProduct(n.value).rowwise().sum();
    Matrix dx = n.grad - Matrix(n.value.array().colwise() * dot.array());
    t.accumulate(a, Matrix(dx.array().colwise() / norms.array()));
  });
}

Var Tape::layer_norm(Var a, Var gamma, Var beta, double eps) {
  const Matrix& x = value(a);
  const Eigen::Index d = x.cols();
  if (value(gamma).cols() != d || value(beta).cols() != d) throw Error("layer_norm: shape");
  const Eigen::VectorXd mean = x.rowwise().mean();
  Matrix centered = x.colwise() - mean;
  const Eigen::VectorXd inv_std =
      (centered.array().square().rowwise().mean() + eps).rsqrt().matrix();
  Matrix xhat = centered.array().colwise() * inv_std.array();
  Matrix out = (xhat.array().rowwise() * value(gamma).row(0).array()).matrix();
  out.rowwise() += value(beta).row(0);
  const bool any = needs(a) || needs(gamma) || needs(beta);
  return push(std::move(out), any, [a, gamma, beta, xhat, inv_std](Tape& t, int self) {
    const Matrix& g = t.nodes_[static_cast<std::size_t>(self)].grad;
    if (t.needs(beta)) t.accumulate(beta, g.colwise().sum());
    if (t.needs(gamma)) t.accumulate(gamma, g.cwiseProduct(xhat).colwise().sum());
    if (t.needs(a)) {
      Matrix dxhat = g.array().rowwise() * t.value(gamma).row(0).array();
      const Eigen::VectorXd m1 = dxhat.rowwise().mean();
      const Eigen::VectorXd m2 = dxhat.cwiseProduct(xhat).rowwise().mean();
      Matrix dx = (dxhat.colwise() - m1) - Matrix(xhat.array().colwise() * m2.array());
      t.accumulate(a, Matrix(dx.array().colwise() * inv_std.array()));
    }
  });
}

Var Tape::embed(std::size_t param, std::span<const TokenId> ids) {
  const Matrix& table = params_.value(param);
  Matrix out(static_cast<Eigen::Index>(ids.size()), table.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= table.rows())
      throw DomainError("token id out of vocab: " + std::to_string(ids[i]));
    out.row(static_cast<Eigen::Index>(i)) = table.row(ids[i]);
  }
  std::vector<TokenId> rows(ids.begin(), ids.end());
  return push(std::move(out), true, [param, rows](Tape& t, int self) {
    const Matrix& g = t.nodes_[static_cast<std::size_t>(self)].grad;
    Matrix& target = (*t.grads_)[param];
    for (std::size_t i = 0; i < rows.size(); ++i)
      target.row(rows[i]) += g.row(static_cast<Eigen::Index>(i));
  });
}

Var Tape::pick(Var a, std::span<const TokenId> ids) {
  const Matrix& x = value(a);
  if (static_cast<Eigen::Index>(ids.size()) != x.rows()) throw Error("pick: row mismatch");
  Matrix out(x.rows(), 1);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const TokenId c = ids[static_cast<std::size_t>(i)];
    if (c < 0 || c >= x.cols()) throw DomainError("token id out of vocab: " + std::to_string(c));
    out(i, 0) = x(i, c);
  }
  std::vector<TokenId> cols(ids.begin(), ids.end());
  return push(std::move(out), needs(a), [a, cols](Tape& t, int self) {
    const Matrix& g = t.nodes_[static_cast<std::size_t>(self)].grad;
    Matrix& ga = t.grad_ref(a.index);
    for (std::size_t i = 0; i < cols.size(); ++i)
      ga(static_cast<Eigen::Index>(i), cols[i]) += g(static_cast<Eigen::Index>(i), 0);
  });
}

Var Tape::sum(Var a) {
  Matrix out = Matrix::Constant(1, 1, value(a).sum());
  return push(std::move(out), needs(a), [a](Tape& t, int self) {
    const double g = t.nodes_[static_cast<std::size_t>(self)].grad(0, 0);
    t.grad_ref(a.index).array() += g;
  });
}

// ---------------------------------------------------------------------------
// Optimization

Adam::Adam(const ParameterSet& params, AdamConfig config) : config_(config) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_.push_back(Matrix::Zero(params.value(i).rows(), params.value(i).cols()));
    v_.push_back(Matrix::Zero(params.value(i).rows(), params.value(i).cols()));
  }
}

void Adam::step(ParameterSet& params, const Gradients& grads) {
  ++steps_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * grads[i];
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * grads[i].cwiseAbs2();
    params.value(i).array() -=
        config_.lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + config_.eps);
  }
}

double clip_global_norm(Gradients& grads, double max_norm) {
  const double norm = grads.norm();
  if (max_norm > 0 && norm > max_norm) grads.scale(max_norm / norm);
  return norm;
}

}  // namespace gcdl::ad
