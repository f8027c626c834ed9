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

#include <algorithm>
#include <array>
#include <cmath>
#include <map>

namespace gcdl {

// ---------------------------------------------------------------------------
// Difference function

namespace {

const TokenizedPair& pair_at(std::span<const TokenizedPair> pairs, PairId id) {
  if (id < 0 || static_cast<std::size_t>(id) >= pairs.size())
    throw DomainError("pair id " + std::to_string(id) + " outside the corpus");
  return pairs[static_cast<std::size_t>(id)];
}

}  // namespace

DifferenceValue difference(const DialogueModel& target, const ReferenceModel& reference,
                           const TokenizedPair& context_pair, const TokenizedPair& response_pair) {
  if (target.config().vocab_size != reference.model().config().vocab_size)
    throw DomainError("target and reference vocab sizes differ");
  return DifferenceValue{context_pair.id, response_pair.id,
                         target.cond_log_prob(context_pair.context, response_pair.response) -
                             reference.cond_log_prob(context_pair.context, response_pair.response)};
}

DifferenceValue difference(const DialogueModel& target, const ReferenceModel& reference,
                           const TokenizedPair& pair) {
  return difference(target, reference, pair, pair);
}

DifferenceValue difference(const LogProbFn& target, const LogProbFn& reference,
                           const TokenizedPair& context_pair, const TokenizedPair& response_pair) {
  return DifferenceValue{context_pair.id, response_pair.id,
                         target(context_pair.context, response_pair.response) -
                             reference(context_pair.context, response_pair.response)};
}

// ---------------------------------------------------------------------------
// Scalar losses

namespace {

struct Sig {
  double value;  // clamped sigmoid
  double slope;  // d value / dD, zero where the clamp is active
};

Sig clamped_sigmoid(double d, double eps) {
  const double s = d >= 0 ? 1.0 / (1.0 + std::exp(-d)) : std::exp(d) / (1.0 + std::exp(d));
  if (s < eps) return {eps, 0.0};
  if (s > 1.0 - eps) return {1.0 - eps, 0.0};
  return {s, s * (1.0 - s)};
}

void check_eps(double eps) {
  if (!(eps > 0.0 && eps < 0.01)) throw DomainError("sigmoid clamp must lie in (0, 0.01)");
}

}  // namespace

LossValue pairwise_loss(double d_pos, double d_neg, double eps) {
  const std::array<double, 1> p{d_pos}, n{d_neg};
  return group_loss(p, n, eps);
}

LossValue group_loss(std::span<const double> d_pos, std::span<const double> d_neg, double eps) {
  check_eps(eps);
  if (d_pos.empty() || d_neg.empty()) throw DomainError("group loss needs positives and negatives");
  const double np = static_cast<double>(d_pos.size());
  const double nn = static_cast<double>(d_neg.size());
  LossValue out;
  double pos = 0.0, neg = 0.0;
  for (double d : d_pos) {
    const Sig s = clamped_sigmoid(d, eps);
    pos += std::log(s.value);
    out.grad_pos.push_back(-s.slope / s.value / np);
  }
  for (double d : d_neg) {
    const Sig s = clamped_sigmoid(d, eps);
    neg += std::log(1.0 - s.value);
    out.grad_neg.push_back(s.slope / (1.0 - s.value) / nn);
  }
  out.loss = -pos / np - neg / nn;
  return out;
}

LossValue weighted_group_loss(std::span<const double> d_pos, std::span<const double> w_pos,
                              std::span<const double> d_neg, std::span<const double> w_neg,
                              double eps) {
  check_eps(eps);
  if (d_pos.empty() || d_neg.empty()) throw DomainError("group loss needs positives and negatives");
  if (d_pos.size() != w_pos.size() || d_neg.size() != w_neg.size())
    throw DomainError("weights and differences differ in length");
  const double np = static_cast<double>(d_pos.size());
  const double nn = static_cast<double>(d_neg.size());
  LossValue out;
  double pos = 0.0, neg = 0.0;
  for (std::size_t i = 0; i < d_pos.size(); ++i) {
    const double w = w_pos[i];
    if (!(w > 0.0 && w <= 1.0)) throw DomainError("positive weight outside (0, 1]");
    const Sig s = clamped_sigmoid(d_pos[i], eps);
    const double inner = w * s.value;
    if (inner < eps) {
      pos += std::log(eps);
      out.grad_pos.push_back(0.0);
    } else {
      pos += std::log(inner);
      out.grad_pos.push_back(-w * s.slope / inner / np);
    }
  }
  for (std::size_t i = 0; i < d_neg.size(); ++i) {
    const double w = w_neg[i];
    if (!(w >= -1.0 && w <= 0.0)) throw DomainError("negative weight outside [-1, 0]");
    const Sig s = clamped_sigmoid(d_neg[i], eps);
    const double inner = 1.0 + w * s.value;
    if (inner < eps) {
      neg += std::log(eps);
      out.grad_neg.push_back(0.0);
    } else {
      neg += std::log(inner);
      out.grad_neg.push_back(-w * s.slope / inner / nn);
    }
  }
  out.loss = -pos / np - neg / nn;
  return out;
}

// ---------------------------------------------------------------------------
// Configuration

std::string_view to_string(LossVariant variant) {
  switch (variant) {
    case LossVariant::Pairwise:
      return "pairwise";
    case LossVariant::Group:
      return "group";
    case LossVariant::Weighted:
      return "weighted";
  }
  return "unknown";
}

LossVariant loss_variant_from_string(std::string_view name) {
  if (name == "pairwise") return LossVariant::Pairwise;
  if (name == "group") return LossVariant::Group;
  if (name == "weighted") return LossVariant::Weighted;
  throw DomainError("unknown loss variant '" + std::string(name) + "'");
}

void LossConfig::validate() const {
  if (!(epsilon > 0.0 && epsilon < 0.01)) throw DomainError("loss epsilon must lie in (0, 0.01)");
  if (k < 1) throw DomainError("loss k must be >= 1");
  if (no_response_side && no_context_side)
    throw DomainError("no_response_side and no_context_side leave no sampled entries");
  if (!(mle_mix >= 0.0) || !std::isfinite(mle_mix)) throw DomainError("mle_mix must be >= 0");
}

LossVariant LossConfig::effective_variant() const {
  if (no_group || variant == LossVariant::Pairwise) return LossVariant::Pairwise;
  if (no_scores) return LossVariant::Group;
  return variant;
}

std::string LossConfig::describe() const {
  std::string out(to_string(effective_variant()));
  auto flag = [&](bool on, const char* name) {
    if (on) out += std::string("+") + name;
  };
  flag(no_group, "no_group");
  flag(no_pos_group, "no_pos_group");
  flag(no_neg_group, "no_neg_group");
  flag(no_response_side, "no_response_side");
  flag(no_context_side, "no_context_side");
  flag(no_scores, "no_scores");
  return out;
}

std::vector<AblationRow> ablation_rows(const LossConfig& base) {
  LossConfig full = base;
  full.variant = LossVariant::Weighted;
  full.no_group = full.no_pos_group = full.no_neg_group = false;
  full.no_response_side = full.no_context_side = full.no_scores = false;

  std::vector<AblationRow> rows;
  auto add = [&](std::string label, bool LossConfig::*flag) {
    LossConfig c = full;
    c.*flag = true;
    rows.push_back({std::move(label), c});
  };
  add("(a) w/o group-wise sampling", &LossConfig::no_group);
  add("(b) w/o group-wise positive sampling", &LossConfig::no_pos_group);
  add("(c) w/o group-wise negative sampling", &LossConfig::no_neg_group);
  add("(d) w/o response-side sampling", &LossConfig::no_response_side);
  add("(e) w/o context-side sampling", &LossConfig::no_context_side);
  add("(f) w/o matching scores", &LossConfig::no_scores);
  rows.push_back({"full", full});
  return rows;
}

// ---------------------------------------------------------------------------
// Term selection

namespace {

enum class Side { Anchor, Response, Context };

// Response-side entries keep the anchor's context; context-side entries keep
// its response. Random pads carry no side flag, so the ids decide.
Side side_of(const GroupEntry& e, PairId anchor) {
  if (e.source == EntrySource::Anchor) return Side::Anchor;
  if (e.source == EntrySource::ResponseSide) return Side::Response;
  if (e.source == EntrySource::ContextSide) return Side::Context;
  return e.context_id == anchor ? Side::Response : Side::Context;
}

}  // namespace

SelectedTerms select_terms(const ContrastiveGroup& group, const LossConfig& config) {
  auto keep = [&](const GroupEntry& e) {
    const Side side = side_of(e, group.anchor);
    if (side == Side::Response && config.no_response_side) return false;
    if (side == Side::Context && config.no_context_side) return false;
    return true;
  };
  SelectedTerms out;
  for (const auto& e : group.positives)
    if (keep(e)) out.positives.push_back(e);
  for (const auto& e : group.negatives)
    if (keep(e)) out.negatives.push_back(e);

  const bool pairwise = config.effective_variant() == LossVariant::Pairwise;
  if (pairwise || config.no_pos_group) {
    auto anchor = std::find_if(out.positives.begin(), out.positives.end(), [](const GroupEntry& e) {
      return e.source == EntrySource::Anchor;
    });
    if (anchor == out.positives.end())
      throw DomainError("group " + std::to_string(group.anchor) + " has no anchor entry");
    out.positives = {*anchor};
  }
  if (pairwise || config.no_neg_group) out.negatives.resize(std::min<std::size_t>(1, out.negatives.size()));
  if (out.positives.empty() || out.negatives.empty())
    throw DomainError("group " + std::to_string(group.anchor) + " has no terms after ablation");
  return out;
}

LossValue group_objective(const SelectedTerms& terms, std::span<const double> d_pos,
                          std::span<const double> d_neg, const LossConfig& config) {
  switch (config.effective_variant()) {
    case LossVariant::Pairwise:
      return pairwise_loss(d_pos.front(), d_neg.front(), config.epsilon);
    case LossVariant::Group:
      return group_loss(d_pos, d_neg, config.epsilon);
    case LossVariant::Weighted: {
      std::vector<double> w_pos, w_neg;
      for (const auto& e : terms.positives) w_pos.push_back(e.weight);
      for (const auto& e : terms.negatives) w_neg.push_back(e.weight);
      return weighted_group_loss(d_pos, w_pos, d_neg, w_neg, config.epsilon);
    }
  }
  throw DomainError("unknown loss variant");
}

// ---------------------------------------------------------------------------
// Model-level losses

namespace {

double entry_difference(const DialogueModel& target, const ReferenceModel& reference,
                        std::span<const TokenizedPair> pairs, const GroupEntry& e) {
  return difference(target, reference, pair_at(pairs, e.context_id), pair_at(pairs, e.response_id))
      .d;
}

void require_group(const ContrastiveGroup& group, std::size_t k, std::size_t n) {
  const std::string problem = check_group(group, k, n);
  if (!problem.empty()) throw DomainError("invalid group: " + problem);
}

}  // namespace

double pairwise_loss(const DialogueModel& target, const ReferenceModel& reference,
                     std::span<const TokenizedPair> pairs, const GroupEntry& positive,
                     const GroupEntry& negative, double eps) {
  return pairwise_loss(entry_difference(target, reference, pairs, positive),
                       entry_difference(target, reference, pairs, negative), eps)
      .loss;
}

double group_loss(const DialogueModel& target, const ReferenceModel& reference,
                  std::span<const TokenizedPair> pairs, const ContrastiveGroup& group,
                  std::size_t k, double eps) {
  require_group(group, k, pairs.size());
  std::vector<double> dp, dn;
  for (const auto& e : group.positives) dp.push_back(entry_difference(target, reference, pairs, e));
  for (const auto& e : group.negatives) dn.push_back(entry_difference(target, reference, pairs, e));
  return group_loss(dp, dn, eps).loss;
}

double weighted_group_loss(const DialogueModel& target, const ReferenceModel& reference,
                           std::span<const TokenizedPair> pairs, const ContrastiveGroup& group,
                           std::size_t k, double eps) {
  require_group(group, k, pairs.size());
  std::vector<double> dp, dn, wp, wn;
  for (const auto& e : group.positives) {
    dp.push_back(entry_difference(target, reference, pairs, e));
    wp.push_back(e.weight);
  }
  for (const auto& e : group.negatives) {
    dn.push_back(entry_difference(target, reference, pairs, e));
    wn.push_back(e.weight);
  }
  return weighted_group_loss(dp, wp, dn, wn, eps).loss;
}

// ---------------------------------------------------------------------------
// Fine-tuning objective

ContrastiveObjective::ContrastiveObjective(const ReferenceModel& reference,
                                           std::span<const TokenizedPair> train_pairs,
                                           std::span<const ContrastiveGroup> train_groups,
                                           std::span<const TokenizedPair> valid_pairs,
                                           std::span<const ContrastiveGroup> valid_groups,
                                           LossConfig config, std::size_t workers)
    : reference_(reference), config_(std::move(config)), workers_(std::max<std::size_t>(1, workers)) {
  config_.validate();
  if (train_groups.empty()) throw DomainError("group cache is empty");
  if (valid_groups.empty()) throw DomainError("validation group cache is empty");
  for (const auto& g : train_groups) require_group(g, config_.k, train_pairs.size());
  for (const auto& g : valid_groups) require_group(g, config_.k, valid_pairs.size());
  train_ = prepare(train_pairs, train_groups, workers_);
  valid_ = prepare(valid_pairs, valid_groups, workers_);
}

ContrastiveObjective::Split ContrastiveObjective::prepare(
    std::span<const TokenizedPair> pairs, std::span<const ContrastiveGroup> groups,
    std::size_t workers) const {
  Split split;
  split.pairs = pairs;
  split.groups.resize(groups.size());
  split.ref_pos.resize(groups.size());
  split.ref_neg.resize(groups.size());
  const auto& ref = reference_.model();
  parallel_for(groups.size(), workers, [&](std::size_t begin, std::size_t end) {
    for (std::size_t g = begin; g < end; ++g) {
      split.groups[g] = select_terms(groups[g], config_);
      for (const auto& e : split.groups[g].positives)
        split.ref_pos[g].push_back(ref.cond_log_prob(pair_at(pairs, e.context_id).context,
                                                     pair_at(pairs, e.response_id).response));
      for (const auto& e : split.groups[g].negatives)
        split.ref_neg[g].push_back(ref.cond_log_prob(pair_at(pairs, e.context_id).context,
                                                     pair_at(pairs, e.response_id).response));
    }
  });
  return split;
}

ObjectiveStats ContrastiveObjective::group_stats(const DialogueModel& model, bool validation,
                                                 std::size_t index, ad::Gradients* grads,
                                                 double scale) const {
  const Split& split = validation ? valid_ : train_;
  const SelectedTerms& terms = split.groups.at(index);
  ad::Tape tape(model.params(), grads);

  std::map<PairId, EncodedContext> encoded;
  auto log_prob = [&](const GroupEntry& e) {
    auto it = encoded.find(e.context_id);
    if (it == encoded.end())
      it = encoded.emplace(e.context_id, model.encode(tape, pair_at(split.pairs, e.context_id).context))
               .first;
    return model.response_log_prob(tape, it->second, pair_at(split.pairs, e.response_id).response);
  };

  std::vector<ad::Var> pos_nodes, neg_nodes;
  std::vector<double> dp, dn;
  for (std::size_t i = 0; i < terms.positives.size(); ++i) {
    pos_nodes.push_back(log_prob(terms.positives[i]));
    dp.push_back(tape.scalar_value(pos_nodes.back()) - split.ref_pos[index][i]);
  }
  for (std::size_t i = 0; i < terms.negatives.size(); ++i) {
    neg_nodes.push_back(log_prob(terms.negatives[i]));
    dn.push_back(tape.scalar_value(neg_nodes.back()) - split.ref_neg[index][i]);
  }

  const LossValue lv = group_objective(terms, dp, dn, config_);
  ObjectiveStats stats;
  stats.loss = lv.loss;
  for (double d : dp) stats.sum_d_pos += d;
  for (double d : dn) stats.sum_d_neg += d;
  stats.n_pos = dp.size();
  stats.n_neg = dn.size();

  ad::Var nll;
  if (config_.mle_mix > 0.0) {
    const auto& anchor = pair_at(split.pairs, terms.positives.front().context_id);
    nll = token_mean_nll(tape, model, anchor);
    stats.loss += config_.mle_mix * tape.scalar_value(nll);
  }

  if (grads) {
    for (std::size_t i = 0; i < pos_nodes.size(); ++i)
      if (lv.grad_pos[i] != 0.0) tape.seed(pos_nodes[i], scale * lv.grad_pos[i]);
    for (std::size_t i = 0; i < neg_nodes.size(); ++i)
      if (lv.grad_neg[i] != 0.0) tape.seed(neg_nodes[i], scale * lv.grad_neg[i]);
    if (nll.valid()) tape.seed(nll, scale * config_.mle_mix);
    tape.backward();
  }
  return stats;
}

namespace {

void merge(ObjectiveStats& into, const ObjectiveStats& s) {
  into.loss += s.loss;
  into.sum_d_pos += s.sum_d_pos;
  into.sum_d_neg += s.sum_d_neg;
  into.n_pos += s.n_pos;
  into.n_neg += s.n_neg;
}

}  // namespace

ObjectiveStats ContrastiveObjective::loss_and_grad(const DialogueModel& model,
                                                   std::span<const std::size_t> batch,
                                                   ad::Gradients& grads) {
  // Fixed-size chunks reduced in order keep results independent of workers.
  const double scale = 1.0 / static_cast<double>(batch.size());
  const std::size_t chunks = (batch.size() + kChunk - 1) / kChunk;
  std::vector<ObjectiveStats> partial(chunks);
  std::vector<ad::Gradients> local(chunks);
  parallel_for(chunks, workers_, [&](std::size_t cb, std::size_t ce) {
    for (std::size_t c = cb; c < ce; ++c) {
      local[c] = ad::Gradients(model.params());
      const std::size_t end = std::min(batch.size(), (c + 1) * kChunk);
      for (std::size_t i = c * kChunk; i < end; ++i)
        merge(partial[c], group_stats(model, false, batch[i], &local[c], scale));
    }
  });

  ObjectiveStats total;
  for (std::size_t c = 0; c < chunks; ++c) {
    merge(total, partial[c]);
    grads.add(local[c]);
  }
  total.loss *= scale;
  return total;
}

ObjectiveStats ContrastiveObjective::validate(const DialogueModel& model) {
  const std::size_t n = valid_.groups.size();
  const std::size_t chunks = (n + kChunk - 1) / kChunk;
  std::vector<ObjectiveStats> partial(chunks);
  parallel_for(chunks, workers_, [&](std::size_t cb, std::size_t ce) {
    for (std::size_t c = cb; c < ce; ++c)
      for (std::size_t i = c * kChunk; i < std::min(n, (c + 1) * kChunk); ++i)
        merge(partial[c], group_stats(model, true, i, nullptr, 1.0));
  });
  ObjectiveStats total;
  for (const auto& p : partial) merge(total, p);
  total.loss /= static_cast<double>(n);
  return total;
}

TrainResult train_contrastive(DialogueModel& target, const ReferenceModel& reference,
                              std::span<const TokenizedPair> train_pairs,
                              std::span<const ContrastiveGroup> train_groups,
                              std::span<const TokenizedPair> valid_pairs,
                              std::span<const ContrastiveGroup> valid_groups,
                              const LossConfig& loss, const TrainConfig& train,
                              const TrainObserver& observer) {
  if (target.config().vocab_size != reference.model().config().vocab_size)
    throw DomainError("target and reference vocab sizes differ");
  ContrastiveObjective objective(reference, train_pairs, train_groups, valid_pairs, valid_groups,
                                 loss, train.workers);
  return train_loop(target, objective, train, observer);
}

}  // namespace gcdl
