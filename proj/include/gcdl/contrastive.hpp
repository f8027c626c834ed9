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

// Difference function, pairwise / group / weighted-group contrastive losses
// and the fine-tuning objective built on them.
//
// D((c, r)) = log p_target(r | c) - log p_reference(r | c). Every loss is
// written in terms of D, so the scalar forms below also supply dL/dD, which
// the model-level objective chains into the target parameters.

#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "gcdl/models.hpp"
#include "gcdl/sampler.hpp"
#include "gcdl/training.hpp"

namespace gcdl {

struct DifferenceValue {
  PairId context_id = 0;
  PairId response_id = 0;
  double d = 0.0;
};

using LogProbFn =
    std::function<double(std::span<const TokenId> context, std::span<const TokenId> response)>;

/// d for (context of `context_pair`, response of `response_pair`). Throws
/// DomainError when the two models disagree on vocab size.
DifferenceValue difference(const DialogueModel& target, const ReferenceModel& reference,
                           const TokenizedPair& context_pair, const TokenizedPair& response_pair);
DifferenceValue difference(const DialogueModel& target, const ReferenceModel& reference,
                           const TokenizedPair& pair);
/// Same, over arbitrary scorers.
DifferenceValue difference(const LogProbFn& target, const LogProbFn& reference,
                           const TokenizedPair& context_pair, const TokenizedPair& response_pair);

inline constexpr double kSigmoidClamp = 1e-7;

/// Loss value with its partial derivatives in the D (and weight-aligned) order
/// of the inputs.
struct LossValue {
  double loss = 0.0;
  std::vector<double> grad_pos;
  std::vector<double> grad_neg;
};

/// -log s(D+) - log(1 - s(D-)), s clamped to [eps, 1 - eps].
LossValue pairwise_loss(double d_pos, double d_neg, double eps = kSigmoidClamp);

/// Mean positive term over d_pos plus mean negative term over d_neg.
LossValue group_loss(std::span<const double> d_pos, std::span<const double> d_neg,
                     double eps = kSigmoidClamp);

/// -mean log(s+ s(D+)) - mean log(1 + s- s(D-)); inner arguments floored at
/// eps. Throws DomainError on weights outside (0, 1] / [-1, 0].
LossValue weighted_group_loss(std::span<const double> d_pos, std::span<const double> w_pos,
                              std::span<const double> d_neg, std::span<const double> w_neg,
                              double eps = kSigmoidClamp);

enum class LossVariant { Pairwise, Group, Weighted };

std::string_view to_string(LossVariant variant);
LossVariant loss_variant_from_string(std::string_view name);

struct LossConfig {
  LossVariant variant = LossVariant::Weighted;
  bool no_group = false;          // (a) one positive and one negative: pairwise loss
  bool no_pos_group = false;      // (b) the anchor is the only positive
  bool no_neg_group = false;      // (c) a single negative
  bool no_response_side = false;  // (d) drop response-side samples
  bool no_context_side = false;   // (e) drop context-side samples
  bool no_scores = false;         // (f) unweighted group loss
  double epsilon = kSigmoidClamp;
  std::size_t k = 3;
  double mle_mix = 0.0;  // weight of an added anchor NLL term; 0 = pure contrastive

  void validate() const;
  /// The variant actually optimized once the switches are applied.
  LossVariant effective_variant() const;
  std::string describe() const;
};

/// The seven ablation configurations in table order: (a)..(f), then full.
struct AblationRow {
  std::string label;
  LossConfig config;
};
std::vector<AblationRow> ablation_rows(const LossConfig& base);

/// Entries of `group` that enter the loss under `config`, positives first.
struct SelectedTerms {
  std::vector<GroupEntry> positives;
  std::vector<GroupEntry> negatives;
};
SelectedTerms select_terms(const ContrastiveGroup& group, const LossConfig& config);

/// Scalar loss for one group given the D values of its selected terms.
LossValue group_objective(const SelectedTerms& terms, std::span<const double> d_pos,
                          std::span<const double> d_neg, const LossConfig& config);

/// Model-level losses on groups over `pairs` (ids index into `pairs`).
double pairwise_loss(const DialogueModel& target, const ReferenceModel& reference,
                     std::span<const TokenizedPair> pairs, const GroupEntry& positive,
                     const GroupEntry& negative, double eps = kSigmoidClamp);
double group_loss(const DialogueModel& target, const ReferenceModel& reference,
                  std::span<const TokenizedPair> pairs, const ContrastiveGroup& group,
                  std::size_t k, double eps = kSigmoidClamp);
double weighted_group_loss(const DialogueModel& target, const ReferenceModel& reference,
                           std::span<const TokenizedPair> pairs, const ContrastiveGroup& group,
                           std::size_t k, double eps = kSigmoidClamp);

/// Fine-tuning objective over cached groups. Reference log-probabilities are
/// computed once at construction.
class ContrastiveObjective final : public Objective {
 public:
  ContrastiveObjective(const ReferenceModel& reference, std::span<const TokenizedPair> train_pairs,
                       std::span<const ContrastiveGroup> train_groups,
                       std::span<const TokenizedPair> valid_pairs,
                       std::span<const ContrastiveGroup> valid_groups, LossConfig config,
                       std::size_t workers = 1);

  std::size_t train_size() const override { return train_.groups.size(); }
  ObjectiveStats loss_and_grad(const DialogueModel& model, std::span<const std::size_t> batch,
                               ad::Gradients& grads) override;
  ObjectiveStats validate(const DialogueModel& model) override;

  /// Loss, gradient (when `grads` is set, scaled by `scale`) and D values of
  /// one training or validation group.
  ObjectiveStats group_stats(const DialogueModel& model, bool validation, std::size_t index,
                             ad::Gradients* grads, double scale) const;

 private:
  static constexpr std::size_t kChunk = 8;  // groups per gradient chunk

  struct Split {
    std::span<const TokenizedPair> pairs;
    std::vector<SelectedTerms> groups;
    std::vector<std::vector<double>> ref_pos;
    std::vector<std::vector<double>> ref_neg;
  };
  Split prepare(std::span<const TokenizedPair> pairs, std::span<const ContrastiveGroup> groups,
                std::size_t workers) const;

  const ReferenceModel& reference_;
  LossConfig config_;
  std::size_t workers_;
  Split train_;
  Split valid_;
};

/// Fine-tunes `target` (initialized from the reference's checkpoint) on the
/// cached groups. Throws DomainError on an empty cache.
TrainResult train_contrastive(DialogueModel& target, const ReferenceModel& reference,
                              std::span<const TokenizedPair> train_pairs,
                              std::span<const ContrastiveGroup> train_groups,
                              std::span<const TokenizedPair> valid_pairs,
                              std::span<const ContrastiveGroup> valid_groups,
                              const LossConfig& loss, const TrainConfig& train,
                              const TrainObserver& observer = {});

}  // namespace gcdl
