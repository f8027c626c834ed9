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

// Minibatch Adam training with periodic validation and early stopping.

#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "gcdl/models.hpp"

namespace gcdl {

struct TrainConfig {
  double lr = 1e-3;
  std::size_t batch_size = 128;
  std::size_t max_epochs = 30;
  std::size_t validations_per_epoch = 2;
  std::size_t patience = 5;
  double clip_norm = 5.0;  // <= 0 disables clipping
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  /// Optional: when set, checkpoints and the JSONL log are written here.
  std::filesystem::path run_dir;
  std::string stage = "train";
  std::string vocab_hash;

  void validate() const;
};

struct TrainLogRecord;
using TrainObserver = std::function<void(const TrainLogRecord&)>;

/// Aggregate over a set of scored items. D statistics are NaN when the
/// objective has no notion of them (MLE).
struct ObjectiveStats {
  double loss = 0.0;
  double sum_d_pos = 0.0;
  double sum_d_neg = 0.0;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;

  double mean_d_pos() const {
    return n_pos ? sum_d_pos / static_cast<double>(n_pos) : std::numeric_limits<double>::quiet_NaN();
  }
  double mean_d_neg() const {
    return n_neg ? sum_d_neg / static_cast<double>(n_neg) : std::numeric_limits<double>::quiet_NaN();
  }
};

/// What the loop optimizes. `loss_and_grad` returns the batch-mean loss and
/// adds its gradient into `grads`.
class Objective {
 public:
  virtual ~Objective() = default;
  virtual std::size_t train_size() const = 0;
  virtual ObjectiveStats loss_and_grad(const DialogueModel& model,
                                       std::span<const std::size_t> batch,
                                       ad::Gradients& grads) = 0;
  virtual ObjectiveStats validate(const DialogueModel& model) = 0;
};

struct TrainLogRecord {
  std::size_t step = 0;
  std::string split;
  double loss = 0.0;
  double mean_d_pos = 0.0;
  double mean_d_neg = 0.0;
  double lr = 0.0;
};

std::string to_json_line(const TrainLogRecord& record);

struct TrainResult {
  std::vector<TrainLogRecord> log;
  double best_validation_loss = 0.0;
  double final_validation_loss = 0.0;
  std::size_t best_validation_index = 0;
  std::size_t steps = 0;
  std::size_t validations = 0;
  bool early_stopped = false;
};

/// Validates once before the first update (index 0) and then every
/// 1/validations_per_epoch of an epoch. Training stops after `patience`
/// validations without improvement; `model` is left holding the best
/// parameters. Throws Error on a non-finite loss or gradient.
TrainResult train_loop(DialogueModel& model, Objective& objective, const TrainConfig& config,
                       const TrainObserver& observer = {});

/// Token-mean NLL objective.
class MleObjective final : public Objective {
 public:
  MleObjective(std::span<const TokenizedPair> train, std::span<const TokenizedPair> valid);

  std::size_t train_size() const override { return train_.size(); }
  ObjectiveStats loss_and_grad(const DialogueModel& model, std::span<const std::size_t> batch,
                               ad::Gradients& grads) override;
  ObjectiveStats validate(const DialogueModel& model) override;

 private:
  std::span<const TokenizedPair> train_;
  std::span<const TokenizedPair> valid_;
};

TrainResult train_mle(DialogueModel& model, std::span<const TokenizedPair> train,
                      std::span<const TokenizedPair> valid, const TrainConfig& config,
                      const TrainObserver& observer = {});

}  // namespace gcdl
