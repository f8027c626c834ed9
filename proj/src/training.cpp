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

#include "gcdl/training.hpp"

#include <algorithm>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numeric>
#include <random>

namespace gcdl {

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw DomainError("train lr must be positive");
  if (batch_size == 0) throw DomainError("train batch_size must be positive");
  if (validations_per_epoch == 0) throw DomainError("validations_per_epoch must be positive");
  if (patience == 0) throw DomainError("patience must be positive");
  if (stage.empty()) throw DomainError("train stage name is empty");
}

std::string to_json_line(const TrainLogRecord& r) {
  auto num = [](double v) -> nlohmann::json {
    if (std::isnan(v)) return nullptr;
    return v;
  };
  nlohmann::json j = {{"step", r.step},
                      {"split", r.split},
                      {"loss", num(r.loss)},
                      {"mean_D_pos", num(r.mean_d_pos)},
                      {"mean_D_neg", num(r.mean_d_neg)},
                      {"lr", r.lr}};
  return j.dump();
}

namespace {

class RunWriter {
 public:
  RunWriter(const TrainConfig& config, const TrainObserver& observer)
      : config_(config), observer_(observer) {
    if (config_.run_dir.empty()) return;
    std::filesystem::create_directories(config_.run_dir);
    log_.open(config_.run_dir / (config_.stage + ".log.jsonl"), std::ios::trunc);
    if (!log_) throw Error("cannot write training log in " + config_.run_dir.string());
  }

  void record(const TrainLogRecord& r) {
    if (log_.is_open()) log_ << to_json_line(r) << '\n' << std::flush;
    if (observer_) observer_(r);
  }

  void checkpoint(const DialogueModel& model, std::size_t index) {
    if (config_.run_dir.empty()) return;
    const std::string name = config_.stage + "-" + std::to_string(index) + ".ckpt";
    save_checkpoint(config_.run_dir / name, model, config_.vocab_hash);
    write_file(config_.run_dir / (config_.stage + ".best"), name + "\n");
  }

 private:
  const TrainConfig& config_;
  const TrainObserver& observer_;
  std::ofstream log_;
};

void check_finite(double loss, const ad::Gradients& grads, std::size_t step,
                  std::span<const std::size_t> batch) {
  if (std::isfinite(loss) && grads.all_finite()) return;
  std::string ids;
  for (std::size_t i = 0; i < std::min<std::size_t>(batch.size(), 8); ++i)
    ids += (i ? "," : "") + std::to_string(batch[i]);
  throw Error("non-finite " + std::string(std::isfinite(loss) ? "gradient" : "loss") +
              " at step " + std::to_string(step) + " (loss " + std::to_string(loss) +
              ", first batch items " + ids + ")");
}

}  // namespace

TrainResult train_loop(DialogueModel& model, Objective& objective, const TrainConfig& config,
                       const TrainObserver& observer) {
  config.validate();
  const std::size_t n = objective.train_size();
  if (n == 0) throw DomainError("training set is empty");

  const std::size_t steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
  const std::size_t interval =
      std::max<std::size_t>(1, (steps_per_epoch + config.validations_per_epoch - 1) /
                                   config.validations_per_epoch);

  RunWriter writer(config, observer);
  TrainResult result;
  ad::Adam adam(model.params(), ad::AdamConfig{.lr = config.lr});
  ad::Gradients grads(model.params());

  auto run_validation = [&](double train_loss, const ObjectiveStats& train_stats) {
    if (result.steps > 0) {
      TrainLogRecord tr{result.steps, "train", train_loss, train_stats.mean_d_pos(),
                        train_stats.mean_d_neg(), config.lr};
      result.log.push_back(tr);
      writer.record(tr);
    }
    const ObjectiveStats stats = objective.validate(model);
    if (!std::isfinite(stats.loss))
      throw Error("non-finite validation loss at step " + std::to_string(result.steps));
    TrainLogRecord rec{result.steps, "valid", stats.loss, stats.mean_d_pos(), stats.mean_d_neg(),
                       config.lr};
    result.log.push_back(rec);
    writer.record(rec);
    result.final_validation_loss = stats.loss;
    const std::size_t index = result.validations++;
    return std::pair{stats.loss, index};
  };

  auto [initial, first_index] = run_validation(0.0, {});
  result.best_validation_loss = initial;
  result.best_validation_index = first_index;
  auto best = model.clone();
  writer.checkpoint(model, first_index);

  std::vector<std::size_t> order(n);
  std::size_t bad = 0;
  ObjectiveStats window;
  double window_loss = 0.0;
  std::size_t window_batches = 0;

  for (std::size_t epoch = 0; epoch < config.max_epochs && bad < config.patience; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(mix_seed(config.seed, epoch));
    std::shuffle(order.begin(), order.end(), rng);

    for (std::size_t s = 0; s < steps_per_epoch && bad < config.patience; ++s) {
      const std::size_t begin = s * config.batch_size;
      const std::size_t end = std::min(n, begin + config.batch_size);
      std::span<const std::size_t> batch(order.data() + begin, end - begin);

      grads.zero();
      const ObjectiveStats stats = objective.loss_and_grad(model, batch, grads);
      check_finite(stats.loss, grads, result.steps, batch);
      if (config.clip_norm > 0.0) ad::clip_global_norm(grads, config.clip_norm);
      adam.step(model.params(), grads);
      if (!model.params().all_finite())
        throw Error("non-finite parameters after step " + std::to_string(result.steps));
      ++result.steps;

      window_loss += stats.loss;
      ++window_batches;
      window.sum_d_pos += stats.sum_d_pos;
      window.sum_d_neg += stats.sum_d_neg;
      window.n_pos += stats.n_pos;
      window.n_neg += stats.n_neg;

      if (result.steps % interval != 0 && !(s + 1 == steps_per_epoch)) continue;
      auto [loss, index] = run_validation(window_loss / static_cast<double>(window_batches), window);
      window = {};
      window_loss = 0.0;
      window_batches = 0;
      if (loss < result.best_validation_loss) {
        result.best_validation_loss = loss;
        result.best_validation_index = index;
        best = model.clone();
        writer.checkpoint(model, index);
        bad = 0;
      } else {
        ++bad;
      }
    }
  }
  result.early_stopped = bad >= config.patience;

  auto& dst = model.params();
  const auto& src = best->params();
  for (std::size_t i = 0; i < dst.size(); ++i) dst.value(i) = src.value(i);
  return result;
}

MleObjective::MleObjective(std::span<const TokenizedPair> train,
                           std::span<const TokenizedPair> valid)
    : train_(train), valid_(valid) {
  if (valid_.empty()) throw DomainError("MLE validation set is empty");
}

ObjectiveStats MleObjective::loss_and_grad(const DialogueModel& model,
                                           std::span<const std::size_t> batch,
                                           ad::Gradients& grads) {
  std::vector<TokenizedPair> items;
  items.reserve(batch.size());
  for (std::size_t i : batch) items.push_back(train_[i]);
  ObjectiveStats stats;
  stats.loss = mle_loss_and_grad(model, items, grads);
  return stats;
}

ObjectiveStats MleObjective::validate(const DialogueModel& model) {
  ObjectiveStats stats;
  stats.loss = mle_loss(model, valid_);
  return stats;
}

TrainResult train_mle(DialogueModel& model, std::span<const TokenizedPair> train,
                      std::span<const TokenizedPair> valid, const TrainConfig& config,
                      const TrainObserver& observer) {
  MleObjective objective(train, valid);
  return train_loop(model, objective, config, observer);
}

}  // namespace gcdl
