// Copyright 2026 The LayerTag Authors. All Rights Reserved.
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

#pragma once

#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "layertag/cache.hpp"
#include "layertag/heads.hpp"
#include "layertag/manifest.hpp"
#include "layertag/metrics.hpp"

namespace layertag::training {

enum class LossKind { kBceMultilabel, kBceOnehot };
enum class LrSchedule { kConstant, kStepDecay };

std::string_view to_string(LossKind kind);
std::string_view to_string(LrSchedule schedule);
LossKind parse_loss(std::string_view text);
LrSchedule parse_schedule(std::string_view text);

struct TrainConfig {
  int batch_size = 48;
  double lr = 1e-4;
  int epochs = 30;
  LossKind loss = LossKind::kBceMultilabel;
  std::uint64_t seed = 0;
  LrSchedule lr_schedule = LrSchedule::kConstant;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  // Stop after this many optimizer steps even mid-epoch.
  std::optional<long> max_steps;
  // Clips per forward/backward chunk; gradients are summed in fixed order so
  // the result does not depend on this value beyond float rounding.
  int micro_batch = 8;
  // Keep prepared inputs in memory instead of re-reading the cache each batch.
  bool preload = true;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

nlohmann::json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);

// Learning rate in effect during 1-based epoch. Step decay halves every 5
// epochs after epoch 10.
double scheduled_lr(const TrainConfig& config, int epoch);

class Adam {
 public:
  Adam(std::size_t size, double beta1, double beta2, double eps);
  void step(std::span<float> params, std::span<const float> grad, double lr);
  long steps() const { return t_; }

 private:
  double beta1_;
  double beta2_;
  double eps_;
  long t_ = 0;
  std::vector<double> m_;
  std::vector<double> v_;
};

struct StepRecord {
  long step = 0;
  int epoch = 0;
  double loss = 0.0;
  double lr = 0.0;
};

struct EpochRecord {
  int epoch = 0;
  double mean_loss = 0.0;
  std::optional<double> eval_mAP;
  std::optional<double> eval_accuracy;
};

struct TrainOptions {
  // Start from these parameters instead of HeadParams::initialized(seed).
  std::optional<heads::HeadParams<float>> initial;
  // Evaluated after every epoch and recorded in the log.
  std::vector<ManifestEntry> eval_entries;
  // JSONL log: a header line, then step and epoch records as they happen.
  std::ostream* log = nullptr;
  // Called after each epoch.
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  heads::HeadParams<float> params;
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
};

// Multi-hot targets for entries; kBceOnehot requires exactly one label each.
MatF make_targets(const std::vector<ManifestEntry>& entries, int num_classes, LossKind loss);

// Trains a head on cached representations of entries (all of them are
// treated as training data). Missing records throw NotFound listing the ids;
// a non-finite loss throws TrainingError naming the step.
TrainResult train_head(const heads::HeadConfig& head, const TrainConfig& config, const CacheStore& store,
                       const std::vector<ManifestEntry>& entries, const TrainOptions& options = {});

// N x C sigmoid scores in entry order.
MatF predict_scores(const heads::HeadParams<float>& params, const CacheStore& store,
                    const std::vector<ManifestEntry>& entries);

MetricsReport evaluate(const heads::HeadParams<float>& params, const CacheStore& store,
                       const std::vector<ManifestEntry>& entries, double threshold = 0.5);

struct CrossvalResult {
  double accuracy = 0.0;  // pooled over all held-out predictions
  std::vector<double> fold_accuracy;
  std::vector<std::string> utterance_ids;
  std::vector<int> predicted;
  std::vector<int> truth;
};

// Five-fold protocol over entries carrying fold1..fold5 splits.
CrossvalResult crossval_esc50(const heads::HeadConfig& head, const TrainConfig& config, const CacheStore& store,
                              const std::vector<ManifestEntry>& entries,
                              const std::function<void(int fold, const TrainResult&)>& on_fold = {});

}  // namespace layertag::training
