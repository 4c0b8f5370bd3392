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

#include <optional>
#include <span>
#include <vector>

#include "json.hpp"
#include "layertag/representation.hpp"

namespace layertag::training {

// Interpolation-free average precision: precision at the rank of every
// positive, averaged over positives. Ranking is by descending score with
// ties broken by ascending index. nullopt when there are no positives.
std::optional<double> average_precision(std::span<const float> scores, std::span<const float> labels);

struct BinaryCounts {
  long tp = 0;
  long fp = 0;
  long fn = 0;
};
// 2tp / (2tp + fp + fn); 0 when the denominator is 0.
double f1_score(const BinaryCounts& c);

// Lowest index among the maxima.
int argmax(std::span<const float> row);

struct MetricsReport {
  double mAP = 0.0;
  // Fraction of clips whose argmax class is among their labels.
  double accuracy = 0.0;
  std::vector<std::optional<double>> per_class_AP;  // nullopt: no positives
  std::vector<double> per_class_F1;
  double threshold = 0.5;
  int num_clips = 0;
  int evaluated_classes = 0;  // classes with at least one positive
};

// scores: N x C probabilities; targets: N x C in {0, 1}. Classes without
// positives are excluded from mAP. Throws InvalidInput on empty input.
MetricsReport compute_metrics(const MatF& scores, const MatF& targets, double threshold = 0.5);

nlohmann::json to_json(const MetricsReport& report);

// Per-class F1 of single-label predictions against single-label truths.
std::vector<double> per_class_f1(std::span<const int> predicted, std::span<const int> truth, int num_classes);

}  // namespace layertag::training
