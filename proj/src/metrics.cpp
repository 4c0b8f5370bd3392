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

#include "layertag/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "layertag/error.hpp"

namespace layertag::training {

std::optional<double> average_precision(std::span<const float> scores, std::span<const float> labels) {
  if (scores.size() != labels.size()) throw InvalidInput("scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  long hits = 0;
  double sum = 0.0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (labels[order[rank]] > 0.5F) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(rank + 1);
    }
  }
  if (hits == 0) return std::nullopt;
  return sum / static_cast<double>(hits);
}

double f1_score(const BinaryCounts& c) {
  const long denom = 2 * c.tp + c.fp + c.fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
}

int argmax(std::span<const float> row) {
  if (row.empty()) throw InvalidInput("argmax of an empty row");
  return static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
}

MetricsReport compute_metrics(const MatF& scores, const MatF& targets, double threshold) {
  if (scores.rows() == 0 || scores.cols() == 0) throw InvalidInput("no scores to evaluate");
  if (scores.rows() != targets.rows() || scores.cols() != targets.cols()) {
    throw InvalidInput("scores and targets differ in shape");
  }
  const auto N = scores.rows();
  const auto C = scores.cols();
  MetricsReport r;
  r.threshold = threshold;
  r.num_clips = static_cast<int>(N);
  std::vector<float> col_s(N);
  std::vector<float> col_t(N);
  double ap_sum = 0.0;
  for (Eigen::Index c = 0; c < C; ++c) {
    BinaryCounts counts;
    for (Eigen::Index i = 0; i < N; ++i) {
      col_s[i] = scores(i, c);
      col_t[i] = targets(i, c);
      const bool pos = col_t[i] > 0.5F;
      const bool pred = col_s[i] >= threshold;
      counts.tp += pos && pred;
      counts.fp += !pos && pred;
      counts.fn += pos && !pred;
    }
    const auto ap = average_precision(col_s, col_t);
    r.per_class_AP.push_back(ap);
    r.per_class_F1.push_back(f1_score(counts));
    if (ap) {
      ap_sum += *ap;
      ++r.evaluated_classes;
    }
  }
  r.mAP = r.evaluated_classes > 0 ? ap_sum / r.evaluated_classes : 0.0;
  long correct = 0;
  for (Eigen::Index i = 0; i < N; ++i) {
    const int top = argmax(std::span<const float>(scores.row(i).data(), static_cast<std::size_t>(C)));
    correct += targets(i, top) > 0.5F;
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(N);
  return r;
}

nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json ap = nlohmann::json::array();
  for (const auto& v : r.per_class_AP) ap.push_back(v ? nlohmann::json(*v) : nlohmann::json(nullptr));
  return {{"mAP", r.mAP},
          {"accuracy", r.accuracy},
          {"per_class_AP", ap},
          {"per_class_F1", r.per_class_F1},
          {"threshold", r.threshold},
          {"num_clips", r.num_clips},
          {"evaluated_classes", r.evaluated_classes}};
}

std::vector<double> per_class_f1(std::span<const int> predicted, std::span<const int> truth, int num_classes) {
  if (predicted.size() != truth.size()) throw InvalidInput("prediction and truth counts differ");
  std::vector<BinaryCounts> counts(num_classes);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= num_classes || predicted[i] < 0 || predicted[i] >= num_classes) {
      throw InvalidInput("class index out of range");
    }
    if (predicted[i] == truth[i]) {
      ++counts[truth[i]].tp;
    } else {
      ++counts[predicted[i]].fp;
      ++counts[truth[i]].fn;
    }
  }
  std::vector<double> out;
  for (const auto& c : counts) out.push_back(f1_score(c));
  return out;
}

}  // namespace layertag::training
