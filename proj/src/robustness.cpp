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

#include <algorithm>
#include <cmath>
#include <numeric>

#include "layertag/analysis.hpp"
#include "layertag/error.hpp"

namespace layertag::analysis {

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

std::optional<double> spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw InvalidInput("spearman needs equally long inputs");
  if (x.size() < 2) return std::nullopt;
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

RobustnessReport robustness_vs_recognizability(const std::map<std::string, double>& wer_reference_snr,
                                               const std::map<std::string, double>& wer_noisy_snr,
                                               const std::map<std::string, double>& f1) {
  auto require = [](const std::map<std::string, double>& m, const std::string& cls, const char* what) {
    const auto it = m.find(cls);
    if (it == m.end()) throw InvalidInput("sound class '" + cls + "' has no " + what);
    if (!std::isfinite(it->second)) throw InvalidInput("sound class '" + cls + "' has a non-finite " + what);
    return it->second;
  };
  for (const auto* m : {&wer_noisy_snr, &f1}) {
    for (const auto& [cls, v] : *m) require(wer_reference_snr, cls, "WER at the reference SNR");
  }
  RobustnessReport report;
  std::vector<double> robustness, recognisability;
  for (const auto& [cls, clean] : wer_reference_snr) {
    RobustnessPoint p;
    p.sound_class = cls;
    p.wer_increase = require(wer_noisy_snr, cls, "WER at the noisy SNR") - require(wer_reference_snr, cls, "WER");
    p.f1 = require(f1, cls, "F1");
    robustness.push_back(-p.wer_increase);
    recognisability.push_back(p.f1);
    report.points.push_back(std::move(p));
  }
  report.spearman = spearman(robustness, recognisability);
  return report;
}

RobustnessReport robustness_vs_recognizability(const SweepResult& sweep, double reference_snr, double noisy_snr,
                                               const ProbeResult& last_layer, const training::ClassMap& classes) {
  auto column = [&](double snr) {
    const auto it = std::find(sweep.snr_list.begin(), sweep.snr_list.end(), snr);
    if (it == sweep.snr_list.end()) throw InvalidInput("sweep has no results at " + std::to_string(snr) + " dB");
    return static_cast<std::size_t>(it - sweep.snr_list.begin());
  };
  const std::size_t ref = column(reference_snr), noisy = column(noisy_snr);
  if (static_cast<int>(last_layer.per_class_F1.size()) != classes.size()) {
    throw InvalidInput("probe F1 covers " + std::to_string(last_layer.per_class_F1.size()) + " classes, class map has " +
                       std::to_string(classes.size()));
  }
  std::map<std::string, double> w_ref, w_noisy, f1;
  for (const auto& [cls, v] : sweep.class_wer) {
    w_ref[cls] = v[ref];
    w_noisy[cls] = v[noisy];
    f1[cls] = last_layer.per_class_F1[classes.index(cls)];
  }
  return robustness_vs_recognizability(w_ref, w_noisy, f1);
}

nlohmann::json to_json(const RobustnessReport& report) {
  nlohmann::json points = nlohmann::json::array();
  for (const auto& p : report.points) {
    points.push_back({{"sound_class", p.sound_class}, {"wer_increase", p.wer_increase}, {"f1", p.f1}});
  }
  return {{"points", points}, {"spearman", report.spearman ? nlohmann::json(*report.spearman) : nlohmann::json()}};
}

}  // namespace layertag::analysis
