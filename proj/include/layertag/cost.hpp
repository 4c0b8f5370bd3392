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

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "layertag/heads.hpp"

// Analytic cost model for the tagging heads.
//
// MACs are multiply-accumulates per clip. A Transformer block of width d,
// FFN width h and sequence length m costs m*(4d^2 + 2dh) for its projections
// and FFN, 2*m^2*d for attention scores and value mixing, and 5 per element
// for each of its two LayerNorms. Pooling, means, softmax, activations, bias
// and positional adds are free.
namespace layertag::cost {

inline constexpr const char* kComponents[] = {"projection",       "temporal_transformer",
                                              "layer_transformer", "weighted_average",
                                              "classifier",        "positional"};

struct Count {
  std::int64_t total = 0;
  std::map<std::string, std::int64_t> breakdown;
};

// Trainable parameters of the head described by config.
Count count_params(const heads::HeadConfig& config);

// MACs for one clip whose encoder output has raw_frames frames per layer.
Count count_macs(const heads::HeadConfig& config, int raw_frames = 500);

struct CostReport {
  heads::HeadConfig config;
  int raw_frames = 500;
  std::int64_t macs = 0;
  std::int64_t params = 0;
  struct Component {
    std::int64_t macs = 0;
    std::int64_t params = 0;
  };
  std::map<std::string, Component> breakdown;
  std::vector<std::string> notes;
};

CostReport cost_report(const heads::HeadConfig& config, int raw_frames = 500);

// reference_macs / report.macs.
double speedup(const CostReport& report, double reference_macs);

// MACs of the reference standalone tagger used for speed-up figures.
inline constexpr double kReferenceTaggerMacs = 133e9;

nlohmann::json to_json(const CostReport& report);

// Fixed-width table, one row per component plus a total row.
std::string format_table(const CostReport& report);

}  // namespace layertag::cost
