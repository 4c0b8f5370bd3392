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
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "layertag/analysis.hpp"
#include "layertag/representation.hpp"
#include "layertag/training.hpp"

namespace layertag::cli {

struct BackboneSection {
  std::string model_id = "large";
  std::filesystem::path cache_dir = "cache";
  std::filesystem::path weights_dir;  // empty: $LAYERTAG_WEIGHTS_DIR, else ./weights
  DType dtype = DType::kF16;
  std::uint64_t synthetic_seed = 0;
};

struct AnalysisSection {
  std::vector<double> snr_list{analysis::kClean, 20.0, 10.0, 0.0, -10.0};
  std::uint64_t seed = 0;
  int noise_per_speech = 1;
  double reference_snr = 20.0;
  double noisy_snr = -10.0;
  analysis::ProbeConfig probe;
};

struct IoSection {
  std::filesystem::path manifest;
  std::filesystem::path eval_manifest;
  std::filesystem::path class_map;
  std::filesystem::path speech_manifest;
  std::filesystem::path noise_manifest;
  std::filesystem::path checkpoint;
  std::filesystem::path probe_report;
  std::filesystem::path output_dir = "layertag_out";
  std::string split = "eval";
};

// One run's configuration. The head section is kept as JSON until the class
// map and cache are known: missing num_classes, backbone_layers and
// backbone_dim are filled in from them.
struct RunConfig {
  BackboneSection backbone;
  nlohmann::json head = nlohmann::json::object();
  training::TrainConfig train;
  AnalysisSection analysis;
  IoSection io;
};

// Unknown sections or keys throw ConfigError. Relative paths are taken
// against base_dir.
RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& config);

// FNV-1a 64 of the canonical JSON text, as 16 hex digits.
std::string config_hash(const nlohmann::json& config);

// Entry point of the layertag tool. Returns the process exit code: 0 on
// success, 1 on internal errors, 2 on usage or input errors.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace layertag::cli
