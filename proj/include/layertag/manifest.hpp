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

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace layertag::training {

enum class Split { kTrain, kEval, kFold1, kFold2, kFold3, kFold4, kFold5 };

std::string_view to_string(Split split);
Split parse_split(std::string_view text);
// fold k in 1..5.
Split fold_split(int k);

// Class names indexed 0..C-1. On disk: JSON object name -> index.
class ClassMap {
 public:
  ClassMap() = default;
  explicit ClassMap(std::vector<std::string> names);

  int size() const { return static_cast<int>(names_.size()); }
  const std::vector<std::string>& names() const { return names_; }
  const std::string& name(int index) const { return names_.at(index); }
  // Throws InvalidInput naming the label when unknown.
  int index(const std::string& name) const;
  bool contains(const std::string& name) const { return lookup_.count(name) != 0; }

  nlohmann::json to_json() const;
  static ClassMap from_json(const nlohmann::json& j);

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, int> lookup_;
};

ClassMap load_class_map(const std::filesystem::path& path);
void save_class_map(const std::filesystem::path& path, const ClassMap& classes);

struct ManifestEntry {
  std::string utterance_id;
  std::string audio_path;
  double duration_s = 0.0;
  std::vector<int> labels;  // sorted, unique
  Split split = Split::kTrain;
  // Reference text for speech manifests used by the WER harness.
  std::optional<std::string> transcript;
};

struct ManifestOptions {
  // Reject train/eval entries without labels. Speech manifests turn this off.
  bool require_labels = true;
  // Resolve relative audio paths against the manifest's directory.
  bool resolve_paths = true;
  // Off: labels are skipped unparsed, so no class map is needed (extraction).
  bool parse_labels = true;
};

// One JSON object per line with keys utterance_id, audio_path, duration_s,
// labels (class names or indices), split and optional transcript. Blank lines
// are skipped. Errors carry "path:line: ".
std::vector<ManifestEntry> ingest_manifest(const std::filesystem::path& path, const ClassMap& classes,
                                           const ManifestOptions& options = {});

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestEntry>& entries,
                    const ClassMap& classes);

std::vector<ManifestEntry> select_split(const std::vector<ManifestEntry>& entries, Split split);
std::vector<std::string> utterance_ids(const std::vector<ManifestEntry>& entries);

struct Esc50Dataset {
  std::vector<ManifestEntry> entries;
  ClassMap classes;
};

// Reads the official ESC-50 metadata CSV (filename,fold,target,category,...).
// Audio paths point into audio_dir; every clip is 5 s.
Esc50Dataset convert_esc50(const std::filesystem::path& csv_path, const std::filesystem::path& audio_dir);

}  // namespace layertag::training
