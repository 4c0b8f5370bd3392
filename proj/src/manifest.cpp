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

#include "layertag/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "layertag/error.hpp"

namespace layertag::training {
namespace fs = std::filesystem;

namespace {

constexpr std::string_view kSplitNames[] = {"train", "eval", "fold1", "fold2", "fold3", "fold4", "fold5"};

[[noreturn]] void line_error(const fs::path& path, int line, const std::string& what) {
  throw FormatError(path.string() + ":" + std::to_string(line) + ": " + what);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(field));
      field.clear();
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  out.push_back(std::move(field));
  return out;
}

}  // namespace

std::string_view to_string(Split split) { return kSplitNames[static_cast<int>(split)]; }

Split parse_split(std::string_view text) {
  for (int i = 0; i < 7; ++i) {
    if (kSplitNames[i] == text) return static_cast<Split>(i);
  }
  throw InvalidInput("unknown split '" + std::string(text) + "' (expected train, eval or fold1..fold5)");
}

Split fold_split(int k) {
  if (k < 1 || k > 5) throw InvalidInput("fold index must be in 1..5");
  return static_cast<Split>(static_cast<int>(Split::kFold1) + k - 1);
}

ClassMap::ClassMap(std::vector<std::string> names) : names_(std::move(names)) {
  for (int i = 0; i < size(); ++i) {
    if (names_[i].empty()) throw InvalidInput("empty class name at index " + std::to_string(i));
    if (!lookup_.emplace(names_[i], i).second) throw InvalidInput("duplicate class name '" + names_[i] + "'");
  }
}

int ClassMap::index(const std::string& name) const {
  const auto it = lookup_.find(name);
  if (it == lookup_.end()) throw InvalidInput("unknown label '" + name + "'");
  return it->second;
}

nlohmann::json ClassMap::to_json() const {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (int i = 0; i < size(); ++i) j[names_[i]] = i;
  return nlohmann::json::parse(j.dump());
}

ClassMap ClassMap::from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.empty()) throw FormatError("class map must be a non-empty JSON object name -> index");
  std::vector<std::string> names(j.size());
  for (const auto& [name, value] : j.items()) {
    if (!value.is_number_integer()) throw FormatError("class '" + name + "' has a non-integer index");
    const auto idx = value.get<long long>();
    if (idx < 0 || idx >= static_cast<long long>(names.size()) || !names[idx].empty()) {
      throw FormatError("class map indices must be unique and cover 0.." + std::to_string(names.size() - 1));
    }
    names[idx] = name;
  }
  return ClassMap(std::move(names));
}

ClassMap load_class_map(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw NotFound("class map not found: " + path.string());
  try {
    return ClassMap::from_json(nlohmann::json::parse(is));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed class map " + path.string() + ": " + e.what());
  }
}

void save_class_map(const fs::path& path, const ClassMap& classes) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (int i = 0; i < classes.size(); ++i) j[classes.name(i)] = i;
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

std::vector<ManifestEntry> ingest_manifest(const fs::path& path, const ClassMap& classes,
                                           const ManifestOptions& options) {
  std::ifstream is(path);
  if (!is) throw NotFound("manifest not found: " + path.string());
  const fs::path base = path.parent_path();
  std::vector<ManifestEntry> entries;
  std::unordered_map<std::string, int> seen;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      line_error(path, lineno, "not valid JSON");
    }
    if (!j.is_object()) line_error(path, lineno, "expected a JSON object");
    for (const auto& [key, _] : j.items()) {
      static const char* kKnown[] = {"utterance_id", "audio_path", "duration_s", "labels", "split", "transcript"};
      if (std::find_if(std::begin(kKnown), std::end(kKnown), [&](const char* k) { return key == k; }) ==
          std::end(kKnown)) {
        line_error(path, lineno, "unknown key '" + key + "'");
      }
    }
    ManifestEntry e;
    try {
      if (!j.contains("utterance_id")) line_error(path, lineno, "missing \"utterance_id\"");
      e.utterance_id = j.at("utterance_id").get<std::string>();
      if (!j.contains("audio_path")) line_error(path, lineno, "missing \"audio_path\"");
      e.audio_path = j.at("audio_path").get<std::string>();
      if (!j.contains("duration_s")) line_error(path, lineno, "missing \"duration_s\"");
      e.duration_s = j.at("duration_s").get<double>();
      e.split = parse_split(j.value("split", std::string("train")));
      if (j.contains("transcript")) e.transcript = j.at("transcript").get<std::string>();
      if (j.contains("labels")) {
        const auto& labels = j.at("labels");
        if (!labels.is_array()) line_error(path, lineno, "\"labels\" must be an array");
        for (const auto& l : options.parse_labels ? labels : nlohmann::json::array()) {
          int idx = 0;
          if (l.is_string()) {
            idx = classes.index(l.get<std::string>());
          } else if (l.is_number_integer()) {
            idx = l.get<int>();
            if (idx < 0 || idx >= classes.size()) {
              line_error(path, lineno, "label index " + std::to_string(idx) + " outside 0.." +
                                           std::to_string(classes.size() - 1));
            }
          } else {
            line_error(path, lineno, "labels must be class names or indices");
          }
          e.labels.push_back(idx);
        }
      }
    } catch (const nlohmann::json::exception& ex) {
      line_error(path, lineno, std::string("bad field type: ") + ex.what());
    } catch (const FormatError&) {
      throw;
    } catch (const InvalidInput& ex) {
      line_error(path, lineno, ex.what());
    }
    std::sort(e.labels.begin(), e.labels.end());
    e.labels.erase(std::unique(e.labels.begin(), e.labels.end()), e.labels.end());
    if (e.utterance_id.empty()) line_error(path, lineno, "empty utterance_id");
    if (!(e.duration_s > 0.0)) line_error(path, lineno, "duration_s must be positive");
    if (options.require_labels && options.parse_labels && e.labels.empty()) {
      line_error(path, lineno, "missing \"labels\" on a " + std::string(to_string(e.split)) + " entry");
    }
    if (const auto [it, fresh] = seen.emplace(e.utterance_id, lineno); !fresh) {
      line_error(path, lineno, "duplicate utterance_id '" + e.utterance_id + "' (first on line " +
                                   std::to_string(it->second) + ")");
    }
    if (options.resolve_paths && fs::path(e.audio_path).is_relative()) {
      e.audio_path = (base / e.audio_path).lexically_normal().string();
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

void write_manifest(const fs::path& path, const std::vector<ManifestEntry>& entries, const ClassMap& classes) {
  std::ofstream os(path);
  if (!os) throw Error("cannot write " + path.string());
  for (const auto& e : entries) {
    nlohmann::ordered_json j;
    j["utterance_id"] = e.utterance_id;
    j["audio_path"] = e.audio_path;
    j["duration_s"] = e.duration_s;
    auto labels = nlohmann::ordered_json::array();
    for (int l : e.labels) labels.push_back(classes.name(l));
    j["labels"] = labels;
    j["split"] = std::string(to_string(e.split));
    if (e.transcript) j["transcript"] = *e.transcript;
    os << j.dump() << '\n';
  }
}

std::vector<ManifestEntry> select_split(const std::vector<ManifestEntry>& entries, Split split) {
  std::vector<ManifestEntry> out;
  std::copy_if(entries.begin(), entries.end(), std::back_inserter(out),
               [&](const ManifestEntry& e) { return e.split == split; });
  return out;
}

std::vector<std::string> utterance_ids(const std::vector<ManifestEntry>& entries) {
  std::vector<std::string> ids;
  ids.reserve(entries.size());
  for (const auto& e : entries) ids.push_back(e.utterance_id);
  return ids;
}

Esc50Dataset convert_esc50(const fs::path& csv_path, const fs::path& audio_dir) {
  std::ifstream is(csv_path);
  if (!is) throw NotFound("ESC-50 metadata not found: " + csv_path.string());
  std::string line;
  if (!std::getline(is, line)) throw FormatError(csv_path.string() + " is empty");
  const auto header = split_csv_line(line);
  auto column = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw FormatError(csv_path.string() + ": missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_file = column("filename");
  const std::size_t c_fold = column("fold");
  const std::size_t c_target = column("target");
  const std::size_t c_category = column("category");

  std::map<int, std::string> categories;
  std::vector<std::pair<ManifestEntry, int>> rows;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto f = split_csv_line(line);
    if (f.size() < header.size()) line_error(csv_path, lineno, "expected " + std::to_string(header.size()) + " columns");
    int fold = 0;
    int target = 0;
    try {
      fold = std::stoi(f[c_fold]);
      target = std::stoi(f[c_target]);
    } catch (const std::exception&) {
      line_error(csv_path, lineno, "fold and target must be integers");
    }
    if (fold < 1 || fold > 5) line_error(csv_path, lineno, "fold " + std::to_string(fold) + " outside 1..5");
    if (target < 0) line_error(csv_path, lineno, "negative target");
    const auto [it, fresh] = categories.emplace(target, f[c_category]);
    if (!fresh && it->second != f[c_category]) {
      line_error(csv_path, lineno, "target " + std::to_string(target) + " names two categories");
    }
    ManifestEntry e;
    e.utterance_id = fs::path(f[c_file]).stem().string();
    e.audio_path = (audio_dir / f[c_file]).string();
    e.duration_s = 5.0;
    e.split = fold_split(fold);
    rows.emplace_back(std::move(e), target);
  }
  std::vector<std::string> names;
  for (const auto& [target, name] : categories) {
    if (target != static_cast<int>(names.size())) {
      throw FormatError(csv_path.string() + ": targets are not contiguous from 0");
    }
    names.push_back(name);
  }
  Esc50Dataset out{{}, ClassMap(std::move(names))};
  for (auto& [e, target] : rows) {
    e.labels = {target};
    out.entries.push_back(std::move(e));
  }
  return out;
}

}  // namespace layertag::training
