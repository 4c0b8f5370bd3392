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

#include <cmath>
#include <cstdio>
#include <fstream>

#include "layertag/cli.hpp"
#include "layertag/error.hpp"

namespace layertag::cli {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path resolve(const fs::path& base, const json& v) {
  fs::path p = v.get<std::string>();
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

std::string path_text(const fs::path& p) { return p.string(); }

double parse_snr(const json& v) {
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "clean" || s == "inf") return analysis::kClean;
    throw ConfigError("snr value '" + s + "' is neither a number nor \"clean\"");
  }
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw ConfigError("snr values must be finite or \"clean\"");
  return d;
}

json snr_json(double snr) { return analysis::is_clean(snr) ? json("clean") : json(snr); }

template <typename Fn>
void each_key(const json& section, const std::string& name, Fn&& fn) {
  if (!section.is_object()) throw ConfigError("config section '" + name + "' must be an object");
  for (const auto& [key, value] : section.items()) {
    if (!fn(key, value)) throw ConfigError("unknown config key " + name + "." + key);
  }
}

analysis::ProbeConfig probe_from_json(const json& j) {
  analysis::ProbeConfig p;
  each_key(j, "analysis.probe", [&](const std::string& k, const json& v) {
    if (k == "epochs") p.epochs = v.get<int>();
    else if (k == "batch_size") p.batch_size = v.get<int>();
    else if (k == "lr") p.lr = v.get<double>();
    else if (k == "seed") p.seed = v.get<std::uint64_t>();
    else if (k == "standardize") p.standardize = v.get<bool>();
    else if (k == "threads") p.threads = v.get<int>();
    else return false;
    return true;
  });
  p.validate();
  return p;
}

}  // namespace

RunConfig run_config_from_json(const json& j, const fs::path& base) {
  RunConfig c;
  try {
    each_key(j, "config", [&](const std::string& section, const json& body) {
      if (section == "backbone") {
        each_key(body, "backbone", [&](const std::string& k, const json& v) {
          if (k == "model_id") c.backbone.model_id = v.get<std::string>();
          else if (k == "cache_dir") c.backbone.cache_dir = resolve(base, v);
          else if (k == "weights_dir") c.backbone.weights_dir = resolve(base, v);
          else if (k == "dtype") c.backbone.dtype = parse_dtype(v.get<std::string>());
          else if (k == "synthetic_seed") c.backbone.synthetic_seed = v.get<std::uint64_t>();
          else return false;
          return true;
        });
      } else if (section == "head") {
        if (!body.is_object()) throw ConfigError("config section 'head' must be an object");
        c.head = body;
      } else if (section == "train") {
        c.train = training::train_config_from_json(body);
      } else if (section == "analysis") {
        each_key(body, "analysis", [&](const std::string& k, const json& v) {
          if (k == "snr_list") {
            c.analysis.snr_list.clear();
            for (const auto& s : v) c.analysis.snr_list.push_back(parse_snr(s));
          } else if (k == "seed") c.analysis.seed = v.get<std::uint64_t>();
          else if (k == "noise_per_speech") c.analysis.noise_per_speech = v.get<int>();
          else if (k == "reference_snr") c.analysis.reference_snr = parse_snr(v);
          else if (k == "noisy_snr") c.analysis.noisy_snr = parse_snr(v);
          else if (k == "probe") c.analysis.probe = probe_from_json(v);
          else return false;
          return true;
        });
      } else if (section == "io") {
        each_key(body, "io", [&](const std::string& k, const json& v) {
          if (k == "manifest") c.io.manifest = resolve(base, v);
          else if (k == "eval_manifest") c.io.eval_manifest = resolve(base, v);
          else if (k == "class_map") c.io.class_map = resolve(base, v);
          else if (k == "speech_manifest") c.io.speech_manifest = resolve(base, v);
          else if (k == "noise_manifest") c.io.noise_manifest = resolve(base, v);
          else if (k == "checkpoint") c.io.checkpoint = resolve(base, v);
          else if (k == "probe_report") c.io.probe_report = resolve(base, v);
          else if (k == "output_dir") c.io.output_dir = resolve(base, v);
          else if (k == "split") c.io.split = v.get<std::string>();
          else return false;
          return true;
        });
      } else {
        return false;
      }
      return true;
    });
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  if (c.analysis.noise_per_speech < 0) throw ConfigError("analysis.noise_per_speech must be >= 0");
  if (c.analysis.snr_list.empty()) throw ConfigError("analysis.snr_list must not be empty");
  try {
    training::parse_split(c.io.split);
  } catch (const UsageError& e) {
    throw ConfigError(std::string("io.split: ") + e.what());
  }
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw NotFound("config file not found: " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return run_config_from_json(j, path.parent_path());
}

json to_json(const RunConfig& c) {
  json snrs = json::array();
  for (double s : c.analysis.snr_list) snrs.push_back(snr_json(s));
  return {
      {"backbone",
       {{"model_id", c.backbone.model_id},
        {"cache_dir", path_text(c.backbone.cache_dir)},
        {"weights_dir", path_text(c.backbone.weights_dir)},
        {"dtype", std::string(to_string(c.backbone.dtype))},
        {"synthetic_seed", c.backbone.synthetic_seed}}},
      {"head", c.head},
      {"train", training::to_json(c.train)},
      {"analysis",
       {{"snr_list", snrs},
        {"seed", c.analysis.seed},
        {"noise_per_speech", c.analysis.noise_per_speech},
        {"reference_snr", snr_json(c.analysis.reference_snr)},
        {"noisy_snr", snr_json(c.analysis.noisy_snr)},
        {"probe",
         {{"epochs", c.analysis.probe.epochs},
          {"batch_size", c.analysis.probe.batch_size},
          {"lr", c.analysis.probe.lr},
          {"seed", c.analysis.probe.seed},
          {"standardize", c.analysis.probe.standardize},
          {"threads", c.analysis.probe.threads}}}}},
      {"io",
       {{"manifest", path_text(c.io.manifest)},
        {"eval_manifest", path_text(c.io.eval_manifest)},
        {"class_map", path_text(c.io.class_map)},
        {"speech_manifest", path_text(c.io.speech_manifest)},
        {"noise_manifest", path_text(c.io.noise_manifest)},
        {"checkpoint", path_text(c.io.checkpoint)},
        {"probe_report", path_text(c.io.probe_report)},
        {"output_dir", path_text(c.io.output_dir)},
        {"split", c.io.split}}},
  };
}

std::string config_hash(const json& config) {
  const std::string text = config.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace layertag::cli
