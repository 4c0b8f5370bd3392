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

#include "layertag/cost.hpp"

#include <iomanip>
#include <sstream>

#include "layertag/error.hpp"

namespace layertag::cost {

namespace {

using heads::HeadConfig;
using heads::Variant;

constexpr std::int64_t kLayerNormOpsPerElement = 5;

std::int64_t block_params(std::int64_t d, std::int64_t h) {
  const std::int64_t attention = 4 * d * d + 4 * d;
  const std::int64_t ffn = d * h + h + h * d + d;
  const std::int64_t norms = 2 * 2 * d;
  return attention + ffn + norms;
}

std::int64_t block_macs(std::int64_t m, std::int64_t d, std::int64_t h) {
  const std::int64_t projections = m * (4 * d * d + 2 * d * h);
  const std::int64_t attention = 2 * m * m * d;
  const std::int64_t norms = 2 * kLayerNormOpsPerElement * m * d;
  return projections + attention + norms;
}

Count finish(std::map<std::string, std::int64_t> parts) {
  Count c;
  for (const char* name : kComponents) c.breakdown[name] = 0;
  for (auto& [k, v] : parts) {
    c.breakdown[k] = v;
    c.total += v;
  }
  return c;
}

}  // namespace

Count count_params(const HeadConfig& cfg) {
  cfg.validate();
  const std::int64_t L = cfg.backbone_layers;
  const std::int64_t D = cfg.backbone_dim;
  const std::int64_t d = cfg.model_dim();
  const std::int64_t h = static_cast<std::int64_t>(cfg.ffn_mult) * d;
  const std::int64_t C = cfg.num_classes;
  const std::int64_t n_pooled = cfg.pool_target;

  std::map<std::string, std::int64_t> parts;
  if (cfg.variant == Variant::kWaMlp || cfg.variant == Variant::kWaTr) parts["weighted_average"] = L;
  if (cfg.has_projection()) parts["projection"] = D * d + d;
  if (cfg.uses_transformer()) parts["temporal_transformer"] = block_params(d, h);
  if (cfg.variant == Variant::kTlTr) parts["layer_transformer"] = block_params(d, h);
  if (cfg.positional_embeddings && cfg.uses_transformer()) {
    parts["positional"] = n_pooled * d + (cfg.variant == Variant::kTlTr ? L * d : 0);
  }
  parts["classifier"] = (cfg.uses_transformer() ? d : D) * C + C;
  return finish(std::move(parts));
}

Count count_macs(const HeadConfig& cfg, int raw_frames) {
  cfg.validate();
  if (cfg.uses_transformer() && raw_frames < cfg.pool_target) {
    throw ConfigError("raw frame count " + std::to_string(raw_frames) + " is below pool target " +
                      std::to_string(cfg.pool_target));
  }
  if (raw_frames < 1) throw ConfigError("raw frame count must be positive");
  const std::int64_t L = cfg.backbone_layers;
  const std::int64_t D = cfg.backbone_dim;
  const std::int64_t d = cfg.model_dim();
  const std::int64_t h = static_cast<std::int64_t>(cfg.ffn_mult) * d;
  const std::int64_t C = cfg.num_classes;
  const std::int64_t n_pooled = cfg.pool_target;

  std::map<std::string, std::int64_t> parts;
  switch (cfg.variant) {
    case Variant::kLastMlp:
      parts["classifier"] = D * C;
      break;
    case Variant::kWaMlp:
      // Layer mixing commutes with the time mean, so it runs on L time-mean vectors.
      parts["weighted_average"] = L * D;
      parts["classifier"] = D * C;
      break;
    case Variant::kWaTr:
      parts["weighted_average"] = L * n_pooled * D;
      if (cfg.has_projection()) parts["projection"] = n_pooled * D * d;
      parts["temporal_transformer"] = block_macs(n_pooled, d, h);
      parts["classifier"] = d * C;
      break;
    case Variant::kTlTr:
      if (cfg.has_projection()) parts["projection"] = L * n_pooled * D * d;
      parts["temporal_transformer"] = L * block_macs(n_pooled, d, h);
      parts["layer_transformer"] = block_macs(L, d, h);
      parts["classifier"] = d * C;
      break;
  }
  return finish(std::move(parts));
}

CostReport cost_report(const HeadConfig& cfg, int raw_frames) {
  const Count params = count_params(cfg);
  const Count macs = count_macs(cfg, raw_frames);
  CostReport r;
  r.config = cfg;
  r.raw_frames = raw_frames;
  r.params = params.total;
  r.macs = macs.total;
  for (const char* name : kComponents) {
    r.breakdown[name] = {macs.breakdown.at(name), params.breakdown.at(name)};
  }
  if (cfg.variant == Variant::kWaTr && !cfg.has_projection()) {
    r.notes.emplace_back("wa_tr counted without projection: Transformer runs at backbone width");
  }
  if (!cfg.uses_transformer() && cfg.proj_dim) {
    r.notes.emplace_back("proj_dim ignored: MLP heads have no projection");
  }
  r.notes.emplace_back("MACs exclude pooling, softmax, activations, bias and positional adds; "
                       "LayerNorm counted at 5 ops per element");
  return r;
}

double speedup(const CostReport& report, double reference_macs) {
  if (!(reference_macs > 0.0)) throw InvalidInput("reference MACs must be positive");
  if (report.macs <= 0) throw InvalidInput("cost report has zero MACs; speed-up undefined");
  return reference_macs / static_cast<double>(report.macs);
}

nlohmann::json to_json(const CostReport& r) {
  nlohmann::json breakdown = nlohmann::json::object();
  for (const auto& [name, c] : r.breakdown) {
    breakdown[name] = {{"macs", c.macs}, {"params", c.params}};
  }
  return {{"head_config", heads::to_json(r.config)},
          {"raw_frames", r.raw_frames},
          {"macs", r.macs},
          {"params", r.params},
          {"gmacs", static_cast<double>(r.macs) / 1e9},
          {"mparams", static_cast<double>(r.params) / 1e6},
          {"breakdown", breakdown},
          {"notes", r.notes}};
}

std::string format_table(const CostReport& r) {
  std::ostringstream os;
  os << std::left << std::setw(22) << "component" << std::right << std::setw(18) << "MACs"
     << std::setw(14) << "params" << '\n';
  for (const char* name : kComponents) {
    const auto& c = r.breakdown.at(name);
    os << std::left << std::setw(22) << name << std::right << std::setw(18) << c.macs
       << std::setw(14) << c.params << '\n';
  }
  os << std::left << std::setw(22) << "total" << std::right << std::setw(18) << r.macs
     << std::setw(14) << r.params << '\n';
  os << std::fixed << std::setprecision(2) << "  = " << static_cast<double>(r.macs) / 1e9
     << " GMACs, " << static_cast<double>(r.params) / 1e6 << " M params\n";
  return os.str();
}

}  // namespace layertag::cost
