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

// Builders and checks shared by unit tests and the acceptance suite.

#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "layertag/heads.hpp"
#include "layertag/loss.hpp"

namespace fixtures {

inline layertag::RepresentationStack random_stack(int layers, int frames, int dim,
                                                  std::uint64_t seed, double scale = 1.0,
                                                  const std::string& id = "utt") {
  layertag::RepresentationStack s(id, layers, frames, dim, 50.0);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-scale, scale);
  for (float& v : s.values()) v = static_cast<float>(dist(rng));
  return s;
}

// Fills every tensor with uniform noise; LayerNorm gains around one.
template <typename T>
void randomize(layertag::heads::HeadParams<T>& params, std::uint64_t seed, double scale = 0.5) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-scale, scale);
  for (const auto& spec : params.layout().tensors()) {
    auto values = params.tensor(spec.name);
    const bool gain = spec.name.find("ln1.weight") != std::string::npos ||
                      spec.name.find("ln2.weight") != std::string::npos;
    for (T& v : values) v = static_cast<T>((gain ? 1.0 : 0.0) + dist(rng));
  }
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  double max_abs_diff = 0.0;
  std::string worst_tensor;
  std::size_t checked = 0;
  std::size_t failures = 0;
};

// Central finite differences on mean BCE over a two-clip batch, every
// parameter element. An element passes when |a - n| <= tol * max(|a|, |n|)
// or both are below 1e-9 in absolute difference (e.g. the attention key bias,
// whose exact gradient is zero).
inline GradCheckResult gradient_check(const layertag::heads::HeadConfig& config, std::uint64_t seed,
                                      int raw_frames, double tol = 1e-3) {
  using layertag::Mat;
  using layertag::heads::HeadParams;
  HeadParams<double> params(config);
  randomize(params, seed);
  std::vector<layertag::RepresentationStack> stacks;
  for (int b = 0; b < 2; ++b) {
    stacks.push_back(random_stack(config.backbone_layers, raw_frames, config.backbone_dim, seed + 10 + b));
  }
  std::vector<const layertag::RepresentationStack*> batch;
  for (const auto& s : stacks) batch.push_back(&s);

  std::mt19937_64 rng(seed + 99);
  Mat<double> targets(2, config.num_classes);
  for (Eigen::Index i = 0; i < targets.size(); ++i) targets.data()[i] = static_cast<double>(rng() % 2);

  auto loss_at = [&](const HeadParams<double>& p) {
    const Mat<double> logits = layertag::heads::forward<double>(p, batch);
    return layertag::training::bce_with_logits<double>(logits, targets);
  };

  layertag::heads::ForwardTrace<double> trace;
  const Mat<double> logits = layertag::heads::forward<double>(params, batch, &trace);
  Mat<double> dlogits;
  layertag::training::bce_with_logits<double>(logits, targets, &dlogits);
  std::vector<double> grad(params.size(), 0.0);
  layertag::heads::backward<double>(params, trace, dlogits, grad);

  GradCheckResult result;
  constexpr double eps = 1e-6;
  for (const auto& spec : params.layout().tensors()) {
    for (std::size_t i = spec.offset; i < spec.offset + spec.size; ++i) {
      const double saved = params.data()[i];
      params.data()[i] = saved + eps;
      const double up = loss_at(params);
      params.data()[i] = saved - eps;
      const double down = loss_at(params);
      params.data()[i] = saved;
      const double numeric = (up - down) / (2 * eps);
      const double analytic = grad[i];
      const double diff = std::abs(analytic - numeric);
      const double mag = std::max(std::abs(analytic), std::abs(numeric));
      ++result.checked;
      result.max_abs_diff = std::max(result.max_abs_diff, diff);
      if (diff < 1e-9) continue;
      const double rel = diff / mag;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst_tensor = spec.name;
      }
      if (rel > tol) ++result.failures;
    }
  }
  return result;
}

}  // namespace fixtures
