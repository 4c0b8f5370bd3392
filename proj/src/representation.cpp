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

#include "layertag/representation.hpp"

#include <cmath>

#include "layertag/error.hpp"

namespace layertag {

std::string_view to_string(DType dtype) {
  return dtype == DType::kF16 ? "f16" : "f32";
}

DType parse_dtype(std::string_view text) {
  if (text == "f16") return DType::kF16;
  if (text == "f32") return DType::kF32;
  throw ConfigError("unknown dtype '" + std::string(text) + "' (expected f16 or f32)");
}

RepresentationStack::RepresentationStack(std::string utterance_id, int layers, int frames, int dim,
                                         double frame_rate, DType dtype)
    : utterance_id_(std::move(utterance_id)),
      layers_(layers),
      frames_(frames),
      dim_(dim),
      frame_rate_(frame_rate),
      dtype_(dtype) {
  if (layers < 1 || frames < 0 || dim < 1) {
    throw InvalidInput("representation stack needs L >= 1, n >= 0, d >= 1");
  }
  values_.assign(static_cast<std::size_t>(layers) * frames * dim, 0.0F);
}

Eigen::Map<MatF> RepresentationStack::layer(int l) {
  return {values_.data() + index(l, 0, 0), frames_, dim_};
}

Eigen::Map<const MatF> RepresentationStack::layer(int l) const {
  return {values_.data() + index(l, 0, 0), frames_, dim_};
}

bool RepresentationStack::all_finite() const {
  for (float v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace layertag
