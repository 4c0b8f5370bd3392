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
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace layertag {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;

using MatF = Mat<float>;

// Storage precision of representation values.
enum class DType : std::uint8_t { kF32 = 0, kF16 = 1 };

std::string_view to_string(DType dtype);
DType parse_dtype(std::string_view text);

// Encoder activations for one utterance, laid out [layer][frame][dim].
class RepresentationStack {
 public:
  RepresentationStack() = default;
  RepresentationStack(std::string utterance_id, int layers, int frames, int dim,
                      double frame_rate, DType dtype = DType::kF32);

  int layers() const { return layers_; }
  int frames() const { return frames_; }
  int dim() const { return dim_; }
  double frame_rate() const { return frame_rate_; }
  DType dtype() const { return dtype_; }
  const std::string& utterance_id() const { return utterance_id_; }

  void set_utterance_id(std::string id) { utterance_id_ = std::move(id); }
  void set_dtype(DType dtype) { dtype_ = dtype; }

  std::span<float> values() { return values_; }
  std::span<const float> values() const { return values_; }

  float& at(int layer, int frame, int k) { return values_[index(layer, frame, k)]; }
  float at(int layer, int frame, int k) const { return values_[index(layer, frame, k)]; }

  // frames × dim view of one layer.
  Eigen::Map<MatF> layer(int l);
  Eigen::Map<const MatF> layer(int l) const;

  bool all_finite() const;
  // Seconds covered by the frames.
  double duration() const { return frames_ / frame_rate_; }

  friend bool operator==(const RepresentationStack&, const RepresentationStack&) = default;

 private:
  std::size_t index(int layer, int frame, int k) const {
    return (static_cast<std::size_t>(layer) * frames_ + frame) * dim_ + k;
  }

  std::string utterance_id_;
  int layers_ = 0;
  int frames_ = 0;
  int dim_ = 0;
  double frame_rate_ = 0.0;
  DType dtype_ = DType::kF32;
  std::vector<float> values_;
};

}  // namespace layertag
