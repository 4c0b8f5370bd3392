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
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "layertag/representation.hpp"

namespace layertag::heads {

enum class Variant { kLastMlp, kWaMlp, kWaTr, kTlTr };

std::string_view to_string(Variant variant);
// Accepts "last_mlp", "wa_mlp", "wa_tr", "tl_tr" (case-insensitive, '-' or '_').
Variant parse_variant(std::string_view text);

struct HeadConfig {
  Variant variant = Variant::kTlTr;
  int num_classes = 527;
  int backbone_layers = 32;
  int backbone_dim = 1280;
  // Pooled sequence length n' seen by the temporal Transformer.
  int pool_target = 25;
  // Projection width d'. Absent means the Transformers run at backbone_dim.
  // Ignored by the MLP variants.
  std::optional<int> proj_dim;
  int attn_heads = 1;
  int ffn_mult = 4;
  // Learnable positional embeddings before each Transformer block.
  bool positional_embeddings = false;

  bool uses_transformer() const {
    return variant == Variant::kWaTr || variant == Variant::kTlTr;
  }
  bool has_projection() const { return uses_transformer() && proj_dim.has_value(); }
  // Width of the Transformer blocks and of the classifier input.
  int model_dim() const { return has_projection() ? *proj_dim : backbone_dim; }
  // Frames per layer after input preparation: n' for Transformer heads, 1 for MLP heads.
  int prepared_frames() const { return uses_transformer() ? pool_target : 1; }

  // Throws ConfigError on a violated invariant.
  void validate() const;

  friend bool operator==(const HeadConfig&, const HeadConfig&) = default;
};

nlohmann::json to_json(const HeadConfig& config);
HeadConfig head_config_from_json(const nlohmann::json& j);

struct TensorSpec {
  std::string name;
  std::vector<std::size_t> shape;
  std::size_t offset = 0;
  std::size_t size = 0;

  friend bool operator==(const TensorSpec&, const TensorSpec&) = default;
};

// Named slices of one flat parameter buffer. The order here is the order
// tensors appear in checkpoints.
//
// Tensor names (Linear weights are stored [in x out], y = x W + b):
//   wa.weight                      [L]                 WA_MLP, WA_TR
//   proj.weight, proj.bias         [D x d'], [d']      when projecting
//   temporal.pos                   [n' x d']           positional embeddings on
//   temporal.<block>               see below           WA_TR, TL_TR
//   layer.pos                      [L x d']            TL_TR, positional on
//   layer.<block>                                      TL_TR
//   classifier.weight, .bias       [d_in x C], [C]
// Block tensors, relative to the block prefix:
//   ln1.weight ln1.bias [d'], attn.{q,k,v,o}.weight [d' x d'], attn.{q,k,v,o}.bias [d'],
//   ln2.weight ln2.bias [d'], ffn.fc1.weight [d' x h], ffn.fc1.bias [h],
//   ffn.fc2.weight [h x d'], ffn.fc2.bias [d'] with h = ffn_mult * d'.
class ParamLayout {
 public:
  explicit ParamLayout(const HeadConfig& config);

  std::span<const TensorSpec> tensors() const { return tensors_; }
  bool contains(std::string_view name) const;
  const TensorSpec& find(std::string_view name) const;
  std::size_t total() const { return total_; }

  friend bool operator==(const ParamLayout&, const ParamLayout&) = default;

 private:
  void add(std::string name, std::vector<std::size_t> shape);

  std::vector<TensorSpec> tensors_;
  std::size_t total_ = 0;
};

template <typename T>
class HeadParams {
 public:
  // All tensors zero.
  explicit HeadParams(HeadConfig config);

  // Default initialisation: WA weights and classifier zero, LayerNorm gains
  // one, biases zero, other matrices uniform in +-1/sqrt(fan_in), positional
  // embeddings uniform in +-0.02.
  static HeadParams initialized(HeadConfig config, std::uint64_t seed);

  const HeadConfig& config() const { return config_; }
  const ParamLayout& layout() const { return layout_; }
  std::size_t size() const { return data_.size(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::span<T> tensor(std::string_view name);
  std::span<const T> tensor(std::string_view name) const;

  template <typename U>
  HeadParams<U> cast() const {
    HeadParams<U> out(config_);
    auto dst = out.data();
    for (std::size_t i = 0; i < data_.size(); ++i) dst[i] = static_cast<U>(data_[i]);
    return out;
  }

  bool all_finite() const;

  friend bool operator==(const HeadParams&, const HeadParams&) = default;

 private:
  HeadConfig config_;
  ParamLayout layout_;
  std::vector<T> data_;
};

extern template class HeadParams<float>;
extern template class HeadParams<double>;

// Non-overlapping mean pooling along time with factor k = floor(n / target);
// the last output frame also absorbs the n - target*k leftover frames.
RepresentationStack temporal_pool(const RepresentationStack& stack, int target);

// sum_l softmax(w)_l * stack[l], shape frames x dim.
MatF weighted_average(const RepresentationStack& stack, std::span<const float> w);

// Pools the stack to what the variant consumes: n' frames for Transformer
// heads, a single time-mean frame for MLP heads.
RepresentationStack prepare_input(const HeadConfig& config, const RepresentationStack& stack);

template <typename T>
using ColVec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

template <typename T>
struct NormTrace {
  Mat<T> xhat;
  ColVec<T> rstd;
};

// Activations of one pre-norm Transformer block applied to rows grouped into
// independent sequences of seq_len rows each.
template <typename T>
struct BlockTrace {
  int seq_len = 0;
  Mat<T> x;
  NormTrace<T> ln1;
  Mat<T> a1, q, k, v, ctx;
  std::vector<Mat<T>> probs;  // one per (sequence, head)
  Mat<T> h;
  NormTrace<T> ln2;
  Mat<T> a2, z, g;
};

// Intermediate activations kept for the backward pass.
template <typename T>
struct ForwardTrace {
  int batch = 0;
  int frames = 0;           // m, frames per layer of the prepared input
  Mat<T> input;             // (B*L*m) x D, row (b*L + l)*m + t
  RowVec<T> layer_weights;  // softmax(wa.weight)
  Mat<T> mixed;             // WA variants: (B*m) x D
  BlockTrace<T> temporal;
  Mat<T> temporal_out;      // TL_TR: (B*L) x d' time means
  BlockTrace<T> layer;
  Mat<T> features;          // B x d_in classifier input
};

// Batched forward. Each stack may be raw or already prepared; it is pooled to
// the variant's prepared length when needed. Returns logits, batch x C.
template <typename T>
Mat<T> forward(const HeadParams<T>& params, std::span<const RepresentationStack* const> batch,
               ForwardTrace<T>* trace = nullptr);

// Accumulates d(loss)/d(params) into grad given d(loss)/d(logits) for the
// batch recorded in trace.
template <typename T>
void backward(const HeadParams<T>& params, const ForwardTrace<T>& trace, const Mat<T>& dlogits,
              std::span<T> grad);

// Single-stack forwards, one per head variant. Each checks that params were
// built for that variant and that the stack matches the backbone shape.
std::vector<float> forward_last_mlp(const RepresentationStack& stack, const HeadParams<float>& params);
std::vector<float> forward_wa_mlp(const RepresentationStack& stack, const HeadParams<float>& params);
std::vector<float> forward_wa_tr(const RepresentationStack& stack, const HeadParams<float>& params);
std::vector<float> forward_tl_tr(const RepresentationStack& stack, const HeadParams<float>& params);

// Dispatches on params.config().variant.
std::vector<float> forward_logits(const RepresentationStack& stack, const HeadParams<float>& params);

std::vector<float> sigmoid(std::span<const float> logits);

struct ScoredClass {
  std::string name;
  int index = 0;
  float score = 0.0F;
};

struct TaggingResult {
  std::vector<float> scores;
  std::vector<ScoredClass> top_k;
  std::optional<std::string> transcript;
};

// top_k is sorted by descending score, ties by ascending class index.
TaggingResult make_tagging_result(std::span<const float> logits,
                                  std::span<const std::string> class_names, int top_k);

nlohmann::json to_json(const TaggingResult& result, bool include_all_scores);

// Head checkpoint file:
//   "WATH" | u32 version | u32 n | n bytes of JSON {"format_version", "head_config", "meta"}
//   | u32 tensor_count | per tensor: u32 name_len, name, u32 rank, u64 dims[rank], f32 data
// All integers and floats little-endian; tensors in ParamLayout order.
constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const HeadParams<float>& params,
                     const nlohmann::json& meta = nlohmann::json::object());

struct Checkpoint {
  HeadParams<float> params;
  nlohmann::json meta;
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace layertag::heads
