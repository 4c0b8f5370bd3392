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

#include "layertag/heads.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <fstream>
#include <numeric>
#include <random>

#include "binary_io.hpp"
#include "layertag/error.hpp"

namespace layertag::heads {

namespace {

constexpr double kLayerNormEps = 1e-5;

std::string normalize_token(std::string_view text) {
  std::string out;
  for (char c : text) {
    out.push_back(c == '-' ? '_' : static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Parameter slots resolved from the layout.

struct LinearSlots {
  const TensorSpec* w = nullptr;
  const TensorSpec* b = nullptr;
};

struct NormSlots {
  const TensorSpec* g = nullptr;
  const TensorSpec* b = nullptr;
};

struct BlockSlots {
  NormSlots ln1, ln2;
  LinearSlots q, k, v, o, fc1, fc2;
};

struct Slots {
  const TensorSpec* wa = nullptr;
  std::optional<LinearSlots> proj;
  const TensorSpec* pos_time = nullptr;
  const TensorSpec* pos_layer = nullptr;
  std::optional<BlockSlots> temporal, layer;
  LinearSlots classifier;
};

LinearSlots linear_slots(const ParamLayout& layout, const std::string& prefix) {
  return {&layout.find(prefix + ".weight"), &layout.find(prefix + ".bias")};
}

NormSlots norm_slots(const ParamLayout& layout, const std::string& prefix) {
  return {&layout.find(prefix + ".weight"), &layout.find(prefix + ".bias")};
}

BlockSlots block_slots(const ParamLayout& layout, const std::string& p) {
  BlockSlots s;
  s.ln1 = norm_slots(layout, p + ".ln1");
  s.q = linear_slots(layout, p + ".attn.q");
  s.k = linear_slots(layout, p + ".attn.k");
  s.v = linear_slots(layout, p + ".attn.v");
  s.o = linear_slots(layout, p + ".attn.o");
  s.ln2 = norm_slots(layout, p + ".ln2");
  s.fc1 = linear_slots(layout, p + ".ffn.fc1");
  s.fc2 = linear_slots(layout, p + ".ffn.fc2");
  return s;
}

Slots resolve(const ParamLayout& layout) {
  Slots s;
  if (layout.contains("wa.weight")) s.wa = &layout.find("wa.weight");
  if (layout.contains("proj.weight")) s.proj = linear_slots(layout, "proj");
  if (layout.contains("temporal.pos")) s.pos_time = &layout.find("temporal.pos");
  if (layout.contains("layer.pos")) s.pos_layer = &layout.find("layer.pos");
  if (layout.contains("temporal.ln1.weight")) s.temporal = block_slots(layout, "temporal");
  if (layout.contains("layer.ln1.weight")) s.layer = block_slots(layout, "layer");
  s.classifier = linear_slots(layout, "classifier");
  return s;
}

// Read-only views into the parameter buffer.
template <typename T>
struct ParamView {
  const T* base;
  Eigen::Map<const Mat<T>> mat(const TensorSpec* s) const {
    return {base + s->offset, static_cast<Eigen::Index>(s->shape[0]),
            static_cast<Eigen::Index>(s->shape[1])};
  }
  Eigen::Map<const RowVec<T>> vec(const TensorSpec* s) const {
    return {base + s->offset, static_cast<Eigen::Index>(s->size)};
  }
};

// Writable views into the gradient buffer.
template <typename T>
struct GradView {
  T* base;
  Eigen::Map<Mat<T>> mat(const TensorSpec* s) const {
    return {base + s->offset, static_cast<Eigen::Index>(s->shape[0]),
            static_cast<Eigen::Index>(s->shape[1])};
  }
  Eigen::Map<RowVec<T>> vec(const TensorSpec* s) const {
    return {base + s->offset, static_cast<Eigen::Index>(s->size)};
  }
};

// ---------------------------------------------------------------------------
// Layer primitives.

template <typename T>
Mat<T> linear(const ParamView<T>& p, const LinearSlots& s, const Mat<T>& x) {
  Mat<T> y = x * p.mat(s.w);
  y.rowwise() += p.vec(s.b);
  return y;
}

// Accumulates weight/bias gradients and returns d(input).
template <typename T>
Mat<T> linear_backward(const ParamView<T>& p, const GradView<T>& g, const LinearSlots& s,
                       const Mat<T>& x, const Mat<T>& dy) {
  g.mat(s.w).noalias() += x.transpose() * dy;
  g.vec(s.b) += dy.colwise().sum();
  return dy * p.mat(s.w).transpose();
}

template <typename T>
Mat<T> layer_norm(const ParamView<T>& p, const NormSlots& s, const Mat<T>& x, NormTrace<T>& tr) {
  const ColVec<T> mean = x.rowwise().mean();
  Mat<T> xc = x.colwise() - mean;
  const ColVec<T> var = xc.array().square().rowwise().mean();
  tr.rstd = (var.array() + static_cast<T>(kLayerNormEps)).rsqrt();
  tr.xhat = xc.array().colwise() * tr.rstd.array();
  Mat<T> y = tr.xhat.array().rowwise() * p.vec(s.g).array();
  y.rowwise() += p.vec(s.b);
  return y;
}

template <typename T>
Mat<T> layer_norm_backward(const ParamView<T>& p, const GradView<T>& g, const NormSlots& s,
                           const NormTrace<T>& tr, const Mat<T>& dy) {
  g.vec(s.g) += (dy.array() * tr.xhat.array()).colwise().sum().matrix();
  g.vec(s.b) += dy.colwise().sum();
  const Mat<T> dxhat = dy.array().rowwise() * p.vec(s.g).array();
  const ColVec<T> mean_d = dxhat.rowwise().mean();
  const ColVec<T> mean_dx = (dxhat.array() * tr.xhat.array()).rowwise().mean();
  Mat<T> dx = dxhat.colwise() - mean_d;
  dx -= (tr.xhat.array().colwise() * mean_dx.array()).matrix();
  return dx.array().colwise() * tr.rstd.array();
}

template <typename T>
T gelu(T x) {
  return static_cast<T>(0.5) * x * (static_cast<T>(1) + std::erf(x / std::sqrt(static_cast<T>(2))));
}

template <typename T>
T gelu_grad(T x) {
  const T cdf = static_cast<T>(0.5) * (static_cast<T>(1) + std::erf(x / std::sqrt(static_cast<T>(2))));
  const T pdf = std::exp(static_cast<T>(-0.5) * x * x) / std::sqrt(static_cast<T>(2.0 * std::numbers::pi));
  return cdf + x * pdf;
}

template <typename T>
void softmax_rows(Mat<T>& s) {
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    const T mx = s.row(r).maxCoeff();
    s.row(r) = (s.row(r).array() - mx).exp();
    s.row(r) /= s.row(r).sum();
  }
}

// Pre-norm block: h = x + Attn(LN1(x)), y = h + FFN(LN2(h)).
template <typename T>
Mat<T> block_forward(const ParamView<T>& p, const BlockSlots& s, const Mat<T>& x, int seq_len,
                     int heads, BlockTrace<T>& tr) {
  const Eigen::Index rows = x.rows();
  const Eigen::Index dim = x.cols();
  const Eigen::Index head_dim = dim / heads;
  const Eigen::Index num_seq = rows / seq_len;
  const T scale = static_cast<T>(1) / std::sqrt(static_cast<T>(head_dim));

  tr.seq_len = seq_len;
  tr.a1 = layer_norm(p, s.ln1, x, tr.ln1);
  tr.q = linear(p, s.q, tr.a1);
  tr.k = linear(p, s.k, tr.a1);
  tr.v = linear(p, s.v, tr.a1);
  tr.ctx.resize(rows, dim);
  tr.probs.assign(static_cast<std::size_t>(num_seq * heads), Mat<T>());
  for (Eigen::Index sq = 0; sq < num_seq; ++sq) {
    for (Eigen::Index hd = 0; hd < heads; ++hd) {
      const auto qs = tr.q.block(sq * seq_len, hd * head_dim, seq_len, head_dim);
      const auto ks = tr.k.block(sq * seq_len, hd * head_dim, seq_len, head_dim);
      const auto vs = tr.v.block(sq * seq_len, hd * head_dim, seq_len, head_dim);
      Mat<T>& prob = tr.probs[static_cast<std::size_t>(sq * heads + hd)];
      prob = (qs * ks.transpose()) * scale;
      softmax_rows(prob);
      tr.ctx.block(sq * seq_len, hd * head_dim, seq_len, head_dim).noalias() = prob * vs;
    }
  }
  Mat<T> h = x + linear(p, s.o, tr.ctx);
  tr.a2 = layer_norm(p, s.ln2, h, tr.ln2);
  tr.z = linear(p, s.fc1, tr.a2);
  tr.g = tr.z.unaryExpr([](T v) { return gelu(v); });
  h += linear(p, s.fc2, tr.g);
  return h;
}

template <typename T>
Mat<T> block_backward(const ParamView<T>& p, const GradView<T>& g, const BlockSlots& s, int heads,
                      const BlockTrace<T>& tr, const Mat<T>& dy) {
  const Eigen::Index rows = dy.rows();
  const Eigen::Index dim = dy.cols();
  const Eigen::Index head_dim = dim / heads;
  const Eigen::Index seq_len = tr.seq_len;
  const Eigen::Index num_seq = rows / seq_len;
  const T scale = static_cast<T>(1) / std::sqrt(static_cast<T>(head_dim));

  // FFN branch.
  const Mat<T> dg = linear_backward(p, g, s.fc2, tr.g, dy);
  const Mat<T> dz = dg.array() * tr.z.unaryExpr([](T v) { return gelu_grad(v); }).array();
  const Mat<T> da2 = linear_backward(p, g, s.fc1, tr.a2, dz);
  Mat<T> dh = dy + layer_norm_backward(p, g, s.ln2, tr.ln2, da2);

  // Attention branch.
  const Mat<T> dctx = linear_backward(p, g, s.o, tr.ctx, dh);
  Mat<T> dq(rows, dim), dk(rows, dim), dv(rows, dim);
  for (Eigen::Index sq = 0; sq < num_seq; ++sq) {
    for (Eigen::Index hd = 0; hd < heads; ++hd) {
      const Eigen::Index r0 = sq * seq_len;
      const Eigen::Index c0 = hd * head_dim;
      const Mat<T>& prob = tr.probs[static_cast<std::size_t>(sq * heads + hd)];
      const auto dc = dctx.block(r0, c0, seq_len, head_dim);
      const Mat<T> dprob = dc * tr.v.block(r0, c0, seq_len, head_dim).transpose();
      dv.block(r0, c0, seq_len, head_dim).noalias() = prob.transpose() * dc;
      const ColVec<T> dot = (dprob.array() * prob.array()).rowwise().sum();
      const Mat<T> dscore = (prob.array() * (dprob.colwise() - dot).array()) * scale;
      dq.block(r0, c0, seq_len, head_dim).noalias() =
          dscore * tr.k.block(r0, c0, seq_len, head_dim);
      dk.block(r0, c0, seq_len, head_dim).noalias() =
          dscore.transpose() * tr.q.block(r0, c0, seq_len, head_dim);
    }
  }
  Mat<T> da1 = linear_backward(p, g, s.q, tr.a1, dq);
  da1 += linear_backward(p, g, s.k, tr.a1, dk);
  da1 += linear_backward(p, g, s.v, tr.a1, dv);
  dh += layer_norm_backward(p, g, s.ln1, tr.ln1, da1);
  return dh;
}

// Mean over consecutive groups of `group` rows.
template <typename T>
Mat<T> group_mean(const Mat<T>& x, Eigen::Index group) {
  const Eigen::Index n = x.rows() / group;
  Mat<T> out(n, x.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    out.row(i) = x.middleRows(i * group, group).colwise().mean();
  }
  return out;
}

// Backward of group_mean: each member row receives d/group.
template <typename T>
Mat<T> group_spread(const Mat<T>& d, Eigen::Index group) {
  Mat<T> out(d.rows() * group, d.cols());
  const T inv = static_cast<T>(1) / static_cast<T>(group);
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    out.middleRows(i * group, group).rowwise() = d.row(i) * inv;
  }
  return out;
}

template <typename T>
void add_positions(Mat<T>& x, const Eigen::Map<const Mat<T>>& pos) {
  const Eigen::Index len = pos.rows();
  for (Eigen::Index r = 0; r < x.rows(); ++r) x.row(r) += pos.row(r % len);
}

template <typename T>
void accumulate_positions(Eigen::Map<Mat<T>> gpos, const Mat<T>& dx) {
  const Eigen::Index len = gpos.rows();
  for (Eigen::Index r = 0; r < dx.rows(); ++r) gpos.row(r % len) += dx.row(r);
}

template <typename T>
RowVec<T> softmax(const Eigen::Map<const RowVec<T>>& w) {
  RowVec<T> p = (w.array() - w.maxCoeff()).exp();
  return p / p.sum();
}

// Mixes the L layers of every sample with weights p: (B*L*m) x D -> (B*m) x D.
template <typename T>
Mat<T> mix_layers(const Mat<T>& input, const RowVec<T>& p, int batch, int layers, int frames) {
  Mat<T> mixed = Mat<T>::Zero(static_cast<Eigen::Index>(batch) * frames, input.cols());
  for (int b = 0; b < batch; ++b) {
    for (int l = 0; l < layers; ++l) {
      mixed.middleRows(static_cast<Eigen::Index>(b) * frames, frames) +=
          p(l) * input.middleRows((static_cast<Eigen::Index>(b) * layers + l) * frames, frames);
    }
  }
  return mixed;
}

template <typename T>
void mix_layers_backward(const Mat<T>& input, const RowVec<T>& p, const Mat<T>& dmixed, int batch,
                         int layers, int frames, Eigen::Map<RowVec<T>> gw) {
  RowVec<T> dp = RowVec<T>::Zero(layers);
  for (int b = 0; b < batch; ++b) {
    for (int l = 0; l < layers; ++l) {
      dp(l) += (dmixed.middleRows(static_cast<Eigen::Index>(b) * frames, frames).array() *
                input.middleRows((static_cast<Eigen::Index>(b) * layers + l) * frames, frames).array())
                   .sum();
    }
  }
  const T inner = p.dot(dp);
  gw += (p.array() * (dp.array() - inner)).matrix();
}

void check_stack(const HeadConfig& cfg, const RepresentationStack& stack) {
  if (stack.layers() != cfg.backbone_layers || stack.dim() != cfg.backbone_dim) {
    throw InvalidInput("stack shape [" + std::to_string(stack.layers()) + " x " +
                       std::to_string(stack.frames()) + " x " + std::to_string(stack.dim()) +
                       "] does not match head backbone L=" + std::to_string(cfg.backbone_layers) +
                       ", d=" + std::to_string(cfg.backbone_dim));
  }
  if (stack.frames() < cfg.prepared_frames()) {
    throw InvalidInput("stack has " + std::to_string(stack.frames()) +
                       " frames, fewer than the head's pool target " +
                       std::to_string(cfg.prepared_frames()));
  }
}

}  // namespace

// ---------------------------------------------------------------------------

std::string_view to_string(Variant variant) {
  switch (variant) {
    case Variant::kLastMlp:
      return "last_mlp";
    case Variant::kWaMlp:
      return "wa_mlp";
    case Variant::kWaTr:
      return "wa_tr";
    case Variant::kTlTr:
      return "tl_tr";
  }
  return "unknown";
}

Variant parse_variant(std::string_view text) {
  const std::string t = normalize_token(text);
  if (t == "last_mlp") return Variant::kLastMlp;
  if (t == "wa_mlp") return Variant::kWaMlp;
  if (t == "wa_tr") return Variant::kWaTr;
  if (t == "tl_tr") return Variant::kTlTr;
  throw ConfigError("unknown head variant '" + std::string(text) +
                    "' (expected last_mlp, wa_mlp, wa_tr or tl_tr)");
}

void HeadConfig::validate() const {
  if (num_classes < 1) throw ConfigError("head.num_classes must be positive");
  if (backbone_layers < 1 || backbone_dim < 1) {
    throw ConfigError("head backbone_layers and backbone_dim must be positive");
  }
  if (pool_target < 1) throw ConfigError("head.pool_target must be positive");
  if (ffn_mult < 1) throw ConfigError("head.ffn_mult must be positive");
  if (attn_heads < 1) throw ConfigError("head.attn_heads must be positive");
  if (proj_dim) {
    if (*proj_dim < 1) throw ConfigError("head.proj_dim must be positive");
    if (*proj_dim > backbone_dim) {
      throw ConfigError("head.proj_dim " + std::to_string(*proj_dim) + " exceeds backbone_dim " +
                        std::to_string(backbone_dim));
    }
  }
  if (uses_transformer() && model_dim() % attn_heads != 0) {
    throw ConfigError("head.attn_heads " + std::to_string(attn_heads) +
                      " does not divide the Transformer width " + std::to_string(model_dim()));
  }
}

nlohmann::json to_json(const HeadConfig& c) {
  nlohmann::json j = {{"variant", std::string(to_string(c.variant))},
                      {"num_classes", c.num_classes},
                      {"backbone_layers", c.backbone_layers},
                      {"backbone_dim", c.backbone_dim},
                      {"pool_target", c.pool_target},
                      {"proj_dim", nullptr},
                      {"attn_heads", c.attn_heads},
                      {"ffn_mult", c.ffn_mult},
                      {"positional_embeddings", c.positional_embeddings}};
  if (c.proj_dim) j["proj_dim"] = *c.proj_dim;
  return j;
}

HeadConfig head_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("head config must be a JSON object");
  HeadConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "variant") {
        c.variant = parse_variant(value.get<std::string>());
      } else if (key == "num_classes") {
        c.num_classes = value.get<int>();
      } else if (key == "backbone_layers") {
        c.backbone_layers = value.get<int>();
      } else if (key == "backbone_dim") {
        c.backbone_dim = value.get<int>();
      } else if (key == "pool_target") {
        c.pool_target = value.get<int>();
      } else if (key == "proj_dim") {
        if (value.is_null()) {
          c.proj_dim.reset();
        } else {
          c.proj_dim = value.get<int>();
        }
      } else if (key == "attn_heads") {
        c.attn_heads = value.get<int>();
      } else if (key == "ffn_mult") {
        c.ffn_mult = value.get<int>();
      } else if (key == "positional_embeddings") {
        c.positional_embeddings = value.get<bool>();
      } else {
        throw ConfigError("unknown head config key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad head config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------

ParamLayout::ParamLayout(const HeadConfig& cfg) {
  cfg.validate();
  const std::size_t L = cfg.backbone_layers;
  const std::size_t D = cfg.backbone_dim;
  const std::size_t d = cfg.model_dim();
  const std::size_t hidden = static_cast<std::size_t>(cfg.ffn_mult) * d;

  auto add_block = [&](const std::string& p) {
    add(p + ".ln1.weight", {d});
    add(p + ".ln1.bias", {d});
    for (const char* name : {"q", "k", "v", "o"}) {
      add(p + ".attn." + name + ".weight", {d, d});
      add(p + ".attn." + name + ".bias", {d});
    }
    add(p + ".ln2.weight", {d});
    add(p + ".ln2.bias", {d});
    add(p + ".ffn.fc1.weight", {d, hidden});
    add(p + ".ffn.fc1.bias", {hidden});
    add(p + ".ffn.fc2.weight", {hidden, d});
    add(p + ".ffn.fc2.bias", {d});
  };

  if (cfg.variant == Variant::kWaMlp || cfg.variant == Variant::kWaTr) add("wa.weight", {L});
  if (cfg.has_projection()) {
    add("proj.weight", {D, d});
    add("proj.bias", {d});
  }
  if (cfg.uses_transformer()) {
    if (cfg.positional_embeddings) add("temporal.pos", {static_cast<std::size_t>(cfg.pool_target), d});
    add_block("temporal");
  }
  if (cfg.variant == Variant::kTlTr) {
    if (cfg.positional_embeddings) add("layer.pos", {L, d});
    add_block("layer");
  }
  const std::size_t d_in = cfg.uses_transformer() ? d : D;
  add("classifier.weight", {d_in, static_cast<std::size_t>(cfg.num_classes)});
  add("classifier.bias", {static_cast<std::size_t>(cfg.num_classes)});
}

void ParamLayout::add(std::string name, std::vector<std::size_t> shape) {
  std::size_t size = 1;
  for (std::size_t s : shape) size *= s;
  tensors_.push_back({std::move(name), std::move(shape), total_, size});
  total_ += size;
}

bool ParamLayout::contains(std::string_view name) const {
  return std::any_of(tensors_.begin(), tensors_.end(),
                     [&](const TensorSpec& t) { return t.name == name; });
}

const TensorSpec& ParamLayout::find(std::string_view name) const {
  for (const auto& t : tensors_) {
    if (t.name == name) return t;
  }
  throw NotFound("no parameter tensor named '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------

template <typename T>
HeadParams<T>::HeadParams(HeadConfig config)
    : config_(std::move(config)), layout_(config_), data_(layout_.total(), T{0}) {}

template <typename T>
HeadParams<T> HeadParams<T>::initialized(HeadConfig config, std::uint64_t seed) {
  HeadParams<T> p(std::move(config));
  std::mt19937_64 rng(seed);
  auto ends_with = [](const std::string& s, std::string_view suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  for (const auto& spec : p.layout_.tensors()) {
    auto values = std::span<T>(p.data_).subspan(spec.offset, spec.size);
    const std::string& n = spec.name;
    if (n == "wa.weight" || n.rfind("classifier.", 0) == 0 || ends_with(n, ".bias")) {
      std::fill(values.begin(), values.end(), T{0});
    } else if (ends_with(n, "ln1.weight") || ends_with(n, "ln2.weight")) {
      std::fill(values.begin(), values.end(), T{1});
    } else if (ends_with(n, ".pos")) {
      std::uniform_real_distribution<double> dist(-0.02, 0.02);
      for (T& v : values) v = static_cast<T>(dist(rng));
    } else {
      const double bound = 1.0 / std::sqrt(static_cast<double>(spec.shape[0]));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (T& v : values) v = static_cast<T>(dist(rng));
    }
  }
  return p;
}

template <typename T>
std::span<T> HeadParams<T>::tensor(std::string_view name) {
  const auto& spec = layout_.find(name);
  return std::span<T>(data_).subspan(spec.offset, spec.size);
}

template <typename T>
std::span<const T> HeadParams<T>::tensor(std::string_view name) const {
  const auto& spec = layout_.find(name);
  return std::span<const T>(data_).subspan(spec.offset, spec.size);
}

template <typename T>
bool HeadParams<T>::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

template class HeadParams<float>;
template class HeadParams<double>;

// ---------------------------------------------------------------------------

RepresentationStack temporal_pool(const RepresentationStack& stack, int target) {
  const int n = stack.frames();
  if (target < 1) throw InvalidInput("pool target must be positive");
  if (n < target) {
    throw InvalidInput("cannot pool " + std::to_string(n) + " frames to " + std::to_string(target));
  }
  const int k = n / target;
  RepresentationStack out(stack.utterance_id(), stack.layers(), target, stack.dim(),
                          stack.frame_rate() * target / n, stack.dtype());
  std::vector<double> acc(static_cast<std::size_t>(stack.dim()));
  for (int l = 0; l < stack.layers(); ++l) {
    for (int t = 0; t < target; ++t) {
      const int begin = t * k;
      const int end = t == target - 1 ? n : begin + k;
      std::fill(acc.begin(), acc.end(), 0.0);
      for (int f = begin; f < end; ++f) {
        for (int j = 0; j < stack.dim(); ++j) acc[j] += stack.at(l, f, j);
      }
      const double inv = 1.0 / (end - begin);
      for (int j = 0; j < stack.dim(); ++j) out.at(l, t, j) = static_cast<float>(acc[j] * inv);
    }
  }
  return out;
}

MatF weighted_average(const RepresentationStack& stack, std::span<const float> w) {
  if (static_cast<int>(w.size()) != stack.layers()) {
    throw InvalidInput("layer weight count " + std::to_string(w.size()) + " != L = " +
                       std::to_string(stack.layers()));
  }
  const double mx = *std::max_element(w.begin(), w.end());
  std::vector<double> p(w.size());
  double total = 0.0;
  for (std::size_t l = 0; l < w.size(); ++l) total += p[l] = std::exp(static_cast<double>(w[l]) - mx);
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(stack.frames(), stack.dim());
  for (int l = 0; l < stack.layers(); ++l) {
    acc += (p[l] / total) * stack.layer(l).cast<double>();
  }
  return acc.cast<float>();
}

RepresentationStack prepare_input(const HeadConfig& config, const RepresentationStack& stack) {
  check_stack(config, stack);
  return temporal_pool(stack, config.prepared_frames());
}

template <typename T>
Mat<T> forward(const HeadParams<T>& params, std::span<const RepresentationStack* const> batch,
               ForwardTrace<T>* trace) {
  const HeadConfig& cfg = params.config();
  if (batch.empty()) throw InvalidInput("empty batch");
  const int B = static_cast<int>(batch.size());
  const int L = cfg.backbone_layers;
  const int m = cfg.prepared_frames();
  const Slots slots = resolve(params.layout());
  const ParamView<T> p{params.data().data()};

  ForwardTrace<T> local;
  ForwardTrace<T>& tr = trace != nullptr ? *trace : local;
  tr.batch = B;
  tr.frames = m;
  tr.input.resize(static_cast<Eigen::Index>(B) * L * m, cfg.backbone_dim);
  for (int b = 0; b < B; ++b) {
    const RepresentationStack* stack = batch[b];
    check_stack(cfg, *stack);
    RepresentationStack pooled;
    if (stack->frames() != m) {
      pooled = temporal_pool(*stack, m);
      stack = &pooled;
    }
    for (int l = 0; l < L; ++l) {
      tr.input.middleRows((static_cast<Eigen::Index>(b) * L + l) * m, m) =
          stack->layer(l).template cast<T>();
    }
  }

  switch (cfg.variant) {
    case Variant::kLastMlp: {
      tr.features.resize(B, cfg.backbone_dim);
      for (int b = 0; b < B; ++b) {
        tr.features.row(b) =
            tr.input.middleRows((static_cast<Eigen::Index>(b) * L + L - 1) * m, m).colwise().mean();
      }
      break;
    }
    case Variant::kWaMlp: {
      tr.layer_weights = softmax(p.vec(slots.wa));
      tr.mixed = mix_layers(tr.input, tr.layer_weights, B, L, m);
      tr.features = group_mean(tr.mixed, m);
      break;
    }
    case Variant::kWaTr: {
      tr.layer_weights = softmax(p.vec(slots.wa));
      tr.mixed = mix_layers(tr.input, tr.layer_weights, B, L, m);
      Mat<T> x = slots.proj ? linear(p, *slots.proj, tr.mixed) : tr.mixed;
      if (slots.pos_time != nullptr) add_positions(x, p.mat(slots.pos_time));
      const Mat<T> y = block_forward(p, *slots.temporal, x, m, cfg.attn_heads, tr.temporal);
      tr.features = group_mean(y, m);
      break;
    }
    case Variant::kTlTr: {
      Mat<T> x = slots.proj ? linear(p, *slots.proj, tr.input) : tr.input;
      if (slots.pos_time != nullptr) add_positions(x, p.mat(slots.pos_time));
      const Mat<T> y = block_forward(p, *slots.temporal, x, m, cfg.attn_heads, tr.temporal);
      tr.temporal_out = group_mean(y, m);
      Mat<T> tokens = tr.temporal_out;
      if (slots.pos_layer != nullptr) add_positions(tokens, p.mat(slots.pos_layer));
      const Mat<T> z = block_forward(p, *slots.layer, tokens, L, cfg.attn_heads, tr.layer);
      tr.features = group_mean(z, L);
      break;
    }
  }
  return linear(p, slots.classifier, tr.features);
}

template <typename T>
void backward(const HeadParams<T>& params, const ForwardTrace<T>& tr, const Mat<T>& dlogits,
              std::span<T> grad) {
  const HeadConfig& cfg = params.config();
  if (grad.size() != params.size()) throw InvalidInput("gradient buffer size mismatch");
  if (dlogits.rows() != tr.batch || dlogits.cols() != cfg.num_classes) {
    throw InvalidInput("dlogits shape does not match the traced batch");
  }
  const int B = tr.batch;
  const int L = cfg.backbone_layers;
  const int m = tr.frames;
  const Slots slots = resolve(params.layout());
  const ParamView<T> p{params.data().data()};
  const GradView<T> g{grad.data()};

  const Mat<T> dfeatures = linear_backward(p, g, slots.classifier, tr.features, dlogits);

  switch (cfg.variant) {
    case Variant::kLastMlp:
      break;
    case Variant::kWaMlp: {
      const Mat<T> dmixed = group_spread(dfeatures, m);
      mix_layers_backward(tr.input, tr.layer_weights, dmixed, B, L, m, g.vec(slots.wa));
      break;
    }
    case Variant::kWaTr: {
      const Mat<T> dy = group_spread(dfeatures, m);
      const Mat<T> dx = block_backward(p, g, *slots.temporal, cfg.attn_heads, tr.temporal, dy);
      if (slots.pos_time != nullptr) accumulate_positions(g.mat(slots.pos_time), dx);
      const Mat<T> dmixed = slots.proj ? linear_backward(p, g, *slots.proj, tr.mixed, dx) : dx;
      mix_layers_backward(tr.input, tr.layer_weights, dmixed, B, L, m, g.vec(slots.wa));
      break;
    }
    case Variant::kTlTr: {
      const Mat<T> dz = group_spread(dfeatures, L);
      const Mat<T> dtokens = block_backward(p, g, *slots.layer, cfg.attn_heads, tr.layer, dz);
      if (slots.pos_layer != nullptr) accumulate_positions(g.mat(slots.pos_layer), dtokens);
      const Mat<T> dy = group_spread(dtokens, m);
      const Mat<T> dx = block_backward(p, g, *slots.temporal, cfg.attn_heads, tr.temporal, dy);
      if (slots.pos_time != nullptr) accumulate_positions(g.mat(slots.pos_time), dx);
      if (slots.proj) {
        g.mat(slots.proj->w).noalias() += tr.input.transpose() * dx;
        g.vec(slots.proj->b) += dx.colwise().sum();
      }
      break;
    }
  }
}

template Mat<float> forward(const HeadParams<float>&, std::span<const RepresentationStack* const>,
                            ForwardTrace<float>*);
template Mat<double> forward(const HeadParams<double>&, std::span<const RepresentationStack* const>,
                             ForwardTrace<double>*);
template void backward(const HeadParams<float>&, const ForwardTrace<float>&, const Mat<float>&,
                       std::span<float>);
template void backward(const HeadParams<double>&, const ForwardTrace<double>&, const Mat<double>&,
                       std::span<double>);

// ---------------------------------------------------------------------------

namespace {

std::vector<float> forward_single(const RepresentationStack& stack, const HeadParams<float>& params,
                                  Variant expected) {
  if (params.config().variant != expected) {
    throw InvalidInput("parameters are for head variant " +
                       std::string(to_string(params.config().variant)) + ", not " +
                       std::string(to_string(expected)));
  }
  const RepresentationStack* ptr = &stack;
  const MatF logits = forward<float>(params, std::span(&ptr, 1));
  return {logits.data(), logits.data() + logits.size()};
}

}  // namespace

std::vector<float> forward_last_mlp(const RepresentationStack& stack, const HeadParams<float>& params) {
  return forward_single(stack, params, Variant::kLastMlp);
}

std::vector<float> forward_wa_mlp(const RepresentationStack& stack, const HeadParams<float>& params) {
  return forward_single(stack, params, Variant::kWaMlp);
}

std::vector<float> forward_wa_tr(const RepresentationStack& stack, const HeadParams<float>& params) {
  return forward_single(stack, params, Variant::kWaTr);
}

std::vector<float> forward_tl_tr(const RepresentationStack& stack, const HeadParams<float>& params) {
  return forward_single(stack, params, Variant::kTlTr);
}

std::vector<float> forward_logits(const RepresentationStack& stack, const HeadParams<float>& params) {
  return forward_single(stack, params, params.config().variant);
}

std::vector<float> sigmoid(std::span<const float> logits) {
  std::vector<float> out(logits.size());
  std::transform(logits.begin(), logits.end(), out.begin(), [](float z) {
    return static_cast<float>(1.0 / (1.0 + std::exp(-static_cast<double>(z))));
  });
  return out;
}

TaggingResult make_tagging_result(std::span<const float> logits,
                                  std::span<const std::string> class_names, int top_k) {
  if (!class_names.empty() && class_names.size() != logits.size()) {
    throw InvalidInput("class name count " + std::to_string(class_names.size()) +
                       " does not match " + std::to_string(logits.size()) + " scores");
  }
  TaggingResult result;
  result.scores = sigmoid(logits);
  std::vector<int> order(logits.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return result.scores[a] > result.scores[b]; });
  const int k = std::clamp(top_k, 0, static_cast<int>(order.size()));
  for (int i = 0; i < k; ++i) {
    const int idx = order[i];
    result.top_k.push_back({class_names.empty() ? std::to_string(idx) : class_names[idx], idx,
                            result.scores[idx]});
  }
  return result;
}

nlohmann::json to_json(const TaggingResult& result, bool include_all_scores) {
  nlohmann::json j;
  j["top_k"] = nlohmann::json::array();
  for (const auto& c : result.top_k) {
    j["top_k"].push_back({{"class", c.name}, {"index", c.index}, {"score", c.score}});
  }
  if (include_all_scores) j["scores"] = result.scores;
  if (result.transcript) j["transcript"] = *result.transcript;
  return j;
}

// ---------------------------------------------------------------------------

namespace {
constexpr char kCheckpointMagic[4] = {'W', 'A', 'T', 'H'};
}

void save_checkpoint(const std::string& path, const HeadParams<float>& params,
                     const nlohmann::json& meta) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw InvalidInput("cannot open checkpoint for writing: " + path);
  io::BinaryWriter w(os);
  w.bytes(kCheckpointMagic, 4);
  w.u32(kCheckpointVersion);
  const nlohmann::json header = {{"format_version", kCheckpointVersion},
                                 {"head_config", to_json(params.config())},
                                 {"meta", meta}};
  w.str(header.dump());
  const auto tensors = params.layout().tensors();
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& spec : tensors) {
    w.str(spec.name);
    w.u32(static_cast<std::uint32_t>(spec.shape.size()));
    for (std::size_t dim : spec.shape) w.u64(dim);
    w.array(params.data().subspan(spec.offset, spec.size));
  }
  if (!os) throw Error("failed writing checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw NotFound("head checkpoint not found: " + path);
  io::BinaryReader r(is, "head checkpoint " + path);
  char magic[4];
  r.bytes(magic, 4);
  if (!std::equal(magic, magic + 4, kCheckpointMagic)) {
    throw FormatError(path + " is not a head checkpoint");
  }
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint " + path + " has format version " + std::to_string(version) +
                      ", expected " + std::to_string(kCheckpointVersion));
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(r.str());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("checkpoint " + path + " has a corrupt header: " + e.what());
  }
  HeadParams<float> params(head_config_from_json(header.at("head_config")));
  const std::uint32_t count = r.u32();
  const auto tensors = params.layout().tensors();
  if (count != tensors.size()) {
    throw FormatError("checkpoint " + path + " holds " + std::to_string(count) +
                      " tensors, its head config needs " + std::to_string(tensors.size()));
  }
  for (const auto& spec : tensors) {
    const std::string name = r.str();
    if (name != spec.name) {
      throw FormatError("checkpoint " + path + ": expected tensor '" + spec.name + "', found '" +
                        name + "'");
    }
    const std::uint32_t rank = r.u32();
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = r.u64();
    if (shape != spec.shape) throw FormatError("checkpoint " + path + ": bad shape for " + name);
    r.array(params.data().subspan(spec.offset, spec.size));
  }
  return {std::move(params), header.value("meta", nlohmann::json::object())};
}

}  // namespace layertag::heads
