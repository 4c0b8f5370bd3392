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

#include "layertag/whisper.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>

#include "binary_io.hpp"
#include "layertag/error.hpp"

namespace layertag::whisper {
namespace fs = std::filesystem;

namespace {

constexpr char kMagic[4] = {'W', 'A', 'T', 'M'};
constexpr float kLayerNormEps = 1e-5F;
// Synthetic weights are kept in memory below this many elements and
// regenerated per access above it.
constexpr std::size_t kSyntheticCacheLimit = 100'000'000;

constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = kFnvOffset) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= kFnvPrime;
  }
  return h;
}

std::size_t element_count(const std::vector<std::int64_t>& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

std::string shape_string(const std::vector<std::int64_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? ", " : "") + std::to_string(shape[i]);
  return s + "]";
}

// ---------------------------------------------------------------- weights

class FileWeights final : public WeightSource {
 public:
  struct Stored {
    std::vector<std::int64_t> shape;
    std::uint8_t dtype = 0;
    std::vector<float> f32;
    std::vector<std::uint16_t> f16;
  };

  void add(std::string name, Stored t) {
    order_.push_back(name);
    tensors_.emplace(std::move(name), std::move(t));
  }

  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }

  Weight get(const std::string& name) const override {
    const Stored& t = find(name);
    if (t.dtype == 0) return Weight(t.f32.data(), t.shape);
    std::vector<float> out(t.f16.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = static_cast<float>(Eigen::numext::bit_cast<Eigen::half>(t.f16[i]));
    }
    return Weight(std::move(out), t.shape);
  }

  std::vector<std::string> names() const override { return order_; }
  std::vector<std::int64_t> shape(const std::string& name) const override { return find(name).shape; }

  std::uint64_t checksum() const override {
    std::uint64_t h = kFnvOffset;
    for (const auto& name : order_) {
      const Stored& t = tensors_.at(name);
      h = fnv1a(name.data(), name.size(), h);
      h = t.dtype == 0 ? fnv1a(t.f32.data(), t.f32.size() * 4, h) : fnv1a(t.f16.data(), t.f16.size() * 2, h);
    }
    return h;
  }

 private:
  const Stored& find(const std::string& name) const {
    const auto it = tensors_.find(name);
    if (it == tensors_.end()) throw LoadError("model has no tensor '" + name + "'");
    return it->second;
  }

  std::vector<std::string> order_;
  std::unordered_map<std::string, Stored> tensors_;
};

class SyntheticWeights final : public WeightSource {
 public:
  SyntheticWeights(const Dims& dims, std::uint64_t seed) : seed_(seed) {
    for (auto& [name, shape] : expected_tensors(dims)) {
      order_.push_back(name);
      total_ += element_count(shape);
      shapes_.emplace(name, std::move(shape));
    }
  }

  Weight get(const std::string& name) const override {
    const auto dims = shape(name);
    if (total_ > kSyntheticCacheLimit) return Weight(generate(name, dims), dims);
    std::lock_guard lock(mutex_);
    auto it = cache_.find(name);
    if (it == cache_.end()) it = cache_.emplace(name, generate(name, dims)).first;
    return Weight(it->second.data(), dims);
  }

  std::vector<std::string> names() const override { return order_; }

  std::vector<std::int64_t> shape(const std::string& name) const override {
    const auto it = shapes_.find(name);
    if (it == shapes_.end()) throw LoadError("model has no tensor '" + name + "'");
    return it->second;
  }

  std::uint64_t checksum() const override {
    std::uint64_t h = kFnvOffset;
    for (const auto& name : order_) {
      const Weight w = get(name);
      h = fnv1a(name.data(), name.size(), h);
      h = fnv1a(w.data(), w.size() * 4, h);
    }
    return h;
  }

 private:
  std::vector<float> generate(const std::string& name, const std::vector<std::int64_t>& shape) const {
    std::vector<float> v(element_count(shape));
    auto ends_with = [&](std::string_view suffix) {
      return name.size() >= suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
    };
    if (ends_with("layer_norm.weight")) {
      std::fill(v.begin(), v.end(), 1.0F);
      return v;
    }
    if (ends_with("layer_norm.bias")) return v;
    if (name == "encoder.embed_positions.weight") {
      const auto len = shape[0];
      const auto d = shape[1];
      const double inc = std::log(10000.0) / static_cast<double>(d / 2 - 1);
      for (std::int64_t t = 0; t < len; ++t) {
        for (std::int64_t i = 0; i < d / 2; ++i) {
          const double a = static_cast<double>(t) * std::exp(-inc * static_cast<double>(i));
          v[t * d + i] = static_cast<float>(std::sin(a));
          v[t * d + d / 2 + i] = static_cast<float>(std::cos(a));
        }
      }
      return v;
    }
    std::mt19937_64 rng(seed_ ^ fnv1a(name.data(), name.size()));
    double stddev = 0.02;
    if (shape.size() >= 2 && name.find("embed") == std::string::npos) {
      stddev = 1.0 / std::sqrt(static_cast<double>(element_count(shape) / shape[0]));
    }
    std::normal_distribution<float> normal(0.0F, static_cast<float>(stddev));
    for (float& x : v) x = normal(rng);
    return v;
  }

  std::uint64_t seed_;
  std::size_t total_ = 0;
  std::vector<std::string> order_;
  std::unordered_map<std::string, std::vector<std::int64_t>> shapes_;
  mutable std::mutex mutex_;
  mutable std::unordered_map<std::string, std::vector<float>> cache_;
};

// ---------------------------------------------------------------- math

MatF linear(const MatF& x, const Weight& w, const Weight* b) {
  MatF y = x * w.matrix().transpose();
  if (b != nullptr) y.rowwise() += b->vector();
  return y;
}

MatF layer_norm(const MatF& x, const Weight& g, const Weight& b) {
  MatF y(x.rows(), x.cols());
  const auto gv = g.vector();
  const auto bv = b.vector();
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const auto row = x.row(r);
    const float mean = row.mean();
    const float var = (row.array() - mean).square().mean();
    const float inv = 1.0F / std::sqrt(var + kLayerNormEps);
    y.row(r) = ((row.array() - mean) * inv * gv.array() + bv.array()).matrix();
  }
  return y;
}

void gelu_inplace(MatF& x) {
  const float inv_sqrt2 = static_cast<float>(1.0 / std::numbers::sqrt2);
  x = x.unaryExpr([inv_sqrt2](float v) { return 0.5F * v * (1.0F + std::erf(v * inv_sqrt2)); });
}

// Multi-head scaled dot-product attention. Query row i sits at absolute
// position q_offset + i; with causal set it sees keys up to that position.
MatF attention(const MatF& q, const MatF& k, const MatF& v, int n_head, bool causal, Eigen::Index q_offset) {
  const Eigen::Index d = q.cols();
  const Eigen::Index hd = d / n_head;
  const float scale = 1.0F / std::sqrt(static_cast<float>(hd));
  MatF out(q.rows(), d);
  for (int h = 0; h < n_head; ++h) {
    MatF s = (q.middleCols(h * hd, hd) * scale) * k.middleCols(h * hd, hd).transpose();
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
      auto row = s.row(i);
      Eigen::Index visible = s.cols();
      if (causal) visible = std::min<Eigen::Index>(s.cols(), q_offset + i + 1);
      const float mx = row.head(visible).maxCoeff();
      row.head(visible) = (row.head(visible).array() - mx).exp().matrix();
      row.head(visible) /= row.head(visible).sum();
      if (visible < s.cols()) row.tail(s.cols() - visible).setZero();
    }
    out.middleCols(h * hd, hd) = s * v.middleCols(h * hd, hd);
  }
  return out;
}

// Conv1d with kernel 3, padding 1 over a time-major input (T x C_in).
MatF conv3(const MatF& x, const Weight& w, const Weight& b, int stride) {
  const Eigen::Index t_in = x.rows();
  const Eigen::Index c_in = x.cols();
  const Eigen::Index t_out = (t_in + 2 - 3) / stride + 1;
  MatF col = MatF::Zero(t_out, c_in * 3);
  for (Eigen::Index t = 0; t < t_out; ++t) {
    for (int k = 0; k < 3; ++k) {
      const Eigen::Index src = t * stride + k - 1;
      if (src < 0 || src >= t_in) continue;
      for (Eigen::Index c = 0; c < c_in; ++c) col(t, c * 3 + k) = x(src, c);
    }
  }
  const Eigen::Map<const MatF> wm(w.data(), w.shape()[0], c_in * 3);
  MatF y = col * wm.transpose();
  y.rowwise() += b.vector();
  return y;
}

std::string layer_prefix(const char* stack, int i) { return std::string(stack) + ".layers." + std::to_string(i) + "."; }

struct AttnWeights {
  Weight q, qb, k, v, vb, o, ob;
};

AttnWeights attn_weights(const WeightSource& ws, const std::string& p) {
  return {ws.get(p + "q_proj.weight"), ws.get(p + "q_proj.bias"), ws.get(p + "k_proj.weight"),
          ws.get(p + "v_proj.weight"), ws.get(p + "v_proj.bias"), ws.get(p + "out_proj.weight"),
          ws.get(p + "out_proj.bias")};
}

MatF mlp(const WeightSource& ws, const std::string& p, const MatF& h) {
  const Weight b1 = ws.get(p + "fc1.bias");
  MatF z = linear(h, ws.get(p + "fc1.weight"), &b1);
  gelu_inplace(z);
  const Weight b2 = ws.get(p + "fc2.bias");
  return linear(z, ws.get(p + "fc2.weight"), &b2);
}

// ---------------------------------------------------------------- byte-level BPE

const std::vector<int>& byte_to_codepoint() {
  static const std::vector<int> table = [] {
    std::vector<int> t(256, -1);
    for (int b = '!'; b <= '~'; ++b) t[b] = b;
    for (int b = 0xA1; b <= 0xAC; ++b) t[b] = b;
    for (int b = 0xAE; b <= 0xFF; ++b) t[b] = b;
    int next = 0;
    for (int b = 0; b < 256; ++b) {
      if (t[b] < 0) t[b] = 256 + next++;
    }
    return t;
  }();
  return table;
}

void append_utf8(std::string& out, int cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

}  // namespace

// ---------------------------------------------------------------- dims / tokens

void Dims::validate() const {
  const int fields[] = {n_mels, n_audio_ctx, n_audio_state, n_audio_head, n_audio_layer,
                        n_text_ctx, n_text_state, n_text_head, n_text_layer, n_vocab};
  for (int f : fields) {
    if (f <= 0) throw LoadError("model dimensions must be positive");
  }
  if (n_audio_state % n_audio_head != 0 || n_text_state % n_text_head != 0) {
    throw LoadError("model width is not divisible by its head count");
  }
  if (n_audio_ctx * 2 != kMelFrames) throw LoadError("audio context must be 1500 frames for 30 s windows");
}

nlohmann::json to_json(const Dims& d) {
  return {{"n_mels", d.n_mels},           {"n_audio_ctx", d.n_audio_ctx},   {"n_audio_state", d.n_audio_state},
          {"n_audio_head", d.n_audio_head}, {"n_audio_layer", d.n_audio_layer}, {"n_text_ctx", d.n_text_ctx},
          {"n_text_state", d.n_text_state}, {"n_text_head", d.n_text_head},   {"n_text_layer", d.n_text_layer},
          {"n_vocab", d.n_vocab}};
}

Dims dims_from_json(const nlohmann::json& j) {
  Dims d;
  d.n_mels = j.at("n_mels").get<int>();
  d.n_audio_ctx = j.at("n_audio_ctx").get<int>();
  d.n_audio_state = j.at("n_audio_state").get<int>();
  d.n_audio_head = j.at("n_audio_head").get<int>();
  d.n_audio_layer = j.at("n_audio_layer").get<int>();
  d.n_text_ctx = j.at("n_text_ctx").get<int>();
  d.n_text_state = j.at("n_text_state").get<int>();
  d.n_text_head = j.at("n_text_head").get<int>();
  d.n_text_layer = j.at("n_text_layer").get<int>();
  d.n_vocab = j.at("n_vocab").get<int>();
  return d;
}

nlohmann::json to_json(const TokenSpec& t) {
  return {{"eot", t.eot},
          {"sot", t.sot},
          {"prompt", t.prompt},
          {"suppress", t.suppress},
          {"begin_suppress", t.begin_suppress},
          {"first_special", t.first_special}};
}

TokenSpec token_spec_from_json(const nlohmann::json& j) {
  TokenSpec t;
  t.eot = j.at("eot").get<int>();
  t.sot = j.at("sot").get<int>();
  t.prompt = j.at("prompt").get<std::vector<int>>();
  t.suppress = j.value("suppress", std::vector<int>{});
  t.begin_suppress = j.value("begin_suppress", std::vector<int>{});
  t.first_special = j.value("first_special", t.eot);
  return t;
}

// ---------------------------------------------------------------- front end

MatF mel_filters(int n_mels, int n_fft, int sample_rate) {
  const int n_freq = n_fft / 2 + 1;
  auto hz_to_mel = [](double f) {
    constexpr double f_sp = 200.0 / 3.0;
    constexpr double min_log_hz = 1000.0;
    const double min_log_mel = min_log_hz / f_sp;
    const double logstep = std::log(6.4) / 27.0;
    return f >= min_log_hz ? min_log_mel + std::log(f / min_log_hz) / logstep : f / f_sp;
  };
  auto mel_to_hz = [](double m) {
    constexpr double f_sp = 200.0 / 3.0;
    constexpr double min_log_hz = 1000.0;
    const double min_log_mel = min_log_hz / f_sp;
    const double logstep = std::log(6.4) / 27.0;
    return m >= min_log_mel ? min_log_hz * std::exp(logstep * (m - min_log_mel)) : f_sp * m;
  };
  const double mel_lo = hz_to_mel(0.0);
  const double mel_hi = hz_to_mel(8000.0);
  std::vector<double> hz(n_mels + 2);
  for (int i = 0; i < n_mels + 2; ++i) hz[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (n_mels + 1));
  MatF f = MatF::Zero(n_mels, n_freq);
  for (int m = 0; m < n_mels; ++m) {
    const double enorm = 2.0 / (hz[m + 2] - hz[m]);
    for (int k = 0; k < n_freq; ++k) {
      const double freq = static_cast<double>(k) * (sample_rate / 2.0) / (n_freq - 1);
      const double lower = (freq - hz[m]) / (hz[m + 1] - hz[m]);
      const double upper = (hz[m + 2] - freq) / (hz[m + 2] - hz[m + 1]);
      f(m, k) = static_cast<float>(std::max(0.0, std::min(lower, upper)) * enorm);
    }
  }
  return f;
}

MatF log_mel_spectrogram(const std::vector<float>& samples, int n_mels) {
  if (samples.size() > static_cast<std::size_t>(kChunkSamples)) {
    throw InvalidInput("audio longer than the 30 s window; segment it first");
  }
  constexpr int pad = kFftSize / 2;
  constexpr int n_freq = kFftSize / 2 + 1;
  constexpr int n_frames = kChunkSamples / kHopLength + 1;
  // Zero-pad to 30 s, then reflect-pad by n_fft/2 on both sides.
  std::vector<double> padded(kChunkSamples + 2 * pad, 0.0);
  for (std::size_t i = 0; i < samples.size(); ++i) padded[pad + i] = samples[i];
  for (int i = 0; i < pad; ++i) {
    padded[pad - 1 - i] = padded[pad + 1 + i];
    padded[pad + kChunkSamples + i] = padded[pad + kChunkSamples - 2 - i];
  }
  std::vector<double> window(kFftSize);
  for (int i = 0; i < kFftSize; ++i) window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / kFftSize);

  static std::mutex plan_mutex;
  static fftw_plan plan = nullptr;
  std::vector<double> frame(kFftSize);
  std::vector<fftw_complex> spectrum(n_freq);
  {
    std::lock_guard lock(plan_mutex);
    if (plan == nullptr) {
      plan = fftw_plan_dft_r2c_1d(kFftSize, frame.data(), spectrum.data(), FFTW_ESTIMATE | FFTW_UNALIGNED);
    }
  }
  Mat<double> power(n_freq, n_frames);
  for (int t = 0; t < n_frames; ++t) {
    for (int i = 0; i < kFftSize; ++i) frame[i] = padded[t * kHopLength + i] * window[i];
    fftw_execute_dft_r2c(plan, frame.data(), spectrum.data());
    for (int k = 0; k < n_freq; ++k) power(k, t) = spectrum[k][0] * spectrum[k][0] + spectrum[k][1] * spectrum[k][1];
  }
  const Mat<double> mel = mel_filters(n_mels).cast<double>() * power.leftCols(n_frames - 1);
  Mat<double> logmel = mel.unaryExpr([](double v) { return std::log10(std::max(v, 1e-10)); });
  const double floor = logmel.maxCoeff() - 8.0;
  logmel = logmel.unaryExpr([floor](double v) { return (std::max(v, floor) + 4.0) / 4.0; });
  return logmel.cast<float>();
}

// ---------------------------------------------------------------- Weight

Weight::Weight(const float* data, std::vector<std::int64_t> shape) : data_(data), shape_(std::move(shape)) {}

Weight::Weight(std::vector<float> owned, std::vector<std::int64_t> shape)
    : owned_(std::move(owned)), data_(owned_.data()), shape_(std::move(shape)) {}

Weight::Weight(const Weight& other) : owned_(other.owned_), data_(other.data_), shape_(other.shape_) {
  if (!owned_.empty()) data_ = owned_.data();
}

Weight& Weight::operator=(const Weight& other) {
  if (this != &other) {
    owned_ = other.owned_;
    shape_ = other.shape_;
    data_ = owned_.empty() ? other.data_ : owned_.data();
  }
  return *this;
}

std::size_t Weight::size() const { return element_count(shape_); }

Eigen::Map<const MatF> Weight::matrix() const {
  const auto rows = static_cast<Eigen::Index>(shape_.at(0));
  return {data_, rows, static_cast<Eigen::Index>(size() / std::max<std::size_t>(1, rows))};
}

Eigen::Map<const RowVec<float>> Weight::vector() const { return {data_, static_cast<Eigen::Index>(size())}; }

std::vector<std::pair<std::string, std::vector<std::int64_t>>> expected_tensors(const Dims& d) {
  std::vector<std::pair<std::string, std::vector<std::int64_t>>> t;
  const std::int64_t a = d.n_audio_state;
  const std::int64_t x = d.n_text_state;
  t.push_back({"encoder.conv1.weight", {a, d.n_mels, 3}});
  t.push_back({"encoder.conv1.bias", {a}});
  t.push_back({"encoder.conv2.weight", {a, a, 3}});
  t.push_back({"encoder.conv2.bias", {a}});
  t.push_back({"encoder.embed_positions.weight", {d.n_audio_ctx, a}});
  auto attn = [&](const std::string& p, std::int64_t w) {
    t.push_back({p + "q_proj.weight", {w, w}});
    t.push_back({p + "q_proj.bias", {w}});
    t.push_back({p + "k_proj.weight", {w, w}});
    t.push_back({p + "v_proj.weight", {w, w}});
    t.push_back({p + "v_proj.bias", {w}});
    t.push_back({p + "out_proj.weight", {w, w}});
    t.push_back({p + "out_proj.bias", {w}});
  };
  auto norm = [&](const std::string& p, std::int64_t w) {
    t.push_back({p + ".weight", {w}});
    t.push_back({p + ".bias", {w}});
  };
  auto ffn = [&](const std::string& p, std::int64_t w) {
    t.push_back({p + "fc1.weight", {4 * w, w}});
    t.push_back({p + "fc1.bias", {4 * w}});
    t.push_back({p + "fc2.weight", {w, 4 * w}});
    t.push_back({p + "fc2.bias", {w}});
  };
  for (int i = 0; i < d.n_audio_layer; ++i) {
    const std::string p = layer_prefix("encoder", i);
    attn(p + "self_attn.", a);
    norm(p + "self_attn_layer_norm", a);
    ffn(p, a);
    norm(p + "final_layer_norm", a);
  }
  norm("encoder.layer_norm", a);
  t.push_back({"decoder.embed_tokens.weight", {d.n_vocab, x}});
  t.push_back({"decoder.embed_positions.weight", {d.n_text_ctx, x}});
  for (int i = 0; i < d.n_text_layer; ++i) {
    const std::string p = layer_prefix("decoder", i);
    attn(p + "self_attn.", x);
    norm(p + "self_attn_layer_norm", x);
    attn(p + "encoder_attn.", x);
    norm(p + "encoder_attn_layer_norm", x);
    ffn(p, x);
    norm(p + "final_layer_norm", x);
  }
  norm("decoder.layer_norm", x);
  return t;
}

// ---------------------------------------------------------------- Model

Model::Model(ModelHeader header, std::unique_ptr<WeightSource> weights)
    : header_(std::move(header)), weights_(std::move(weights)) {}

std::shared_ptr<const Model> Model::load(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw LoadError("model weights not found at " + path.string());
  try {
    io::BinaryReader r(is, "model file " + path.string());
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) throw LoadError(path.string() + " is not a model file");
    const std::uint32_t version = r.u32();
    if (version != kModelFormatVersion) {
      throw LoadError(path.string() + " has model format version " + std::to_string(version));
    }
    const auto header_json = nlohmann::json::parse(r.str());
    ModelHeader header;
    header.model_id = header_json.at("model_id").get<std::string>();
    header.dims = dims_from_json(header_json.at("dims"));
    header.dims.validate();
    header.tokens = token_spec_from_json(header_json.at("tokens"));
    header.vocab = header_json.at("vocab").get<std::vector<std::string>>();

    auto weights = std::make_unique<FileWeights>();
    const std::uint32_t count = r.u32();
    for (std::uint32_t i = 0; i < count; ++i) {
      std::string name = r.str(4096);
      const std::uint32_t rank = r.u32();
      if (rank == 0 || rank > 4) throw LoadError("tensor '" + name + "' has rank " + std::to_string(rank));
      FileWeights::Stored t;
      for (std::uint32_t k = 0; k < rank; ++k) t.shape.push_back(static_cast<std::int64_t>(r.u64()));
      t.dtype = r.u8();
      const std::size_t n = element_count(t.shape);
      if (t.dtype == 0) {
        t.f32.resize(n);
        r.array(std::span<float>(t.f32));
      } else if (t.dtype == 1) {
        t.f16.resize(n);
        r.array(std::span<std::uint16_t>(t.f16));
      } else {
        throw LoadError("tensor '" + name + "' has unknown dtype " + std::to_string(t.dtype));
      }
      weights->add(std::move(name), std::move(t));
    }
    for (const auto& [name, shape] : expected_tensors(header.dims)) {
      if (!weights->contains(name)) throw LoadError("missing tensor '" + name + "'");
      if (weights->shape(name) != shape) {
        throw LoadError("tensor '" + name + "' has shape " + shape_string(weights->shape(name)) + ", expected " +
                        shape_string(shape));
      }
    }
    return std::make_shared<Model>(std::move(header), std::move(weights));
  } catch (const LoadError& e) {
    if (std::string(e.what()).find(path.string()) != std::string::npos) throw;
    throw LoadError("corrupt model file " + path.string() + ": " + e.what());
  } catch (const std::exception& e) {
    throw LoadError("corrupt model file " + path.string() + ": " + e.what());
  }
}

std::shared_ptr<const Model> Model::synthetic(std::string model_id, Dims dims, std::uint64_t seed) {
  dims.n_vocab = 256 + 6;
  dims.validate();
  ModelHeader header;
  header.model_id = std::move(model_id);
  header.dims = dims;
  // 256 byte symbols, then endoftext, startoftranscript, en, transcribe,
  // translate, notimestamps.
  for (int b = 0; b < 256; ++b) {
    std::string s(1, static_cast<char>(b));
    header.vocab.push_back(bytes_to_bpe(s));
  }
  header.tokens.eot = 256;
  header.tokens.sot = 257;
  header.tokens.prompt = {257, 258, 259, 261};
  header.tokens.suppress = {257, 258, 259, 260, 261};
  header.tokens.begin_suppress = {256};
  header.tokens.first_special = 256;
  return std::make_shared<Model>(std::move(header), std::make_unique<SyntheticWeights>(dims, seed));
}

Model::EncoderOutput Model::encode(const MatF& mel, int keep_frames) const {
  const Dims& d = dims();
  if (mel.rows() != d.n_mels || mel.cols() != kMelFrames) {
    throw InvalidInput("encoder expects " + std::to_string(d.n_mels) + " x " + std::to_string(kMelFrames) +
                       " mel features");
  }
  if (keep_frames < 1 || keep_frames > d.n_audio_ctx) throw InvalidInput("keep_frames outside the audio context");
  ++encoder_calls_;
  const WeightSource& ws = *weights_;
  MatF h = conv3(mel.transpose(), ws.get("encoder.conv1.weight"), ws.get("encoder.conv1.bias"), 1);
  gelu_inplace(h);
  h = conv3(h, ws.get("encoder.conv2.weight"), ws.get("encoder.conv2.bias"), 2);
  gelu_inplace(h);
  h += ws.get("encoder.embed_positions.weight").matrix();

  EncoderOutput out;
  for (int i = 0; i < d.n_audio_layer; ++i) {
    const std::string p = layer_prefix("encoder", i);
    {
      const MatF x = layer_norm(h, ws.get(p + "self_attn_layer_norm.weight"), ws.get(p + "self_attn_layer_norm.bias"));
      const AttnWeights w = attn_weights(ws, p + "self_attn.");
      const MatF q = linear(x, w.q, &w.qb);
      const MatF k = linear(x, w.k, nullptr);
      const MatF v = linear(x, w.v, &w.vb);
      h += linear(attention(q, k, v, d.n_audio_head, false, 0), w.o, &w.ob);
    }
    h += mlp(ws, p, layer_norm(h, ws.get(p + "final_layer_norm.weight"), ws.get(p + "final_layer_norm.bias")));
    if (i + 1 < d.n_audio_layer) out.layers.push_back(h.topRows(keep_frames));
  }
  out.final_full = layer_norm(h, ws.get("encoder.layer_norm.weight"), ws.get("encoder.layer_norm.bias"));
  out.layers.push_back(out.final_full.topRows(keep_frames));
  return out;
}

std::vector<int> Model::greedy_decode(const MatF& encoder_final, int max_new_tokens) const {
  const Dims& d = dims();
  const TokenSpec& tk = header_.tokens;
  const WeightSource& ws = *weights_;
  const Weight embed = ws.get("decoder.embed_tokens.weight");
  const Weight positions = ws.get("decoder.embed_positions.weight");

  struct LayerCache {
    MatF cross_k, cross_v, self_k, self_v;
  };
  std::vector<LayerCache> cache(d.n_text_layer);
  for (int i = 0; i < d.n_text_layer; ++i) {
    const AttnWeights w = attn_weights(ws, layer_prefix("decoder", i) + "encoder_attn.");
    cache[i].cross_k = linear(encoder_final, w.k, nullptr);
    cache[i].cross_v = linear(encoder_final, w.v, &w.vb);
    cache[i].self_k.resize(0, d.n_text_state);
    cache[i].self_v.resize(0, d.n_text_state);
  }

  std::vector<int> tokens = tk.prompt;
  std::vector<int> fresh = tokens;
  std::vector<int> generated;
  const int limit = std::min<int>(max_new_tokens, d.n_text_ctx - static_cast<int>(tk.prompt.size()));
  for (int step = 0; step < limit; ++step) {
    const auto past = static_cast<Eigen::Index>(tokens.size() - fresh.size());
    MatF h(static_cast<Eigen::Index>(fresh.size()), d.n_text_state);
    for (std::size_t i = 0; i < fresh.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      h.row(r) = embed.matrix().row(fresh[i]) + positions.matrix().row(past + r);
    }
    for (int l = 0; l < d.n_text_layer; ++l) {
      const std::string p = layer_prefix("decoder", l);
      LayerCache& c = cache[l];
      {
        const MatF x = layer_norm(h, ws.get(p + "self_attn_layer_norm.weight"), ws.get(p + "self_attn_layer_norm.bias"));
        const AttnWeights w = attn_weights(ws, p + "self_attn.");
        const MatF q = linear(x, w.q, &w.qb);
        const MatF k = linear(x, w.k, nullptr);
        const MatF v = linear(x, w.v, &w.vb);
        MatF ks(c.self_k.rows() + k.rows(), k.cols());
        ks << c.self_k, k;
        MatF vs(c.self_v.rows() + v.rows(), v.cols());
        vs << c.self_v, v;
        c.self_k = std::move(ks);
        c.self_v = std::move(vs);
        h += linear(attention(q, c.self_k, c.self_v, d.n_text_head, true, past), w.o, &w.ob);
      }
      {
        const MatF x = layer_norm(h, ws.get(p + "encoder_attn_layer_norm.weight"),
                                  ws.get(p + "encoder_attn_layer_norm.bias"));
        const AttnWeights w = attn_weights(ws, p + "encoder_attn.");
        const MatF q = linear(x, w.q, &w.qb);
        h += linear(attention(q, c.cross_k, c.cross_v, d.n_text_head, false, 0), w.o, &w.ob);
      }
      h += mlp(ws, p, layer_norm(h, ws.get(p + "final_layer_norm.weight"), ws.get(p + "final_layer_norm.bias")));
    }
    const MatF last = layer_norm(h.bottomRows(1), ws.get("decoder.layer_norm.weight"), ws.get("decoder.layer_norm.bias"));
    RowVec<float> logits = last * embed.matrix().transpose();
    constexpr float kNeg = -std::numeric_limits<float>::infinity();
    for (int t : tk.suppress) {
      if (t >= 0 && t < logits.size()) logits[t] = kNeg;
    }
    if (step == 0) {
      for (int t : tk.begin_suppress) {
        if (t >= 0 && t < logits.size()) logits[t] = kNeg;
      }
    }
    Eigen::Index best = 0;
    logits.maxCoeff(&best);
    const int next = static_cast<int>(best);
    if (next == tk.eot) break;
    generated.push_back(next);
    tokens.push_back(next);
    fresh = {next};
  }
  return generated;
}

std::string Model::detokenize(const std::vector<int>& tokens) const {
  std::string bpe;
  for (int t : tokens) {
    if (t >= 0 && t < header_.tokens.first_special && t < static_cast<int>(header_.vocab.size())) {
      bpe += header_.vocab[t];
    }
  }
  return bpe_to_bytes(bpe);
}

void save_model(const fs::path& path, const ModelHeader& header,
                const std::vector<std::pair<std::string, Weight>>& tensors, bool as_f16) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot write " + path.string());
  io::BinaryWriter w(os);
  w.bytes(kMagic, 4);
  w.u32(kModelFormatVersion);
  const nlohmann::json j = {{"model_id", header.model_id},
                            {"dims", to_json(header.dims)},
                            {"tokens", to_json(header.tokens)},
                            {"vocab", header.vocab}};
  w.str(j.dump());
  w.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(t.shape().size()));
    for (auto dim : t.shape()) w.u64(static_cast<std::uint64_t>(dim));
    w.u8(as_f16 ? 1 : 0);
    if (as_f16) {
      std::vector<std::uint16_t> half(t.size());
      for (std::size_t i = 0; i < half.size(); ++i) {
        half[i] = Eigen::numext::bit_cast<std::uint16_t>(Eigen::half(t.data()[i]));
      }
      w.array(std::span<const std::uint16_t>(half));
    } else {
      w.array(std::span<const float>(t.data(), t.size()));
    }
  }
  if (!os) throw Error("write failed for " + path.string());
}

std::string bpe_to_bytes(const std::string& token) {
  static const std::unordered_map<int, unsigned char> inverse = [] {
    std::unordered_map<int, unsigned char> m;
    const auto& t = byte_to_codepoint();
    for (int b = 0; b < 256; ++b) m[t[b]] = static_cast<unsigned char>(b);
    return m;
  }();
  std::string out;
  for (std::size_t i = 0; i < token.size();) {
    const auto c = static_cast<unsigned char>(token[i]);
    int cp = 0;
    int len = 1;
    if (c < 0x80) {
      cp = c;
    } else if ((c & 0xE0) == 0xC0 && i + 1 < token.size()) {
      cp = ((c & 0x1F) << 6) | (token[i + 1] & 0x3F);
      len = 2;
    } else if ((c & 0xF0) == 0xE0 && i + 2 < token.size()) {
      cp = ((c & 0x0F) << 12) | ((token[i + 1] & 0x3F) << 6) | (token[i + 2] & 0x3F);
      len = 3;
    } else {
      cp = -1;
    }
    const auto it = inverse.find(cp);
    if (it != inverse.end()) out.push_back(static_cast<char>(it->second));
    i += len;
  }
  return out;
}

std::string bytes_to_bpe(const std::string& bytes) {
  std::string out;
  const auto& t = byte_to_codepoint();
  for (unsigned char b : bytes) append_utf8(out, t[b]);
  return out;
}

}  // namespace layertag::whisper
