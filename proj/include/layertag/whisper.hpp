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

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "layertag/representation.hpp"

namespace layertag::whisper {

inline constexpr int kSampleRate = 16000;
inline constexpr int kFftSize = 400;
inline constexpr int kHopLength = 160;
inline constexpr int kChunkSeconds = 30;
inline constexpr int kChunkSamples = kSampleRate * kChunkSeconds;
inline constexpr int kMelFrames = kChunkSamples / kHopLength;

struct Dims {
  int n_mels = 80;
  int n_audio_ctx = 1500;
  int n_audio_state = 0;
  int n_audio_head = 0;
  int n_audio_layer = 0;
  int n_text_ctx = 448;
  int n_text_state = 0;
  int n_text_head = 0;
  int n_text_layer = 0;
  int n_vocab = 0;

  void validate() const;
  bool operator==(const Dims&) const = default;
};

nlohmann::json to_json(const Dims& dims);
Dims dims_from_json(const nlohmann::json& j);

// Special tokens and decoding policy.
struct TokenSpec {
  int eot = 0;
  int sot = 0;
  std::vector<int> prompt;          // forced decoder prefix, starts with sot
  std::vector<int> suppress;        // never emitted
  std::vector<int> begin_suppress;  // not emitted as the first generated token
  // Ordinary text tokens are ids below this; everything above is special.
  int first_special = 0;
};

nlohmann::json to_json(const TokenSpec& tokens);
TokenSpec token_spec_from_json(const nlohmann::json& j);

// Log-mel features exactly as the reference front end computes them: audio
// zero-padded to 30 s, 400-point periodic-Hann STFT with reflect-padded
// centring, hop 160, Slaney mel filters up to 8 kHz, log10 with a floor of
// max - 8, then (x + 4) / 4. Returns n_mels x 3000.
MatF log_mel_spectrogram(const std::vector<float>& samples, int n_mels);

// Slaney-normalised triangular filters, n_mels x (n_fft/2 + 1).
MatF mel_filters(int n_mels, int n_fft = kFftSize, int sample_rate = kSampleRate);

// A dense tensor handed out by a weight source; either borrowed from the
// source's storage or owned.
class Weight {
 public:
  Weight() = default;
  Weight(const float* data, std::vector<std::int64_t> shape);
  Weight(std::vector<float> owned, std::vector<std::int64_t> shape);
  Weight(const Weight& other);
  Weight& operator=(const Weight& other);
  Weight(Weight&&) noexcept = default;
  Weight& operator=(Weight&&) noexcept = default;

  const std::vector<std::int64_t>& shape() const { return shape_; }
  std::size_t size() const;
  const float* data() const { return data_; }
  // rows x cols view, rows = shape[0].
  Eigen::Map<const MatF> matrix() const;
  Eigen::Map<const RowVec<float>> vector() const;

 private:
  std::vector<float> owned_;
  const float* data_ = nullptr;
  std::vector<std::int64_t> shape_;
};

// Named tensors using the Hugging Face Whisper state-dict names without the
// leading "model." (e.g. "encoder.layers.3.fc1.weight").
class WeightSource {
 public:
  virtual ~WeightSource() = default;
  virtual Weight get(const std::string& name) const = 0;
  virtual std::vector<std::string> names() const = 0;
  virtual std::vector<std::int64_t> shape(const std::string& name) const = 0;
  // FNV-1a 64 over every tensor's name and stored bytes.
  virtual std::uint64_t checksum() const = 0;
};

// Expected tensor names and shapes for dims.
std::vector<std::pair<std::string, std::vector<std::int64_t>>> expected_tensors(const Dims& dims);

// Model file: "WATM" | u32 version | u32 header length | JSON header | u32
// tensor count | per tensor: u32 name length, name, u32 rank, u64 dims,
// u8 dtype (0 f32, 1 f16), data. The header carries model_id, dims, tokens
// and the text vocabulary as byte-level BPE strings.
inline constexpr std::uint32_t kModelFormatVersion = 1;

struct ModelHeader {
  std::string model_id;
  Dims dims;
  TokenSpec tokens;
  std::vector<std::string> vocab;
};

class Model {
 public:
  // Reads a model file. Missing files throw LoadError naming the path;
  // corrupt ones throw LoadError with the reason.
  static std::shared_ptr<const Model> load(const std::filesystem::path& path);
  // Deterministic random weights for dims with a 256-symbol byte vocabulary.
  static std::shared_ptr<const Model> synthetic(std::string model_id, Dims dims, std::uint64_t seed);

  const ModelHeader& header() const { return header_; }
  const Dims& dims() const { return header_.dims; }
  const WeightSource& weights() const { return *weights_; }

  // Encoder pass over one 30 s mel window. Returns the L block outputs (the
  // last one after the final LayerNorm), each trimmed to keep_frames rows,
  // plus the full-length final output that feeds the decoder.
  struct EncoderOutput {
    std::vector<MatF> layers;
    MatF final_full;
  };
  EncoderOutput encode(const MatF& mel, int keep_frames) const;

  // Greedy decoding from the forced prompt.
  std::vector<int> greedy_decode(const MatF& encoder_final, int max_new_tokens = 224) const;
  std::string detokenize(const std::vector<int>& tokens) const;

  // Number of encode() calls on this instance.
  long encoder_calls() const { return encoder_calls_.load(); }

  Model(ModelHeader header, std::unique_ptr<WeightSource> weights);

 private:
  ModelHeader header_;
  std::unique_ptr<WeightSource> weights_;
  mutable std::atomic<long> encoder_calls_{0};
};

// Writes a model file from named f32 tensors; used by tests and tooling.
void save_model(const std::filesystem::path& path, const ModelHeader& header,
                const std::vector<std::pair<std::string, Weight>>& tensors, bool as_f16 = false);

// GPT-2 byte-to-unicode table inverse: maps a byte-level BPE string to bytes.
std::string bpe_to_bytes(const std::string& token);
std::string bytes_to_bpe(const std::string& bytes);

}  // namespace layertag::whisper
