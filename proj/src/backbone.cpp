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

#include "layertag/backbone.hpp"

#include <cmath>
#include <cstdlib>

#include "layertag/error.hpp"
#include "layertag/whisper.hpp"

namespace layertag {
namespace fs = std::filesystem;

namespace {

constexpr const char* kSyntheticPrefix = "synthetic-";

std::string known_list() {
  std::string s;
  for (const auto& k : known_backbones()) s += (s.empty() ? "" : ", ") + k.id;
  return s + " (or synthetic-<id>, or a path to a .watm file)";
}

const KnownBackbone* find_known(const std::string& id) {
  for (const auto& k : known_backbones()) {
    if (k.id == id) return &k;
  }
  return nullptr;
}

// Whisper emits a leading space before the first word.
std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\n\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\n\r");
  return s.substr(b, e - b + 1);
}

bool is_model_path(const std::string& id) { return id.size() > 5 && id.substr(id.size() - 5) == ".watm"; }

}  // namespace

const std::vector<KnownBackbone>& known_backbones() {
  static const std::vector<KnownBackbone> list = {
      {"tiny", 4, 384, 6},     {"base", 6, 512, 8},     {"small", 12, 768, 12},
      {"medium", 24, 1024, 16}, {"large", 32, 1280, 20}, {"toy", 2, 32, 2},
  };
  return list;
}

fs::path resolve_weights_dir(const BackboneOptions& options) {
  if (!options.weights_dir.empty()) return options.weights_dir;
  if (const char* env = std::getenv("LAYERTAG_WEIGHTS_DIR"); env != nullptr && *env != '\0') return env;
  return "weights";
}

std::shared_ptr<const Backbone> Backbone::load(const std::string& model_id, const BackboneOptions& options) {
  std::shared_ptr<const whisper::Model> model;
  if (model_id.rfind(kSyntheticPrefix, 0) == 0) {
    const KnownBackbone* k = find_known(model_id.substr(std::string(kSyntheticPrefix).size()));
    if (k == nullptr) throw ConfigError("unknown backbone '" + model_id + "'; known: " + known_list());
    whisper::Dims dims;
    dims.n_audio_state = dims.n_text_state = k->dim;
    dims.n_audio_head = dims.n_text_head = k->heads;
    dims.n_audio_layer = dims.n_text_layer = k->layers;
    model = whisper::Model::synthetic(model_id, dims, options.synthetic_seed);
  } else if (is_model_path(model_id)) {
    model = whisper::Model::load(model_id);
  } else {
    if (find_known(model_id) == nullptr) {
      throw ConfigError("unknown backbone '" + model_id + "'; known: " + known_list());
    }
    model = whisper::Model::load(resolve_weights_dir(options) / (model_id + ".watm"));
  }
  const auto& d = model->dims();
  BackboneInfo info{model->header().model_id,
                    d.n_audio_layer,
                    d.n_audio_state,
                    static_cast<double>(d.n_audio_ctx) / whisper::kChunkSeconds,
                    static_cast<double>(whisper::kChunkSeconds),
                    whisper::kSampleRate};
  return std::make_shared<Backbone>(std::move(info), std::move(model));
}

BackboneInfo load_backbone(const std::string& model_id, const BackboneOptions& options) {
  return Backbone::load(model_id, options)->info();
}

Backbone::Backbone(BackboneInfo info, std::shared_ptr<const whisper::Model> model)
    : info_(std::move(info)), model_(std::move(model)) {}

int Backbone::frames_for(const audio::Waveform& wave) const {
  if (wave.samples.empty()) throw InvalidInput("empty audio");
  if (wave.sample_rate != info_.sample_rate) {
    throw InvalidInput("audio is sampled at " + std::to_string(wave.sample_rate) + " Hz; resample to " +
                       std::to_string(info_.sample_rate) + " Hz first");
  }
  const double duration = wave.duration();
  if (duration > info_.max_context_seconds) {
    throw InvalidInput("audio lasts " + std::to_string(duration) + " s, beyond the " +
                       std::to_string(static_cast<int>(info_.max_context_seconds)) +
                       " s context; split it into segments first");
  }
  for (float s : wave.samples) {
    if (!std::isfinite(s)) throw InvalidInput("audio contains non-finite samples");
  }
  const auto n = static_cast<int>(std::lround(duration * info_.frame_rate));
  return std::clamp(n, 1, model_->dims().n_audio_ctx);
}

Backbone::Analysis Backbone::analyze(const audio::Waveform& wave, bool with_transcript,
                                     const std::string& utterance_id) const {
  const int frames = frames_for(wave);
  const MatF mel = whisper::log_mel_spectrogram(wave.samples, model_->dims().n_mels);
  auto enc = model_->encode(mel, frames);
  Analysis out;
  out.stack = RepresentationStack(utterance_id, info_.num_layers, frames, info_.hidden_dim, info_.frame_rate);
  for (int l = 0; l < info_.num_layers; ++l) out.stack.layer(l) = enc.layers[l];
  enc.layers.clear();
  if (with_transcript) out.transcript = trim(model_->detokenize(model_->greedy_decode(enc.final_full)));
  return out;
}

RepresentationStack Backbone::extract_representations(const audio::Waveform& wave,
                                                      const std::string& utterance_id) const {
  return analyze(wave, false, utterance_id).stack;
}

std::string Backbone::transcribe(const audio::Waveform& wave) const {
  frames_for(wave);
  const MatF mel = whisper::log_mel_spectrogram(wave.samples, model_->dims().n_mels);
  return trim(model_->detokenize(model_->greedy_decode(model_->encode(mel, 1).final_full)));
}

long Backbone::encoder_calls() const { return model_->encoder_calls(); }

std::uint64_t Backbone::weights_checksum() const { return model_->weights().checksum(); }

}  // namespace layertag
