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
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "layertag/audio.hpp"
#include "layertag/representation.hpp"

namespace layertag {

namespace whisper {
class Model;
}

struct BackboneInfo {
  std::string model_id;
  int num_layers = 0;
  int hidden_dim = 0;
  double frame_rate = 0.0;
  double max_context_seconds = 0.0;
  int sample_rate = 0;

  bool operator==(const BackboneInfo&) const = default;
};

struct BackboneOptions {
  // Where <id>.watm files live. Empty: $LAYERTAG_WEIGHTS_DIR, else ./weights.
  std::filesystem::path weights_dir;
  std::uint64_t synthetic_seed = 0;
};

struct KnownBackbone {
  std::string id;
  int layers;
  int dim;
  int heads;
};

// Encoder family sizes. Each id resolves to <weights_dir>/<id>.watm;
// "synthetic-<id>" builds seeded random weights of that size instead. A path
// ending in .watm is also accepted.
const std::vector<KnownBackbone>& known_backbones();
std::filesystem::path resolve_weights_dir(const BackboneOptions& options);

class Backbone {
 public:
  // Unknown ids throw ConfigError listing the known ones; missing or corrupt
  // weights throw LoadError naming the path.
  static std::shared_ptr<const Backbone> load(const std::string& model_id, const BackboneOptions& options = {});

  const BackboneInfo& info() const { return info_; }
  const whisper::Model& model() const { return *model_; }

  // Stack of all L block outputs, trimmed to round(duration * frame_rate)
  // frames. Audio must be mono at info().sample_rate, non-empty and no longer
  // than the context window.
  RepresentationStack extract_representations(const audio::Waveform& wave, const std::string& utterance_id = "") const;
  std::string transcribe(const audio::Waveform& wave) const;

  struct Analysis {
    RepresentationStack stack;
    std::optional<std::string> transcript;
  };
  // Representations and, optionally, the transcript from a single encoder pass.
  Analysis analyze(const audio::Waveform& wave, bool with_transcript, const std::string& utterance_id = "") const;

  long encoder_calls() const;
  // FNV-1a over all weights; stable while the backbone stays frozen.
  std::uint64_t weights_checksum() const;

  Backbone(BackboneInfo info, std::shared_ptr<const whisper::Model> model);

 private:
  int frames_for(const audio::Waveform& wave) const;

  BackboneInfo info_;
  std::shared_ptr<const whisper::Model> model_;
};

BackboneInfo load_backbone(const std::string& model_id, const BackboneOptions& options = {});

}  // namespace layertag
