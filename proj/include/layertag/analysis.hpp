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
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "layertag/audio.hpp"
#include "layertag/cache.hpp"
#include "layertag/manifest.hpp"

namespace layertag {
class Backbone;
}

namespace layertag::analysis {

// ---- mixing

// snr_db value meaning "no noise at all".
inline constexpr double kClean = std::numeric_limits<double>::infinity();
inline bool is_clean(double snr_db) { return snr_db == kClean; }

struct MixSpec {
  std::string speech_id;
  std::string noise_id;
  double snr_db = kClean;
  std::uint64_t seed = 0;
};

// Noise looped or cropped to length samples, starting at a seeded offset.
std::vector<float> fit_noise(const std::vector<float>& noise, std::size_t length, std::uint64_t seed);

// Noise gain giving the requested SNR for the given mean powers.
double noise_gain(double speech_power, double noise_power, double snr_db);

// speech + gain * fit_noise(noise). Powers are taken over the full clip
// (after fitting the noise); no clipping or renormalisation.
audio::Waveform mix_at_snr(const audio::Waveform& speech, const audio::Waveform& noise, double snr_db,
                           std::uint64_t seed);

// 10 log10(P_speech / P_noise) of two components.
double measured_snr_db(const std::vector<float>& speech, const std::vector<float>& noise);

// ---- word error rate

// Lowercase (ASCII), punctuation replaced by spaces, whitespace collapsed.
// Apostrophes inside words are kept ("don't").
inline constexpr const char* kNormalizerVersion = "basic-v1";
std::string normalize_text(const std::string& text);
std::vector<std::string> words(const std::string& normalized);

struct EditCounts {
  int substitutions = 0;
  int deletions = 0;
  int insertions = 0;
  int reference_length = 0;

  int errors() const { return substitutions + deletions + insertions; }
};

// Minimum-edit alignment of token sequences.
EditCounts align(const std::vector<std::string>& reference, const std::vector<std::string>& hypothesis);

// Normalises both strings; an empty normalised reference throws InvalidInput.
double wer(const std::string& reference, const std::string& hypothesis);

// ---- SNR sweep

class Transcriber {
 public:
  virtual ~Transcriber() = default;
  virtual std::string transcribe(const audio::Waveform& wave) const = 0;
};

class BackboneTranscriber : public Transcriber {
 public:
  explicit BackboneTranscriber(const Backbone& backbone) : backbone_(backbone) {}
  std::string transcribe(const audio::Waveform& wave) const override;

 private:
  const Backbone& backbone_;
};

struct SpeechClip {
  std::string id;
  audio::Waveform wave;
  std::string reference;
};

struct NoiseClip {
  std::string id;
  audio::Waveform wave;
  std::string sound_class;
};

struct SweepOptions {
  // Noise clips paired with each speech clip; 0 pairs every noise clip.
  int noise_per_speech = 1;
  std::uint64_t seed = 0;
};

struct SweepRecord {
  MixSpec mix;
  std::string sound_class;
  std::string hypothesis;
  double wer = 0.0;
};

struct SweepResult {
  std::vector<double> snr_list;
  std::vector<double> mean_wer;  // per snr
  // sound class -> mean WER per snr
  std::map<std::string, std::vector<double>> class_wer;
  std::vector<SweepRecord> records;
  SweepOptions options;
};

// Every speech clip is mixed with the same sampled noise clips at every SNR,
// transcribed and scored. Clean entries skip the noise entirely.
SweepResult snr_sweep(const std::vector<SpeechClip>& speech, const std::vector<NoiseClip>& noise,
                      const std::vector<double>& snr_list, const Transcriber& transcriber,
                      const SweepOptions& options = {});

nlohmann::json to_json(const SweepResult& result);

// ---- layer probing

struct ProbeConfig {
  int epochs = 100;
  int batch_size = 64;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  // z-score each feature with training-set statistics.
  bool standardize = true;
  // Layers probed concurrently; 0 uses the hardware concurrency.
  int threads = 0;

  void validate() const;
};

nlohmann::json to_json(const ProbeConfig& config);

struct ProbeResult {
  int layer_index = 0;
  double accuracy = 0.0;
  std::vector<double> per_class_F1;
};

// Temporal-mean-pools each layer of every cached clip and trains a softmax
// linear classifier per layer. Entries must carry exactly one label.
// Held-out data: the eval split if any entry has one; otherwise folds are
// cross-validated and predictions pooled.
std::vector<ProbeResult> probe_layers(const CacheStore& store, const std::vector<training::ManifestEntry>& entries,
                                      int num_classes, int num_layers, const ProbeConfig& config = {});

nlohmann::json to_json(const ProbeResult& result);

// Best layer per class by F1 (ties to the lower layer), counted per layer.
// probe_results must cover layers 0..L-1 with equal class counts.
std::vector<int> best_layer_histogram(const std::vector<ProbeResult>& probe_results);

// ---- robustness vs recognisability

struct RobustnessPoint {
  std::string sound_class;
  double wer_increase = 0.0;  // WER(noisy) - WER(clean reference SNR)
  double f1 = 0.0;
};

struct RobustnessReport {
  std::vector<RobustnessPoint> points;
  // Spearman correlation between -wer_increase and F1; nullopt when either
  // side is constant.
  std::optional<double> spearman;
};

// Maps are keyed by class name and must cover the same classes.
RobustnessReport robustness_vs_recognizability(const std::map<std::string, double>& wer_reference_snr,
                                               const std::map<std::string, double>& wer_noisy_snr,
                                               const std::map<std::string, double>& f1);

// From a sweep containing both SNRs and the last-layer probe.
RobustnessReport robustness_vs_recognizability(const SweepResult& sweep, double reference_snr, double noisy_snr,
                                               const ProbeResult& last_layer,
                                               const training::ClassMap& classes);

// Spearman rank correlation with average ranks for ties.
std::optional<double> spearman(const std::vector<double>& x, const std::vector<double>& y);

nlohmann::json to_json(const RobustnessReport& report);

}  // namespace layertag::analysis
