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

#include <algorithm>
#include <numeric>
#include <random>

#include "layertag/analysis.hpp"
#include "layertag/backbone.hpp"
#include "layertag/error.hpp"

namespace layertag::analysis {

std::string BackboneTranscriber::transcribe(const audio::Waveform& wave) const { return backbone_.transcribe(wave); }

SweepResult snr_sweep(const std::vector<SpeechClip>& speech, const std::vector<NoiseClip>& noise,
                      const std::vector<double>& snr_list, const Transcriber& transcriber,
                      const SweepOptions& options) {
  if (speech.empty()) throw InvalidInput("SNR sweep needs at least one speech clip");
  if (snr_list.empty()) throw InvalidInput("SNR sweep needs at least one SNR");
  if (options.noise_per_speech < 0) throw ConfigError("noise_per_speech must be >= 0");
  const bool any_noisy = std::any_of(snr_list.begin(), snr_list.end(), [](double s) { return !is_clean(s); });
  if (any_noisy && noise.empty()) throw InvalidInput("SNR sweep needs noise clips for finite SNRs");

  // Pairings are drawn once so every SNR sees the same noise and offsets.
  struct Pair {
    std::size_t speech;
    std::size_t noise;
    std::uint64_t seed;
  };
  std::vector<Pair> pairs;
  std::mt19937_64 rng(options.seed);
  std::vector<std::size_t> pool(noise.size());
  std::iota(pool.begin(), pool.end(), 0);
  const std::size_t per =
      options.noise_per_speech == 0 ? pool.size() : std::min<std::size_t>(options.noise_per_speech, pool.size());
  for (std::size_t s = 0; s < speech.size(); ++s) {
    if (noise.empty()) {
      pairs.push_back({s, 0, 0});
      continue;
    }
    std::vector<std::size_t> chosen = pool;
    if (per < pool.size()) {
      std::shuffle(chosen.begin(), chosen.end(), rng);
      chosen.resize(per);
    }
    for (std::size_t k : chosen) pairs.push_back({s, k, rng()});
  }

  SweepResult result;
  result.snr_list = snr_list;
  result.options = options;
  std::map<std::string, std::vector<std::pair<double, int>>> class_acc;
  std::map<std::size_t, std::string> clean_cache;
  for (std::size_t si = 0; si < snr_list.size(); ++si) {
    const double snr = snr_list[si];
    double total = 0.0;
    for (const auto& p : pairs) {
      const SpeechClip& sp = speech[p.speech];
      SweepRecord rec;
      rec.mix = {sp.id, noise.empty() ? "" : noise[p.noise].id, snr, p.seed};
      rec.sound_class = noise.empty() ? "" : noise[p.noise].sound_class;
      if (is_clean(snr)) {
        auto it = clean_cache.find(p.speech);
        if (it == clean_cache.end()) it = clean_cache.emplace(p.speech, transcriber.transcribe(sp.wave)).first;
        rec.hypothesis = it->second;
      } else {
        rec.hypothesis = transcriber.transcribe(mix_at_snr(sp.wave, noise[p.noise].wave, snr, p.seed));
      }
      rec.wer = wer(sp.reference, rec.hypothesis);
      total += rec.wer;
      if (!rec.sound_class.empty()) {
        auto& acc = class_acc[rec.sound_class];
        acc.resize(snr_list.size());
        acc[si].first += rec.wer;
        acc[si].second += 1;
      }
      result.records.push_back(std::move(rec));
    }
    result.mean_wer.push_back(total / static_cast<double>(pairs.size()));
  }
  for (const auto& [cls, acc] : class_acc) {
    auto& out = result.class_wer[cls];
    for (const auto& [sum, count] : acc) out.push_back(sum / count);
  }
  return result;
}

namespace {

nlohmann::json snr_json(double snr) { return is_clean(snr) ? nlohmann::json("clean") : nlohmann::json(snr); }

}  // namespace

nlohmann::json to_json(const SweepResult& result) {
  nlohmann::json table = nlohmann::json::array();
  for (std::size_t i = 0; i < result.snr_list.size(); ++i) {
    table.push_back({{"snr_db", snr_json(result.snr_list[i])}, {"mean_wer", result.mean_wer[i]}});
  }
  nlohmann::json classes = nlohmann::json::object();
  for (const auto& [cls, v] : result.class_wer) classes[cls] = v;
  nlohmann::json records = nlohmann::json::array();
  for (const auto& r : result.records) {
    records.push_back({{"speech_id", r.mix.speech_id},
                       {"noise_id", r.mix.noise_id},
                       {"sound_class", r.sound_class},
                       {"snr_db", snr_json(r.mix.snr_db)},
                       {"seed", r.mix.seed},
                       {"hypothesis", r.hypothesis},
                       {"wer", r.wer}});
  }
  return {{"table", table},
          {"class_wer", classes},
          {"records", records},
          {"noise_per_speech", result.options.noise_per_speech},
          {"seed", result.options.seed},
          {"power_convention", "mean square over the full clip"},
          {"normalizer", kNormalizerVersion}};
}

}  // namespace layertag::analysis
