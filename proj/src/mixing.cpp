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

#include <cmath>
#include <random>

#include "layertag/analysis.hpp"
#include "layertag/error.hpp"

namespace layertag::analysis {

std::vector<float> fit_noise(const std::vector<float>& noise, std::size_t length, std::uint64_t seed) {
  if (noise.empty()) throw InvalidInput("noise clip is empty");
  std::mt19937_64 rng(seed);
  const std::size_t n = noise.size();
  // Cropping picks a window that fits; looping may start anywhere.
  const std::size_t span = n >= length ? n - length : n - 1;
  const std::size_t offset = std::uniform_int_distribution<std::size_t>(0, span)(rng);
  std::vector<float> out(length);
  for (std::size_t i = 0; i < length; ++i) out[i] = noise[(offset + i) % n];
  return out;
}

double noise_gain(double speech_power, double noise_power, double snr_db) {
  return std::sqrt(speech_power / (noise_power * std::pow(10.0, snr_db / 10.0)));
}

audio::Waveform mix_at_snr(const audio::Waveform& speech, const audio::Waveform& noise, double snr_db,
                           std::uint64_t seed) {
  if (std::isnan(snr_db) || snr_db == -kClean) throw InvalidInput("snr_db must be finite or the clean sentinel");
  if (speech.samples.empty()) throw InvalidInput("speech clip is empty");
  if (is_clean(snr_db)) return speech;
  if (noise.sample_rate != speech.sample_rate) {
    throw InvalidInput("speech and noise sample rates differ (" + std::to_string(speech.sample_rate) + " vs " +
                       std::to_string(noise.sample_rate) + " Hz)");
  }
  const double ps = audio::power(speech.samples);
  if (!(ps > 0.0)) throw InvalidInput("speech has zero power; SNR is undefined");
  const std::vector<float> fitted = fit_noise(noise.samples, speech.samples.size(), seed);
  const double pn = audio::power(fitted);
  if (!(pn > 0.0)) throw InvalidInput("noise has zero power; cannot reach " + std::to_string(snr_db) + " dB");
  const double gain = noise_gain(ps, pn, snr_db);
  audio::Waveform out = speech;
  for (std::size_t i = 0; i < out.samples.size(); ++i) {
    out.samples[i] = static_cast<float>(speech.samples[i] + gain * fitted[i]);
  }
  return out;
}

double measured_snr_db(const std::vector<float>& speech, const std::vector<float>& noise) {
  return 10.0 * std::log10(audio::power(speech) / audio::power(noise));
}

}  // namespace layertag::analysis
