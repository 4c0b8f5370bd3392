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

#include <filesystem>
#include <vector>

namespace layertag::audio {

struct Waveform {
  std::vector<float> samples;  // mono, nominally in [-1, 1]
  int sample_rate = 16000;

  double duration() const { return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0; }
};

// RIFF/WAVE with PCM 8/16/24/32-bit or IEEE float 32/64 samples, including
// WAVE_FORMAT_EXTENSIBLE. Multi-channel input is averaged down to mono.
Waveform read_wav(const std::filesystem::path& path);

// 16-bit PCM when pcm16, else 32-bit float. Samples are clamped for PCM.
void write_wav(const std::filesystem::path& path, const Waveform& wave, bool pcm16 = false);

// Band-limited resampling with a Kaiser-windowed sinc kernel. Identity when
// the rates already match.
Waveform resample(const Waveform& wave, int target_rate);

// read_wav followed by resample to target_rate.
Waveform load_audio(const std::filesystem::path& path, int target_rate);

// Mean squared amplitude.
double power(const std::vector<float>& samples);

}  // namespace layertag::audio
