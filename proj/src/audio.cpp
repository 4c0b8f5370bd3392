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

#include "layertag/audio.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <cstring>
#include <fstream>
#include <numeric>

#include "binary_io.hpp"
#include "layertag/error.hpp"

namespace layertag::audio {
namespace fs = std::filesystem;

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

// Half-width of the sinc kernel in input samples at the passband edge, and
// the Kaiser shape parameter (about 80 dB stopband).
constexpr int kZeroCrossings = 32;
constexpr double kKaiserBeta = 8.6;
constexpr double kRolloff = 0.95;

std::int32_t read_le(const unsigned char* p, int bytes) {
  std::uint32_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  // Sign-extend from the sample width.
  const int shift = 32 - 8 * bytes;
  return static_cast<std::int32_t>(v << shift) >> shift;
}

double bessel_i0(double x) {
  double sum = 1.0;
  double term = 1.0;
  for (int k = 1; k < 64; ++k) {
    term *= (x / (2.0 * k)) * (x / (2.0 * k));
    sum += term;
    if (term < 1e-17 * sum) break;
  }
  return sum;
}

}  // namespace

Waveform read_wav(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw NotFound("audio file not found: " + path.string());
  io::BinaryReader r(is, "WAV file " + path.string());
  char tag[4];
  r.bytes(tag, 4);
  if (std::memcmp(tag, "RIFF", 4) != 0) throw FormatError(path.string() + " is not a RIFF/WAVE file");
  r.u32();
  r.bytes(tag, 4);
  if (std::memcmp(tag, "WAVE", 4) != 0) throw FormatError(path.string() + " is not a RIFF/WAVE file");

  std::uint16_t format = 0;
  std::uint16_t channels = 0;
  std::uint32_t rate = 0;
  std::uint16_t bits = 0;
  bool have_fmt = false;
  std::vector<unsigned char> data;
  bool have_data = false;
  while (!have_data) {
    if (r.at_eof()) break;
    r.bytes(tag, 4);
    const std::uint32_t size = r.u32();
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      if (size < 16) throw FormatError("short fmt chunk in " + path.string());
      std::vector<unsigned char> fmt(size);
      r.bytes(fmt.data(), size);
      format = static_cast<std::uint16_t>(fmt[0] | fmt[1] << 8);
      channels = static_cast<std::uint16_t>(fmt[2] | fmt[3] << 8);
      std::memcpy(&rate, fmt.data() + 4, 4);
      bits = static_cast<std::uint16_t>(fmt[14] | fmt[15] << 8);
      if (format == kFormatExtensible) {
        if (size < 26) throw FormatError("short extensible fmt chunk in " + path.string());
        format = static_cast<std::uint16_t>(fmt[24] | fmt[25] << 8);
      }
      if (size & 1U) is.seekg(1, std::ios::cur);
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      if (!have_fmt) throw FormatError("data chunk before fmt chunk in " + path.string());
      data.resize(size);
      is.read(reinterpret_cast<char*>(data.data()), size);
      // Tolerate writers that leave the size field too large.
      data.resize(static_cast<std::size_t>(is.gcount()));
      have_data = true;
    } else {
      is.seekg(size + (size & 1U), std::ios::cur);
      if (!is) throw FormatError("truncated chunk in " + path.string());
    }
  }
  if (!have_fmt || !have_data) throw FormatError(path.string() + " has no fmt or data chunk");
  if (channels == 0 || rate == 0) throw FormatError(path.string() + " declares zero channels or rate");
  const bool pcm = format == kFormatPcm && (bits == 8 || bits == 16 || bits == 24 || bits == 32);
  const bool flt = format == kFormatFloat && (bits == 32 || bits == 64);
  if (!pcm && !flt) {
    throw FormatError(path.string() + ": unsupported WAV encoding (format " + std::to_string(format) + ", " +
                      std::to_string(bits) + " bits)");
  }
  const std::size_t width = bits / 8U;
  const std::size_t frames = data.size() / (width * channels);
  Waveform w;
  w.sample_rate = static_cast<int>(rate);
  w.samples.assign(frames, 0.0F);
  for (std::size_t f = 0; f < frames; ++f) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const unsigned char* p = data.data() + (f * channels + c) * width;
      double v = 0.0;
      if (flt && bits == 32) {
        float x;
        std::memcpy(&x, p, 4);
        v = x;
      } else if (flt) {
        std::memcpy(&v, p, 8);
      } else if (bits == 8) {
        v = (static_cast<int>(p[0]) - 128) / 128.0;
      } else {
        v = read_le(p, static_cast<int>(width)) / std::ldexp(1.0, bits - 1);
      }
      acc += v;
    }
    w.samples[f] = static_cast<float>(acc / channels);
  }
  return w;
}

void write_wav(const fs::path& path, const Waveform& wave, bool pcm16) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot write " + path.string());
  io::BinaryWriter w(os);
  const std::uint16_t bits = pcm16 ? 16 : 32;
  const auto data_bytes = static_cast<std::uint32_t>(wave.samples.size() * (bits / 8));
  w.bytes("RIFF", 4);
  w.u32(36 + data_bytes);
  w.bytes("WAVE", 4);
  w.bytes("fmt ", 4);
  w.u32(16);
  const std::uint16_t fmt_fields[] = {pcm16 ? kFormatPcm : kFormatFloat, 1};
  w.bytes(fmt_fields, 4);
  w.u32(static_cast<std::uint32_t>(wave.sample_rate));
  w.u32(static_cast<std::uint32_t>(wave.sample_rate) * (bits / 8));
  const std::uint16_t align_bits[] = {static_cast<std::uint16_t>(bits / 8), bits};
  w.bytes(align_bits, 4);
  w.bytes("data", 4);
  w.u32(data_bytes);
  if (pcm16) {
    std::vector<std::int16_t> pcm(wave.samples.size());
    for (std::size_t i = 0; i < pcm.size(); ++i) {
      // Same scale as the reader, so a round trip is off by at most half a step.
      const long q = std::lrint(static_cast<double>(wave.samples[i]) * 32768.0);
      pcm[i] = static_cast<std::int16_t>(std::clamp(q, -32768L, 32767L));
    }
    w.array(std::span<const std::int16_t>(pcm));
  } else {
    w.array(std::span<const float>(wave.samples));
  }
  if (!os) throw Error("write failed for " + path.string());
}

Waveform resample(const Waveform& wave, int target_rate) {
  if (target_rate <= 0 || wave.sample_rate <= 0) throw InvalidInput("sample rates must be positive");
  if (target_rate == wave.sample_rate) return wave;
  const long g = std::gcd(static_cast<long>(wave.sample_rate), static_cast<long>(target_rate));
  const long up = target_rate / g;
  const long down = wave.sample_rate / g;
  // Cutoff relative to the input Nyquist rate.
  const double cutoff = kRolloff * std::min(1.0, static_cast<double>(up) / static_cast<double>(down));
  const double half_width = kZeroCrossings / cutoff;
  const long taps = static_cast<long>(std::ceil(half_width));
  const double i0_beta = bessel_i0(kKaiserBeta);

  // One kernel per output phase: output n sits at input position n*down/up,
  // whose fractional part takes `up` distinct values.
  std::vector<std::vector<double>> kernels(static_cast<std::size_t>(up));
  for (long phase = 0; phase < up; ++phase) {
    const double frac = static_cast<double>(phase) / static_cast<double>(up);
    auto& k = kernels[phase];
    k.resize(static_cast<std::size_t>(2 * taps + 1));
    for (long j = -taps; j <= taps; ++j) {
      const double x = static_cast<double>(j) - frac;
      const double r = x / half_width;
      double v = 0.0;
      if (std::abs(r) <= 1.0) {
        const double arg = std::numbers::pi * cutoff * x;
        const double sinc = x == 0.0 ? 1.0 : std::sin(arg) / arg;
        v = cutoff * sinc * bessel_i0(kKaiserBeta * std::sqrt(1.0 - r * r)) / i0_beta;
      }
      k[static_cast<std::size_t>(j + taps)] = v;
    }
  }

  const auto n_in = static_cast<long>(wave.samples.size());
  const long n_out = (n_in * up + down - 1) / down;
  Waveform out;
  out.sample_rate = target_rate;
  out.samples.resize(static_cast<std::size_t>(n_out));
  for (long n = 0; n < n_out; ++n) {
    const long base = (n * down) / up;
    const long phase = (n * down) % up;
    const auto& k = kernels[phase];
    double acc = 0.0;
    const long lo = std::max(0L, base - taps);
    const long hi = std::min(n_in - 1, base + taps);
    for (long i = lo; i <= hi; ++i) acc += wave.samples[i] * k[static_cast<std::size_t>(i - base + taps)];
    out.samples[n] = static_cast<float>(acc);
  }
  return out;
}

Waveform load_audio(const fs::path& path, int target_rate) { return resample(read_wav(path), target_rate); }

double power(const std::vector<float>& samples) {
  if (samples.empty()) return 0.0;
  double acc = 0.0;
  for (float s : samples) acc += static_cast<double>(s) * s;
  return acc / static_cast<double>(samples.size());
}

}  // namespace layertag::audio
