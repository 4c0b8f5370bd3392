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

// Acceptance checks. Prints one PASS/FAIL line per criterion; with a
// criterion number as argument only that one runs. Exit status is nonzero
// when any selected criterion fails.
//
// Criteria 7 and 8 need converted large-backbone weights
// ($LAYERTAG_WEIGHTS_DIR/large.watm) and the ESC-50 release
// ($LAYERTAG_ESC50_DIR with meta/esc50.csv and audio/). Extracted
// representations go to $LAYERTAG_ACCEPTANCE_CACHE (default ./esc50_cache).

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include "layertag/analysis.hpp"
#include "layertag/backbone.hpp"
#include "layertag/cost.hpp"
#include "layertag/heads.hpp"
#include "layertag/metrics.hpp"
#include "layertag/training.hpp"
#include "support/fixtures.hpp"
#include "support/synthetic.hpp"
#include "support/temp_dir.hpp"

using namespace layertag;
using heads::HeadConfig;
using heads::Variant;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

std::string num(double v, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << v;
  return s.str();
}

HeadConfig table2_head(int d) {
  HeadConfig c;
  c.variant = Variant::kTlTr;
  if (d != c.backbone_dim) c.proj_dim = d;
  return c;
}

// ---- 1
Outcome cost_conformance() {
  const int dims[] = {128, 256, 512, 768, 1280};
  const double gmacs[] = {0.31, 0.94, 3.17, 6.72, 16.42};
  const double mparams[] = {0.6, 2.1, 7.2, 15.6, 40.0};
  std::ostringstream d;
  bool ok = true;
  for (int i = 0; i < 5; ++i) {
    const auto c = table2_head(dims[i]);
    const double g = static_cast<double>(cost::count_macs(c).total) / 1e9;
    const double m = static_cast<double>(cost::count_params(c).total) / 1e6;
    const double rel = std::abs(g - gmacs[i]) / gmacs[i];
    const bool row = rel <= 0.03 && std::abs(m - mparams[i]) <= 0.1;
    ok = ok && row;
    d << dims[i] << ":" << num(g) << "G/" << num(m, 3) << "M ";
  }
  const double s = cost::speedup(cost::cost_report(table2_head(512)), cost::kReferenceTaggerMacs);
  ok = ok && std::lround(s) == 42;
  d << "speedup(512)=" << num(s, 3) << "x";
  return {ok, d.str()};
}

// ---- 2
Outcome instantiation_law() {
  const Variant variants[] = {Variant::kLastMlp, Variant::kWaMlp, Variant::kWaTr, Variant::kTlTr};
  int checked = 0, bad = 0;
  for (Variant v : variants) {
    for (int d : {128, 256, 512, 768, 1280}) {
      HeadConfig c = table2_head(d);
      c.variant = v;
      const heads::HeadParams<float> p(c);
      ++checked;
      if (static_cast<std::int64_t>(p.size()) != cost::count_params(c).total) ++bad;
    }
  }
  return {bad == 0, std::to_string(checked - bad) + "/" + std::to_string(checked) + " configs match"};
}

// ---- 3
Outcome gradient_checks() {
  std::ostringstream d;
  bool ok = true;
  for (Variant v : {Variant::kLastMlp, Variant::kWaMlp, Variant::kWaTr, Variant::kTlTr}) {
    HeadConfig c;
    c.variant = v;
    c.num_classes = 4;
    c.backbone_layers = 2;
    c.pool_target = 3;
    c.backbone_dim = c.uses_transformer() ? 10 : 8;
    if (c.uses_transformer()) c.proj_dim = 8;
    c.attn_heads = 2;
    const auto r = fixtures::gradient_check(c, 7, 6, 1e-3);
    ok = ok && r.failures == 0;
    d << heads::to_string(v) << ": " << r.checked << " elems, rel " << num(r.max_rel_error, 2) << ", abs "
      << num(r.max_abs_diff, 2) << "; ";
  }
  return {ok, d.str()};
}

// ---- 4
double brute_ap(const std::vector<float>& s, const std::vector<float>& y) {
  double sum = 0;
  int pos = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] < 0.5f) continue;
    ++pos;
    int rank = 0, hits = 0;
    for (std::size_t j = 0; j < s.size(); ++j) {
      const bool ahead = s[j] > s[i] || (s[j] == s[i] && j <= i);
      if (!ahead) continue;
      ++rank;
      hits += y[j] > 0.5f;
    }
    sum += static_cast<double>(hits) / rank;
  }
  return sum / pos;
}

int edit_distance(const std::vector<int>& a, std::size_t i, const std::vector<int>& b, std::size_t j) {
  if (i == a.size()) return static_cast<int>(b.size() - j);
  if (j == b.size()) return static_cast<int>(a.size() - i);
  if (a[i] == b[j]) return edit_distance(a, i + 1, b, j + 1);
  return 1 + std::min({edit_distance(a, i + 1, b, j + 1), edit_distance(a, i + 1, b, j), edit_distance(a, i, b, j + 1)});
}

Outcome metric_oracles() {
  std::mt19937_64 rng(2024);
  int ap_bad = 0, ap_cases = 0;
  while (ap_cases < 1000) {
    const int n = 1 + static_cast<int>(rng() % 8);
    std::vector<float> s(n), y(n);
    for (int i = 0; i < n; ++i) {
      s[i] = static_cast<float>(rng() % 5) / 4.0f;  // coarse grid: many ties
      y[i] = static_cast<float>(rng() % 2);
    }
    const auto ap = training::average_precision(s, y);
    const bool any = std::count(y.begin(), y.end(), 1.0f) > 0;
    ++ap_cases;
    if (any != ap.has_value() || (any && std::abs(*ap - brute_ap(s, y)) > 1e-12)) ++ap_bad;
  }
  // Every pair of sequences of length <= 5 over {a, b, c}.
  std::vector<std::vector<int>> seqs{{}};
  for (std::size_t start = 0; start < seqs.size(); ++start) {
    if (seqs[start].size() == 5) continue;
    for (int t = 0; t < 3; ++t) {
      auto e = seqs[start];
      e.push_back(t);
      seqs.push_back(e);
    }
  }
  const char* names[] = {"a", "b", "c"};
  auto text = [&](const std::vector<int>& v) {
    std::string s;
    for (int t : v) s += std::string(s.empty() ? "" : " ") + names[t];
    return s;
  };
  long wer_cases = 0, wer_bad = 0;
  for (const auto& r : seqs) {
    if (r.empty()) continue;
    for (const auto& h : seqs) {
      ++wer_cases;
      const double expected = static_cast<double>(edit_distance(r, 0, h, 0)) / r.size();
      if (std::abs(analysis::wer(text(r), text(h)) - expected) > 1e-12) ++wer_bad;
    }
  }
  return {ap_bad == 0 && wer_bad == 0, "AP " + std::to_string(ap_cases - ap_bad) + "/" + std::to_string(ap_cases) +
                                           ", WER " + std::to_string(wer_cases - wer_bad) + "/" +
                                           std::to_string(wer_cases)};
}

// ---- 5
Outcome mixing_law() {
  std::mt19937_64 rng(5);
  std::normal_distribution<float> g(0.0f, 1.0f);
  std::uniform_real_distribution<double> snr(-20.0, 30.0);
  double worst = 0;
  auto residual = [](const audio::Waveform& mix, const audio::Waveform& speech) {
    std::vector<float> r(mix.samples.size());
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = mix.samples[i] - speech.samples[i];
    return r;
  };
  for (int t = 0; t < 100; ++t) {
    audio::Waveform s, n;
    s.samples.resize(1000 + rng() % 30000);
    n.samples.resize(500 + rng() % 30000);
    const float ss = 0.01f + static_cast<float>(rng() % 100) / 50.0f, ns = 0.01f + static_cast<float>(rng() % 100) / 50.0f;
    for (auto& v : s.samples) v = ss * g(rng);
    for (auto& v : n.samples) v = ns * g(rng);
    const double want = snr(rng);
    const auto mix = analysis::mix_at_snr(s, n, want, rng());
    worst = std::max(worst, std::abs(analysis::measured_snr_db(s.samples, residual(mix, s)) - want));
  }
  audio::Waveform s, n;
  s.samples.assign(800, 0.5f);
  n.samples.assign(800, -0.5f);
  const bool clean = analysis::mix_at_snr(s, n, analysis::kClean, 1).samples == s.samples;
  const bool unit = analysis::noise_gain(0.25, 0.25, 0.0) == 1.0 &&
                    std::abs(analysis::measured_snr_db(s.samples, residual(analysis::mix_at_snr(s, n, 0.0, 1), s))) < 1e-9;
  return {worst <= 0.1 && clean && unit, "max |measured - requested| = " + num(worst, 3) + " dB over 100 pairs; clean " +
                                             (clean ? "ok" : "bad") + ", 0 dB unit gain " + (unit ? "ok" : "bad")};
}

// ---- 6
Outcome overfit() {
  fixtures::TempDir dir("layertag_accept");
  CacheStore store(dir / "cache", CacheStore::Info{"synthetic", 50.0, DType::kF32});
  synthetic::TaggingSetSpec spec;  // 32 clips, multi-label
  const auto entries = synthetic::make_tagging_set(store, spec);
  HeadConfig head;
  head.variant = Variant::kTlTr;
  head.num_classes = spec.classes;
  head.backbone_layers = spec.layers;
  head.backbone_dim = spec.dim;
  head.proj_dim = 64;
  head.pool_target = 25;
  training::TrainConfig c;
  c.batch_size = 8;
  c.lr = 1e-3;
  c.epochs = 1000;
  c.max_steps = 300;
  const auto r = training::train_head(head, c, store, entries);
  const double map = training::evaluate(r.params, store, entries).mAP;
  return {map >= 0.95 && r.steps.size() <= 300,
          "training mAP " + num(map) + " after " + std::to_string(r.steps.size()) + " steps"};
}

// ---- 7, 8
struct Esc50 {
  std::shared_ptr<const Backbone> backbone;
  std::unique_ptr<CacheStore> store;
  training::Esc50Dataset data;
};

std::optional<std::string> esc50_unavailable() {
  const char* weights = std::getenv("LAYERTAG_WEIGHTS_DIR");
  const char* esc = std::getenv("LAYERTAG_ESC50_DIR");
  if (!weights || !fs::exists(fs::path(weights) / "large.watm")) {
    return "needs converted large-backbone weights at $LAYERTAG_WEIGHTS_DIR/large.watm (not available here)";
  }
  if (!esc || !fs::exists(fs::path(esc) / "meta" / "esc50.csv")) {
    return "needs the ESC-50 release at $LAYERTAG_ESC50_DIR (meta/esc50.csv, audio/); not available here";
  }
  return std::nullopt;
}

Esc50& esc50() {
  static Esc50 e = [] {
    Esc50 out;
    const fs::path root = std::getenv("LAYERTAG_ESC50_DIR");
    const char* cache = std::getenv("LAYERTAG_ACCEPTANCE_CACHE");
    out.data = training::convert_esc50(root / "meta" / "esc50.csv", root / "audio");
    out.backbone = Backbone::load("large");
    out.store = std::make_unique<CacheStore>(cache ? cache : "esc50_cache", CacheStore::Info{"large", 50.0, DType::kF16});
    int done = 0;
    for (const auto& entry : out.data.entries) {
      if (!out.store->contains(entry.utterance_id)) {
        const auto wave = audio::load_audio(entry.audio_path, out.backbone->info().sample_rate);
        out.store->write(out.backbone->extract_representations(wave, entry.utterance_id));
      }
      if (++done % 100 == 0) std::cerr << "esc50: " << done << "/" << out.data.entries.size() << " cached\n";
    }
    return out;
  }();
  return e;
}

Outcome esc50_accuracy() {
  if (const auto why = esc50_unavailable()) return {false, *why};
  auto& e = esc50();
  HeadConfig head = table2_head(512);
  head.num_classes = e.data.classes.size();
  training::TrainConfig c;
  c.lr = 5e-4;
  c.epochs = 30;
  c.batch_size = 48;
  c.loss = training::LossKind::kBceOnehot;
  const auto r = training::crossval_esc50(head, c, *e.store, e.data.entries);
  return {r.accuracy >= 0.85, "pooled 5-fold accuracy " + num(r.accuracy)};
}

Outcome probe_depth() {
  if (const auto why = esc50_unavailable()) return {false, *why};
  auto& e = esc50();
  const auto results = analysis::probe_layers(*e.store, e.data.entries, e.data.classes.size(),
                                              e.backbone->info().num_layers);
  double best = 0;
  for (const auto& r : results) best = std::max(best, r.accuracy);
  const double last = results.back().accuracy;
  return {best - last <= 0.15, "best layer " + num(best) + ", final layer " + num(last)};
}

// ---- 9
Outcome single_pass() {
  const auto b = Backbone::load("synthetic-toy");
  audio::Waveform w;
  std::mt19937 rng(3);
  std::normal_distribution<float> g(0.0f, 0.1f);
  w.samples.resize(32000);
  for (auto& s : w.samples) s = g(rng);
  const long before = b->encoder_calls();
  const auto a = b->analyze(w, true, "clip");
  const long passes = b->encoder_calls() - before;

  fixtures::TempDir dir("layertag_accept");
  CacheStore store(dir / "cache", CacheStore::Info{"synthetic-toy"});
  std::vector<training::ManifestEntry> entries;
  for (int i = 0; i < 4; ++i) {
    auto s = b->extract_representations(w, "c" + std::to_string(i));
    store.write(s);
    entries.push_back({"c" + std::to_string(i), "", 2.0, {i % 2}, training::Split::kTrain, std::nullopt});
  }
  const auto before_sum = b->weights_checksum();
  HeadConfig head;
  head.variant = Variant::kTlTr;
  head.num_classes = 2;
  head.backbone_layers = b->info().num_layers;
  head.backbone_dim = b->info().hidden_dim;
  head.pool_target = 5;
  training::TrainConfig c;
  c.epochs = 2;
  c.batch_size = 2;
  c.lr = 1e-3;
  training::train_head(head, c, store, entries);
  const bool frozen = b->weights_checksum() == before_sum;
  return {passes == 1 && a.transcript.has_value() && frozen,
          "encoder passes for tag+transcribe: " + std::to_string(passes) + "; weight checksum " +
              (frozen ? "unchanged" : "CHANGED") + " across training"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"cost model matches the published MACs/params table", cost_conformance},
      {"instantiated parameter counts equal the cost model", instantiation_law},
      {"head gradients match central differences", gradient_checks},
      {"AP and WER match brute-force oracles", metric_oracles},
      {"mixing reaches the requested SNR", mixing_law},
      {"TL-Tr d'=64 overfits a 32-clip multi-label set", overfit},
      {"ESC-50 5-fold accuracy >= 0.85 (TL-Tr d'=512, large backbone)", esc50_accuracy},
      {"final-layer probe within 15 points of the best layer", probe_depth},
      {"single encoder pass and frozen backbone", single_pass},
  };
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) selected.push_back(std::atoi(argv[i]));
  if (selected.empty()) {
    for (int i = 1; i <= static_cast<int>(criteria.size()); ++i) selected.push_back(i);
  }
  int failed = 0;
  for (int k : selected) {
    if (k < 1 || k > static_cast<int>(criteria.size())) {
      std::cerr << "no criterion " << k << "\n";
      return 2;
    }
    const auto& [name, fn] = criteria[k - 1];
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << k << " " << name << " | " << o.detail << " (" << num(secs, 3)
              << " s)" << std::endl;
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
