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
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "layertag/analysis.hpp"
#include "layertag/audio.hpp"
#include "layertag/backbone.hpp"
#include "layertag/cli.hpp"
#include "layertag/cost.hpp"
#include "layertag/error.hpp"
#include "layertag/heads.hpp"
#include "layertag/training.hpp"

namespace layertag::cli {
namespace fs = std::filesystem;
using nlohmann::json;
using training::ClassMap;
using training::ManifestEntry;

namespace {

struct Flags {
  std::string config;
  std::string backbone;
  std::string head;
  int proj_dim = 0;
  long long seed = -1;
  std::string output_dir;
  std::string checkpoint;
  std::string manifest;
  std::string class_map;
  std::string cache_dir;
  std::string weights_dir;
  std::string split;
  // tag
  std::string audio;
  bool with_transcript = false;
  bool all_scores = false;
  int top_k = 5;
  // cost
  int frames = 500;
};

struct Context {
  RunConfig config;
  Flags flags;
  std::ostream& out;
  std::ostream& err;
};

RunConfig effective_config(const Flags& f) {
  RunConfig c = f.config.empty() ? RunConfig{} : load_run_config(f.config);
  if (!f.backbone.empty()) c.backbone.model_id = f.backbone;
  if (!f.cache_dir.empty()) c.backbone.cache_dir = f.cache_dir;
  if (!f.weights_dir.empty()) c.backbone.weights_dir = f.weights_dir;
  if (!f.head.empty()) c.head["variant"] = f.head;
  if (f.proj_dim > 0) c.head["proj_dim"] = f.proj_dim;
  if (f.seed >= 0) {
    const auto s = static_cast<std::uint64_t>(f.seed);
    c.train.seed = c.analysis.seed = c.analysis.probe.seed = s;
  }
  if (!f.output_dir.empty()) c.io.output_dir = f.output_dir;
  if (!f.checkpoint.empty()) c.io.checkpoint = f.checkpoint;
  if (!f.manifest.empty()) c.io.manifest = f.manifest;
  if (!f.class_map.empty()) c.io.class_map = f.class_map;
  if (!f.split.empty()) {
    training::parse_split(f.split);
    c.io.split = f.split;
  }
  return c;
}

void require_path(const fs::path& p, const std::string& key) {
  if (p.empty()) throw ConfigError(key + " is not set");
  if (!fs::exists(p)) throw NotFound(key + " does not exist: " + p.string());
}

json base_report(const std::string& command, const Context& ctx) {
  const json cfg = to_json(ctx.config);
  return {{"command", command},
          {"version", LAYERTAG_VERSION},
          {"config_hash", config_hash(cfg)},
          {"seed", ctx.config.train.seed},
          {"config", cfg}};
}

fs::path write_report(const Context& ctx, const std::string& name, json report) {
  const fs::path dir = ctx.config.io.output_dir;
  fs::create_directories(dir);
  const fs::path path = dir / name;
  if (!report.contains("outputs")) report["outputs"] = json::array();
  report["outputs"].push_back(path.string());
  std::ofstream os(path);
  os << report.dump(2, ' ', false, json::error_handler_t::replace) << "\n";
  if (!os) throw Error("cannot write report " + path.string());
  return path;
}

BackboneOptions backbone_options(const RunConfig& c) { return {c.backbone.weights_dir, c.backbone.synthetic_seed}; }

// Backbone shape without loading weights, for the cost model.
std::pair<int, int> known_shape(const std::string& model_id) {
  std::string id = model_id;
  if (id.rfind("synthetic-", 0) == 0) id = id.substr(10);
  for (const auto& k : known_backbones()) {
    if (k.id == id) return {k.layers, k.dim};
  }
  throw ConfigError("cannot infer the shape of backbone '" + model_id + "'; set head.backbone_layers and head.backbone_dim");
}

heads::HeadConfig resolve_head(const RunConfig& c, std::optional<int> num_classes,
                               const std::function<std::pair<int, int>()>& shape) {
  json h = c.head;
  if (!h.contains("num_classes") && num_classes) h["num_classes"] = *num_classes;
  if (!h.contains("backbone_layers") || !h.contains("backbone_dim")) {
    const auto [layers, dim] = shape();
    if (!h.contains("backbone_layers")) h["backbone_layers"] = layers;
    if (!h.contains("backbone_dim")) h["backbone_dim"] = dim;
  }
  // A projection to the backbone width is the identity's job; drop it.
  if (h.contains("proj_dim") && h["proj_dim"].is_number_integer() && h["proj_dim"] == h["backbone_dim"]) {
    h["proj_dim"] = nullptr;
  }
  return heads::head_config_from_json(h);
}

CacheStore open_store(const RunConfig& c, bool must_exist) {
  if (must_exist) require_path(c.backbone.cache_dir, "backbone.cache_dir");
  return CacheStore(c.backbone.cache_dir, CacheStore::Info{c.backbone.model_id, 50.0, c.backbone.dtype});
}

std::pair<int, int> stored_shape(const CacheStore& store, const std::vector<ManifestEntry>& entries) {
  if (entries.empty()) throw InvalidInput("manifest has no entries");
  const RepresentationStack s = store.read(entries.front().utterance_id);
  return {s.layers(), s.dim()};
}

ClassMap load_classes(const RunConfig& c) {
  require_path(c.io.class_map, "io.class_map");
  return training::load_class_map(c.io.class_map);
}

std::vector<ManifestEntry> load_manifest(const fs::path& path, const std::string& key, const ClassMap& classes,
                                         const training::ManifestOptions& options = {}) {
  require_path(path, key);
  return training::ingest_manifest(path, classes, options);
}

std::string fixed(double v, int digits) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

// ---- subcommands

int cmd_extract(Context& ctx) {
  const RunConfig& c = ctx.config;
  training::ManifestOptions options;
  options.require_labels = false;
  ClassMap classes;
  if (c.io.class_map.empty()) {
    options.parse_labels = false;
  } else {
    classes = load_classes(c);
  }
  auto entries = load_manifest(c.io.manifest, "io.manifest", classes, options);
  if (!c.io.eval_manifest.empty()) {
    auto more = load_manifest(c.io.eval_manifest, "io.eval_manifest", classes, options);
    entries.insert(entries.end(), more.begin(), more.end());
  }
  const auto backbone = Backbone::load(c.backbone.model_id, backbone_options(c));
  const auto& info = backbone->info();
  CacheStore store(c.backbone.cache_dir, CacheStore::Info{c.backbone.model_id, info.frame_rate, c.backbone.dtype});

  int written = 0, skipped = 0;
  bool internal_failure = false;
  json failures = json::array();
  json records = json::array();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    if (store.contains(e.utterance_id)) {
      ++skipped;
      continue;
    }
    try {
      const auto wave = audio::load_audio(e.audio_path, info.sample_rate);
      const auto stack = backbone->extract_representations(wave, e.utterance_id);
      store.write(stack);
      ++written;
      records.push_back({{"utterance_id", e.utterance_id}, {"frames", stack.frames()}, {"duration_s", wave.duration()}});
    } catch (const UsageError& ex) {
      failures.push_back({{"utterance_id", e.utterance_id}, {"error", ex.what()}});
    } catch (const std::exception& ex) {
      internal_failure = true;
      failures.push_back({{"utterance_id", e.utterance_id}, {"error", ex.what()}});
    }
    if ((i + 1) % 50 == 0) ctx.err << "extract: " << (i + 1) << "/" << entries.size() << "\n";
  }
  json report = base_report("extract", ctx);
  report["backbone"] = {{"model_id", info.model_id},
                        {"num_layers", info.num_layers},
                        {"hidden_dim", info.hidden_dim},
                        {"frame_rate", info.frame_rate},
                        {"weights_checksum", backbone->weights_checksum()}};
  report["cache_dir"] = c.backbone.cache_dir.string();
  report["processed"] = entries.size();
  report["written"] = written;
  report["skipped"] = skipped;
  report["failed"] = failures;
  report["records"] = records;
  const auto path = write_report(ctx, "extract_report.json", report);
  ctx.out << "extract: " << entries.size() << " processed, " << written << " written, " << skipped << " skipped, "
          << failures.size() << " failed; report " << path.string() << "\n";
  for (const auto& f : failures) {
    ctx.err << "extract: " << f["utterance_id"].get<std::string>() << ": " << f["error"].get<std::string>() << "\n";
  }
  if (failures.empty()) return 0;
  return internal_failure ? 1 : 2;
}

bool has_folds(const std::vector<ManifestEntry>& entries) {
  return std::any_of(entries.begin(), entries.end(), [](const auto& e) {
    return e.split != training::Split::kTrain && e.split != training::Split::kEval;
  });
}

int cmd_train(Context& ctx) {
  const RunConfig& c = ctx.config;
  const ClassMap classes = load_classes(c);
  const auto entries = load_manifest(c.io.manifest, "io.manifest", classes);
  const CacheStore store = open_store(c, true);
  const auto head = resolve_head(c, classes.size(), [&] { return stored_shape(store, entries); });
  fs::create_directories(c.io.output_dir);
  json report = base_report("train", ctx);
  report["head_config"] = heads::to_json(head);
  json meta = {{"config_hash", report["config_hash"]},
               {"seed", c.train.seed},
               {"version", LAYERTAG_VERSION},
               {"backbone", c.backbone.model_id}};

  const bool crossval = has_folds(entries) && training::select_split(entries, training::Split::kTrain).empty();
  if (crossval) {
    json folds = json::array();
    const auto result = training::crossval_esc50(head, c.train, store, entries, [&](int fold, const training::TrainResult& r) {
      const fs::path ckpt = c.io.output_dir / ("fold" + std::to_string(fold) + ".ckpt");
      heads::save_checkpoint(ckpt.string(), r.params, meta);
      folds.push_back({{"fold", fold}, {"checkpoint", ckpt.string()}, {"steps", r.steps.size()}});
      ctx.err << "train: fold " << fold << " done\n";
    });
    for (std::size_t k = 0; k < folds.size(); ++k) folds[k]["accuracy"] = result.fold_accuracy[k];
    report["protocol"] = "5-fold cross-validation";
    report["accuracy"] = result.accuracy;
    report["folds"] = folds;
    json preds = json::array();
    for (std::size_t i = 0; i < result.utterance_ids.size(); ++i) {
      preds.push_back({{"utterance_id", result.utterance_ids[i]},
                       {"predicted", classes.name(result.predicted[i])},
                       {"truth", classes.name(result.truth[i])}});
    }
    report["predictions"] = preds;
    for (const auto& f : folds) report["outputs"].push_back(f["checkpoint"]);
    const auto path = write_report(ctx, "train_report.json", report);
    ctx.out << "train: pooled 5-fold accuracy " << fixed(result.accuracy, 4) << "; report " << path.string() << "\n";
    return 0;
  }

  const auto train_entries = training::select_split(entries, training::Split::kTrain);
  auto eval_entries = training::select_split(entries, training::Split::kEval);
  if (!c.io.eval_manifest.empty()) {
    auto more = load_manifest(c.io.eval_manifest, "io.eval_manifest", classes);
    for (auto& e : more) eval_entries.push_back(std::move(e));
  }
  if (train_entries.empty()) throw InvalidInput("manifest has no train entries");
  const fs::path log_path = c.io.output_dir / "train_log.jsonl";
  std::ofstream log(log_path);
  training::TrainOptions options;
  options.eval_entries = eval_entries;
  options.log = &log;
  options.on_epoch = [&](const training::EpochRecord& r) {
    ctx.err << "train: epoch " << r.epoch << " loss " << fixed(r.mean_loss, 5);
    if (r.eval_mAP) ctx.err << " eval mAP " << fixed(*r.eval_mAP, 4);
    ctx.err << "\n";
  };
  const auto result = training::train_head(head, c.train, store, train_entries, options);
  const fs::path ckpt = c.io.checkpoint.empty() ? c.io.output_dir / "head.ckpt" : c.io.checkpoint;
  if (ckpt.has_parent_path()) fs::create_directories(ckpt.parent_path());
  heads::save_checkpoint(ckpt.string(), result.params, meta);

  json epochs = json::array();
  for (const auto& e : result.epochs) {
    json row = {{"epoch", e.epoch}, {"mean_loss", e.mean_loss}};
    if (e.eval_mAP) row["eval_mAP"] = *e.eval_mAP;
    if (e.eval_accuracy) row["eval_accuracy"] = *e.eval_accuracy;
    epochs.push_back(row);
  }
  report["steps"] = result.steps.size();
  report["epochs"] = epochs;
  report["train_metrics"] = training::to_json(training::evaluate(result.params, store, train_entries));
  if (!eval_entries.empty()) report["eval_metrics"] = training::to_json(training::evaluate(result.params, store, eval_entries));
  report["checkpoint"] = ckpt.string();
  report["outputs"] = {ckpt.string(), log_path.string()};
  const auto path = write_report(ctx, "train_report.json", report);
  ctx.out << "train: " << result.steps.size() << " steps, train mAP "
          << fixed(report["train_metrics"]["mAP"].get<double>(), 4);
  if (report.contains("eval_metrics")) ctx.out << ", eval mAP " << fixed(report["eval_metrics"]["mAP"].get<double>(), 4);
  ctx.out << "; checkpoint " << ckpt.string() << "; report " << path.string() << "\n";
  return 0;
}

heads::Checkpoint load_head(const RunConfig& c) {
  require_path(c.io.checkpoint, "io.checkpoint");
  return heads::load_checkpoint(c.io.checkpoint.string());
}

int cmd_eval(Context& ctx) {
  const RunConfig& c = ctx.config;
  const auto ckpt = load_head(c);
  const ClassMap classes = load_classes(c);
  const auto all = load_manifest(c.io.manifest, "io.manifest", classes);
  const auto split = training::parse_split(c.io.split);
  const auto entries = training::select_split(all, split);
  if (entries.empty()) throw InvalidInput("manifest has no '" + c.io.split + "' entries");
  const CacheStore store = open_store(c, true);
  const auto metrics = training::evaluate(ckpt.params, store, entries);
  json report = base_report("eval", ctx);
  report["head_config"] = heads::to_json(ckpt.params.config());
  report["checkpoint"] = c.io.checkpoint.string();
  report["split"] = c.io.split;
  report["metrics"] = training::to_json(metrics);
  report["class_names"] = classes.names();
  const auto path = write_report(ctx, "eval_report.json", report);
  ctx.out << "eval: " << metrics.num_clips << " clips, mAP " << fixed(metrics.mAP, 4) << ", accuracy "
          << fixed(metrics.accuracy, 4) << "; report " << path.string() << "\n";
  return 0;
}

int cmd_tag(Context& ctx) {
  const RunConfig& c = ctx.config;
  const auto ckpt = load_head(c);
  std::vector<std::string> names;
  if (!c.io.class_map.empty()) names = load_classes(c).names();
  if (ctx.flags.top_k < 1) throw InvalidInput("--top-k must be at least 1");
  require_path(ctx.flags.audio, "audio file");
  const auto backbone = Backbone::load(c.backbone.model_id, backbone_options(c));
  const auto& head = ckpt.params.config();
  if (head.backbone_layers != backbone->info().num_layers || head.backbone_dim != backbone->info().hidden_dim) {
    throw ConfigError("checkpoint expects a " + std::to_string(head.backbone_layers) + "x" +
                      std::to_string(head.backbone_dim) + " backbone, '" + c.backbone.model_id + "' is " +
                      std::to_string(backbone->info().num_layers) + "x" + std::to_string(backbone->info().hidden_dim));
  }
  const auto wave = audio::load_audio(ctx.flags.audio, backbone->info().sample_rate);
  const long before = backbone->encoder_calls();
  auto analysis = backbone->analyze(wave, ctx.flags.with_transcript, fs::path(ctx.flags.audio).stem().string());
  const auto logits = heads::forward_logits(analysis.stack, ckpt.params);
  auto result = heads::make_tagging_result(logits, names, ctx.flags.top_k);
  result.transcript = analysis.transcript;
  json j = heads::to_json(result, ctx.flags.all_scores);
  j["audio"] = ctx.flags.audio;
  j["duration_s"] = wave.duration();
  j["backbone"] = c.backbone.model_id;
  j["checkpoint"] = c.io.checkpoint.string();
  j["encoder_passes"] = backbone->encoder_calls() - before;
  j["version"] = LAYERTAG_VERSION;
  j["config_hash"] = config_hash(to_json(c));
  ctx.out << j.dump(2, ' ', false, json::error_handler_t::replace) << "\n";
  return 0;
}

int cmd_probe(Context& ctx) {
  const RunConfig& c = ctx.config;
  const ClassMap classes = load_classes(c);
  const auto entries = load_manifest(c.io.manifest, "io.manifest", classes);
  const CacheStore store = open_store(c, true);
  const int layers = stored_shape(store, entries).first;
  const auto results = analysis::probe_layers(store, entries, classes.size(), layers, c.analysis.probe);
  const auto histogram = analysis::best_layer_histogram(results);
  int best = 0;
  for (int l = 1; l < layers; ++l) {
    if (results[l].accuracy > results[best].accuracy) best = l;
  }
  json report = base_report("probe", ctx);
  report["seed"] = c.analysis.probe.seed;
  report["probe"] = analysis::to_json(c.analysis.probe);
  report["num_layers"] = layers;
  report["class_names"] = classes.names();
  report["layers"] = json::array();
  for (const auto& r : results) report["layers"].push_back(analysis::to_json(r));
  report["best_layer_histogram"] = histogram;
  report["best_layer"] = best;
  report["best_accuracy"] = results[best].accuracy;
  report["last_layer_accuracy"] = results.back().accuracy;
  const auto path = write_report(ctx, "probe_report.json", report);
  ctx.out << "layer  accuracy  best-for\n";
  for (int l = 0; l < layers; ++l) {
    ctx.out << std::setw(5) << l << "  " << fixed(results[l].accuracy, 4) << "  " << std::setw(8) << histogram[l] << "\n";
  }
  ctx.out << "probe: best layer " << best << " (" << fixed(results[best].accuracy, 4) << "), last layer "
          << fixed(results.back().accuracy, 4) << "; report " << path.string() << "\n";
  return 0;
}

int cmd_mixeval(Context& ctx) {
  const RunConfig& c = ctx.config;
  const ClassMap classes = load_classes(c);
  training::ManifestOptions speech_opts;
  speech_opts.require_labels = false;
  speech_opts.parse_labels = false;
  const auto speech_entries = load_manifest(c.io.speech_manifest, "io.speech_manifest", ClassMap{}, speech_opts);
  const auto noise_entries = load_manifest(c.io.noise_manifest, "io.noise_manifest", classes);
  const auto backbone = Backbone::load(c.backbone.model_id, backbone_options(c));
  const int rate = backbone->info().sample_rate;

  std::vector<analysis::SpeechClip> speech;
  for (const auto& e : speech_entries) {
    if (!e.transcript) throw InvalidInput("speech entry '" + e.utterance_id + "' has no transcript");
    speech.push_back({e.utterance_id, audio::load_audio(e.audio_path, rate), *e.transcript});
  }
  std::vector<analysis::NoiseClip> noise;
  for (const auto& e : noise_entries) {
    if (e.labels.size() != 1) throw InvalidInput("noise entry '" + e.utterance_id + "' needs exactly one label");
    noise.push_back({e.utterance_id, audio::load_audio(e.audio_path, rate), classes.name(e.labels[0])});
  }
  const analysis::BackboneTranscriber transcriber(*backbone);
  const auto sweep = analysis::snr_sweep(speech, noise, c.analysis.snr_list, transcriber,
                                         {c.analysis.noise_per_speech, c.analysis.seed});
  json report = base_report("mix-eval", ctx);
  report["seed"] = c.analysis.seed;
  report["sweep"] = analysis::to_json(sweep);
  if (!c.io.probe_report.empty()) {
    require_path(c.io.probe_report, "io.probe_report");
    std::ifstream is(c.io.probe_report);
    const json probe = json::parse(is);
    const json& last = probe.at("layers").back();
    analysis::ProbeResult r{last.at("layer").get<int>(), last.at("accuracy").get<double>(),
                            last.at("per_class_F1").get<std::vector<double>>()};
    report["robustness"] = analysis::to_json(
        analysis::robustness_vs_recognizability(sweep, c.analysis.reference_snr, c.analysis.noisy_snr, r, classes));
  }
  const auto path = write_report(ctx, "mix_eval_report.json", report);
  ctx.out << "   snr_db  mean_wer\n";
  for (std::size_t i = 0; i < sweep.snr_list.size(); ++i) {
    const double s = sweep.snr_list[i];
    ctx.out << std::setw(9) << (analysis::is_clean(s) ? std::string("clean") : fixed(s, 1)) << "  "
            << fixed(sweep.mean_wer[i], 4) << "\n";
  }
  if (report.contains("robustness") && !report["robustness"]["spearman"].is_null()) {
    ctx.out << "spearman(-wer_increase, f1) = " << fixed(report["robustness"]["spearman"].get<double>(), 4) << "\n";
  }
  ctx.out << "mix-eval: report " << path.string() << "\n";
  return 0;
}

int cmd_cost(Context& ctx) {
  const RunConfig& c = ctx.config;
  std::optional<int> classes;
  if (!c.io.class_map.empty()) classes = load_classes(c).size();
  const auto head = resolve_head(c, classes, [&] { return known_shape(c.backbone.model_id); });
  const auto report = cost::cost_report(head, ctx.flags.frames);
  const double speedup = cost::speedup(report, cost::kReferenceTaggerMacs);
  json j = base_report("cost", ctx);
  j["head_config"] = heads::to_json(head);
  j["cost"] = cost::to_json(report);
  j["reference_macs"] = cost::kReferenceTaggerMacs;
  j["speedup"] = speedup;
  const auto path = write_report(ctx, "cost_report.json", j);
  ctx.out << cost::format_table(report);
  ctx.out << "MACs " << fixed(static_cast<double>(report.macs) / 1e9, 2) << "G, params "
          << fixed(static_cast<double>(report.params) / 1e6, 1) << "M, speed-up " << fixed(speedup, 1)
          << "x vs a 133G reference tagger; report " << path.string() << "\n";
  return 0;
}

void add_common(CLI::App* sub, Flags& f) {
  sub->add_option("--config", f.config, "run config file (JSON)");
  sub->add_option("--backbone", f.backbone, "backbone id, synthetic-<id> or a .watm path");
  sub->add_option("--head", f.head, "head variant: last_mlp, wa_mlp, wa_tr, tl_tr");
  sub->add_option("--proj-dim", f.proj_dim, "projection width d'");
  sub->add_option("--seed", f.seed, "seed for training, mixing and probing");
  sub->add_option("--output-dir", f.output_dir, "where reports and checkpoints go");
  sub->add_option("--checkpoint", f.checkpoint, "head checkpoint");
  sub->add_option("--manifest", f.manifest, "JSONL manifest");
  sub->add_option("--class-map", f.class_map, "class map JSON");
  sub->add_option("--cache-dir", f.cache_dir, "representation cache directory");
  sub->add_option("--weights-dir", f.weights_dir, "directory of converted backbone weights");
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Audio tagging heads on frozen Whisper encoder layers", "layertag"};
  app.set_version_flag("--version", LAYERTAG_VERSION);
  app.require_subcommand(1, 1);
  Flags f;

  struct Sub {
    const char* name;
    const char* help;
    int (*fn)(Context&);
  };
  const Sub subs[] = {
      {"extract", "cache layer representations for every manifest entry", cmd_extract},
      {"train", "train a head on cached representations", cmd_train},
      {"eval", "evaluate a head checkpoint on a manifest split", cmd_eval},
      {"tag", "tag one audio file, optionally with its transcript", cmd_tag},
      {"probe", "per-layer linear probes", cmd_probe},
      {"mix-eval", "WER under background sounds at several SNRs", cmd_mixeval},
      {"cost", "analytic MACs and parameters of a head", cmd_cost},
  };
  std::map<CLI::App*, int (*)(Context&)> handlers;
  for (const auto& s : subs) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    add_common(sub, f);
    handlers[sub] = s.fn;
    if (std::string(s.name) == "tag") {
      sub->add_option("audio", f.audio, "audio file")->required();
      sub->add_flag("--with-transcript", f.with_transcript, "also decode the transcript (same encoder pass)");
      sub->add_option("--top-k", f.top_k, "number of tags to list")->capture_default_str();
      sub->add_flag("--all-scores", f.all_scores, "include every class score");
    } else if (std::string(s.name) == "eval") {
      sub->add_option("--split", f.split, "manifest split to evaluate");
    } else if (std::string(s.name) == "cost") {
      sub->add_option("--frames", f.frames, "encoder frames per layer")->capture_default_str();
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    for (const auto& [sub, fn] : handlers) {
      if (sub->parsed()) {
        Context ctx{effective_config(f), f, out, err};
        return fn(ctx);
      }
    }
    return 2;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace layertag::cli
