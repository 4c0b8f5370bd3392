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

#include "layertag/training.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <random>

#include "layertag/error.hpp"
#include "layertag/loss.hpp"

namespace layertag::training {

using heads::HeadConfig;
using heads::HeadParams;

namespace {

constexpr int kPredictChunk = 16;

template <typename E>
E parse_enum(std::string_view text, std::initializer_list<std::pair<std::string_view, E>> table,
             const char* what) {
  // Case and '-' vs '_' are not significant.
  std::string upper;
  for (char c : text) upper.push_back(c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  for (const auto& [name, value] : table) {
    if (name == upper) return value;
  }
  std::string known;
  for (const auto& [name, _] : table) known += (known.empty() ? "" : ", ") + std::string(name);
  throw ConfigError("unknown " + std::string(what) + " '" + std::string(text) + "' (known: " + known + ")");
}

void require_cached(const CacheStore& store, const std::vector<ManifestEntry>& entries) {
  const auto missing = store.missing(utterance_ids(entries));
  if (missing.empty()) return;
  std::string list;
  for (std::size_t i = 0; i < missing.size() && i < 10; ++i) list += (i ? ", " : "") + missing[i];
  if (missing.size() > 10) list += ", ... (" + std::to_string(missing.size()) + " total)";
  throw NotFound("no cached representations for: " + list);
}

void check_shape(const HeadConfig& head, const RepresentationStack& s) {
  if (s.layers() != head.backbone_layers || s.dim() != head.backbone_dim) {
    throw InvalidInput("cached stack '" + s.utterance_id() + "' is " + std::to_string(s.layers()) + "x" +
                       std::to_string(s.dim()) + " but the head expects " +
                       std::to_string(head.backbone_layers) + "x" + std::to_string(head.backbone_dim));
  }
}

// Prepared head inputs for a fixed list of entries, either held in memory or
// re-read from the cache on every access.
class ClipSource {
 public:
  ClipSource(const HeadConfig& head, const CacheStore& store, const std::vector<ManifestEntry>& entries,
             bool preload)
      : head_(head), store_(store), entries_(entries), preload_(preload) {
    if (preload_) {
      clips_.reserve(entries.size());
      for (const auto& e : entries) clips_.push_back(load(e));
    }
  }

  // Returns stacks for indices; storage lives until the next call.
  std::vector<const RepresentationStack*> fetch(std::span<const std::size_t> indices) {
    std::vector<const RepresentationStack*> out;
    if (preload_) {
      for (std::size_t i : indices) out.push_back(&clips_[i]);
      return out;
    }
    scratch_.clear();
    scratch_.reserve(indices.size());
    for (std::size_t i : indices) scratch_.push_back(load(entries_[i]));
    for (const auto& s : scratch_) out.push_back(&s);
    return out;
  }

 private:
  RepresentationStack load(const ManifestEntry& e) const {
    auto s = store_.read(e.utterance_id);
    check_shape(head_, s);
    return heads::prepare_input(head_, s);
  }

  const HeadConfig& head_;
  const CacheStore& store_;
  const std::vector<ManifestEntry>& entries_;
  bool preload_;
  std::vector<RepresentationStack> clips_;
  std::vector<RepresentationStack> scratch_;
};

MatF gather_rows(const MatF& m, std::span<const std::size_t> rows) {
  MatF out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  return out;
}

void emit(std::ostream* log, const nlohmann::json& j) {
  if (log != nullptr) *log << j.dump() << '\n' << std::flush;
}

}  // namespace

std::string_view to_string(LossKind kind) {
  return kind == LossKind::kBceMultilabel ? "BCE_MULTILABEL" : "BCE_ONEHOT";
}

std::string_view to_string(LrSchedule schedule) {
  return schedule == LrSchedule::kConstant ? "CONSTANT" : "STEP_DECAY";
}

LossKind parse_loss(std::string_view text) {
  return parse_enum<LossKind>(
      text, {{"BCE_MULTILABEL", LossKind::kBceMultilabel}, {"BCE_ONEHOT", LossKind::kBceOnehot}}, "loss");
}

LrSchedule parse_schedule(std::string_view text) {
  return parse_enum<LrSchedule>(
      text, {{"CONSTANT", LrSchedule::kConstant}, {"STEP_DECAY", LrSchedule::kStepDecay}}, "lr_schedule");
}

void TrainConfig::validate() const {
  // lr = 0 is accepted so a run can be checked for leaving parameters untouched.
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("train.lr must be finite and non-negative");
  if (epochs < 1) throw ConfigError("train.epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("train.batch_size must be at least 1");
  if (micro_batch < 1) throw ConfigError("train.micro_batch must be at least 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(adam_eps > 0.0)) {
    throw ConfigError("Adam betas must lie in [0, 1) and eps must be positive");
  }
  if (max_steps && *max_steps < 1) throw ConfigError("train.max_steps must be at least 1");
}

nlohmann::json to_json(const TrainConfig& c) {
  nlohmann::json j = {{"batch_size", c.batch_size},
                      {"lr", c.lr},
                      {"epochs", c.epochs},
                      {"loss", std::string(to_string(c.loss))},
                      {"seed", c.seed},
                      {"lr_schedule", std::string(to_string(c.lr_schedule))},
                      {"beta1", c.beta1},
                      {"beta2", c.beta2},
                      {"adam_eps", c.adam_eps},
                      {"micro_batch", c.micro_batch},
                      {"preload", c.preload}};
  j["max_steps"] = c.max_steps ? nlohmann::json(*c.max_steps) : nlohmann::json(nullptr);
  return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("train section must be an object");
  TrainConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "batch_size") c.batch_size = value.get<int>();
      else if (key == "lr") c.lr = value.get<double>();
      else if (key == "epochs") c.epochs = value.get<int>();
      else if (key == "loss") c.loss = parse_loss(value.get<std::string>());
      else if (key == "seed") c.seed = value.get<std::uint64_t>();
      else if (key == "lr_schedule") c.lr_schedule = parse_schedule(value.get<std::string>());
      else if (key == "beta1") c.beta1 = value.get<double>();
      else if (key == "beta2") c.beta2 = value.get<double>();
      else if (key == "adam_eps") c.adam_eps = value.get<double>();
      else if (key == "micro_batch") c.micro_batch = value.get<int>();
      else if (key == "preload") c.preload = value.get<bool>();
      else if (key == "max_steps") {
        if (value.is_null()) c.max_steps.reset();
        else c.max_steps = value.get<long>();
      } else {
        throw ConfigError("unknown key train." + key);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad value in train section: ") + e.what());
  }
  c.validate();
  return c;
}

double scheduled_lr(const TrainConfig& c, int epoch) {
  if (c.lr_schedule == LrSchedule::kConstant || epoch <= 10) return c.lr;
  const int halvings = (epoch - 10 + 4) / 5;
  return c.lr * std::ldexp(1.0, -halvings);
}

Adam::Adam(std::size_t size, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps), m_(size, 0.0), v_(size, 0.0) {}

void Adam::step(std::span<float> params, std::span<const float> grad, double lr) {
  if (params.size() != m_.size() || grad.size() != m_.size()) throw InvalidInput("Adam size mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grad[i];
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g * g;
    const double update = lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
    params[i] = static_cast<float>(params[i] - update);
  }
}

MatF make_targets(const std::vector<ManifestEntry>& entries, int num_classes, LossKind loss) {
  MatF t = MatF::Zero(static_cast<Eigen::Index>(entries.size()), num_classes);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    if (loss == LossKind::kBceOnehot && e.labels.size() != 1) {
      throw InvalidInput("entry '" + e.utterance_id + "' has " + std::to_string(e.labels.size()) +
                         " labels; BCE_ONEHOT needs exactly one");
    }
    for (int l : e.labels) {
      if (l < 0 || l >= num_classes) {
        throw InvalidInput("entry '" + e.utterance_id + "' has label " + std::to_string(l) +
                           " outside 0.." + std::to_string(num_classes - 1));
      }
      t(static_cast<Eigen::Index>(i), l) = 1.0F;
    }
  }
  return t;
}

TrainResult train_head(const HeadConfig& head, const TrainConfig& config, const CacheStore& store,
                       const std::vector<ManifestEntry>& entries, const TrainOptions& options) {
  head.validate();
  config.validate();
  if (entries.empty()) throw InvalidInput("no training entries");
  for (const auto& e : entries) {
    if (e.labels.empty()) throw InvalidInput("training entry '" + e.utterance_id + "' has no labels");
  }
  require_cached(store, entries);
  if (!options.eval_entries.empty()) require_cached(store, options.eval_entries);

  const MatF targets = make_targets(entries, head.num_classes, config.loss);
  ClipSource source(head, store, entries, config.preload);

  TrainResult result{options.initial ? *options.initial : HeadParams<float>::initialized(head, config.seed),
                     {}, {}};
  if (!(result.params.config() == head)) throw ConfigError("initial parameters belong to a different head");
  Adam adam(result.params.size(), config.beta1, config.beta2, config.adam_eps);
  std::vector<float> grad(result.params.size());
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(entries.size());

  emit(options.log, {{"type", "header"},
                     {"version", LAYERTAG_VERSION},
                     {"head_config", heads::to_json(head)},
                     {"train_config", to_json(config)},
                     {"num_clips", entries.size()},
                     {"sampling", "uniform shuffle each epoch, no class balancing or label enhancement"}});

  long step = 0;
  bool done = false;
  for (int epoch = 1; epoch <= config.epochs && !done; ++epoch) {
    const double lr = scheduled_lr(config, epoch);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    long epoch_steps = 0;
    for (std::size_t start = 0; start < order.size() && !done; start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const auto batch_rows = static_cast<float>(stop - start);
      std::fill(grad.begin(), grad.end(), 0.0F);
      double loss = 0.0;
      for (std::size_t mstart = start; mstart < stop; mstart += config.micro_batch) {
        const std::size_t mstop = std::min(stop, mstart + static_cast<std::size_t>(config.micro_batch));
        const std::span<const std::size_t> idx(order.data() + mstart, mstop - mstart);
        const auto batch = source.fetch(idx);
        heads::ForwardTrace<float> trace;
        const MatF logits = heads::forward<float>(result.params, batch, &trace);
        const MatF y = gather_rows(targets, idx);
        MatF dlogits;
        const float share = static_cast<float>(idx.size()) / batch_rows;
        loss += static_cast<double>(bce_with_logits<float>(logits, y, &dlogits)) * share;
        dlogits *= share;
        heads::backward<float>(result.params, trace, dlogits, grad);
      }
      ++step;
      if (!std::isfinite(loss)) {
        throw TrainingError("non-finite loss at step " + std::to_string(step) + " (epoch " +
                            std::to_string(epoch) + ")");
      }
      adam.step(result.params.data(), grad, lr);
      result.steps.push_back({step, epoch, loss, lr});
      emit(options.log, {{"type", "step"}, {"step", step}, {"epoch", epoch}, {"loss", loss}, {"lr", lr}});
      epoch_loss += loss;
      ++epoch_steps;
      if (config.max_steps && step >= *config.max_steps) done = true;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.mean_loss = epoch_loss / static_cast<double>(epoch_steps);
    nlohmann::json j = {{"type", "epoch"}, {"epoch", epoch}, {"loss", rec.mean_loss}, {"steps", step}};
    if (!options.eval_entries.empty()) {
      const auto m = evaluate(result.params, store, options.eval_entries);
      rec.eval_mAP = m.mAP;
      rec.eval_accuracy = m.accuracy;
      j["eval_mAP"] = m.mAP;
      j["eval_accuracy"] = m.accuracy;
    }
    emit(options.log, j);
    result.epochs.push_back(rec);
    if (options.on_epoch) options.on_epoch(rec);
  }
  if (!result.params.all_finite()) throw TrainingError("parameters became non-finite at step " + std::to_string(step));
  return result;
}

MatF predict_scores(const HeadParams<float>& params, const CacheStore& store,
                    const std::vector<ManifestEntry>& entries) {
  require_cached(store, entries);
  const HeadConfig& head = params.config();
  ClipSource source(head, store, entries, false);
  MatF scores(static_cast<Eigen::Index>(entries.size()), head.num_classes);
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < entries.size(); start += kPredictChunk) {
    const std::size_t stop = std::min(entries.size(), start + kPredictChunk);
    idx.resize(stop - start);
    std::iota(idx.begin(), idx.end(), start);
    const MatF logits = heads::forward<float>(params, source.fetch(idx));
    const MatF probs = (1.0F + (-logits.array()).exp()).inverse().matrix();
    scores.middleRows(static_cast<Eigen::Index>(start), probs.rows()) = probs;
  }
  return scores;
}

MetricsReport evaluate(const HeadParams<float>& params, const CacheStore& store,
                       const std::vector<ManifestEntry>& entries, double threshold) {
  if (entries.empty()) throw InvalidInput("evaluation split is empty");
  const MatF targets = make_targets(entries, params.config().num_classes, LossKind::kBceMultilabel);
  return compute_metrics(predict_scores(params, store, entries), targets, threshold);
}

CrossvalResult crossval_esc50(const HeadConfig& head, const TrainConfig& config, const CacheStore& store,
                              const std::vector<ManifestEntry>& entries,
                              const std::function<void(int, const TrainResult&)>& on_fold) {
  for (const auto& e : entries) {
    if (e.split < Split::kFold1) {
      throw InvalidInput("entry '" + e.utterance_id + "' has split " + std::string(to_string(e.split)) +
                         "; cross-validation needs fold1..fold5");
    }
    if (e.labels.size() != 1) {
      throw InvalidInput("entry '" + e.utterance_id + "' must carry exactly one label");
    }
  }
  for (int k = 1; k <= 5; ++k) {
    if (select_split(entries, fold_split(k)).empty()) {
      throw InvalidInput("fold" + std::to_string(k) + " has no entries");
    }
  }
  require_cached(store, entries);
  CrossvalResult out;
  long correct = 0;
  for (int k = 1; k <= 5; ++k) {
    std::vector<ManifestEntry> train;
    std::vector<ManifestEntry> test;
    for (const auto& e : entries) (e.split == fold_split(k) ? test : train).push_back(e);
    const TrainResult trained = train_head(head, config, store, train);
    if (on_fold) on_fold(k, trained);
    const MatF scores = predict_scores(trained.params, store, test);
    long fold_correct = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
      const auto row = static_cast<Eigen::Index>(i);
      const int p = argmax(std::span<const float>(scores.row(row).data(), static_cast<std::size_t>(scores.cols())));
      out.utterance_ids.push_back(test[i].utterance_id);
      out.predicted.push_back(p);
      out.truth.push_back(test[i].labels.front());
      fold_correct += p == test[i].labels.front();
    }
    out.fold_accuracy.push_back(static_cast<double>(fold_correct) / static_cast<double>(test.size()));
    correct += fold_correct;
  }
  out.accuracy = static_cast<double>(correct) / static_cast<double>(entries.size());
  return out;
}

}  // namespace layertag::training
