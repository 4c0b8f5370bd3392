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
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <random>
#include <set>
#include <thread>

#include "layertag/analysis.hpp"
#include "layertag/error.hpp"
#include "layertag/metrics.hpp"
#include "layertag/training.hpp"

namespace layertag::analysis {

using training::ManifestEntry;
using training::Split;

void ProbeConfig::validate() const {
  if (epochs < 1) throw ConfigError("probe epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("probe batch_size must be >= 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("probe lr must be positive");
  if (threads < 0) throw ConfigError("probe threads must be >= 0");
}

nlohmann::json to_json(const ProbeConfig& c) {
  return {{"epochs", c.epochs},           {"batch_size", c.batch_size}, {"lr", c.lr},
          {"seed", c.seed},               {"standardize", c.standardize}, {"optimizer", "adam"},
          {"loss", "softmax cross-entropy"}, {"pooling", "temporal mean"}};
}

nlohmann::json to_json(const ProbeResult& r) {
  return {{"layer", r.layer_index}, {"accuracy", r.accuracy}, {"per_class_F1", r.per_class_F1}};
}

namespace {

struct Fold {
  std::vector<int> train;
  std::vector<int> test;
};

// Softmax linear classifier trained with Adam on rows of x.
class LinearProbe {
 public:
  LinearProbe(int dim, int classes) : w_(MatF::Zero(dim, classes)), b_(RowVec<float>::Zero(classes)) {}

  void fit(const MatF& x, const std::vector<int>& y, const ProbeConfig& config) {
    const int n = static_cast<int>(x.rows());
    const auto dim = x.cols();
    const auto classes = w_.cols();
    training::Adam adam(static_cast<std::size_t>(w_.size() + b_.size()), 0.9, 0.999, 1e-8);
    std::vector<float> params(static_cast<std::size_t>(w_.size() + b_.size()), 0.0f);
    std::vector<float> grad(params.size());
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(config.seed);
    MatF xb;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
      std::shuffle(order.begin(), order.end(), rng);
      for (int start = 0; start < n; start += config.batch_size) {
        const int m = std::min(config.batch_size, n - start);
        xb.resize(m, dim);
        for (int r = 0; r < m; ++r) xb.row(r) = x.row(order[start + r]);
        MatF p = (xb * w_).rowwise() + b_;
        for (int r = 0; r < m; ++r) {
          const float mx = p.row(r).maxCoeff();
          p.row(r) = (p.row(r).array() - mx).exp();
          p.row(r) /= p.row(r).sum();
          p(r, y[order[start + r]]) -= 1.0f;
        }
        p /= static_cast<float>(m);
        Eigen::Map<MatF> gw(grad.data(), dim, classes);
        gw.noalias() = xb.transpose() * p;
        Eigen::Map<RowVec<float>> gb(grad.data() + w_.size(), classes);
        gb = p.colwise().sum();
        adam.step(params, grad, config.lr);
        w_ = Eigen::Map<const MatF>(params.data(), dim, classes);
        b_ = Eigen::Map<const RowVec<float>>(params.data() + w_.size(), classes);
      }
    }
  }

  std::vector<int> predict(const MatF& x) const {
    const MatF logits = (x * w_).rowwise() + b_;
    std::vector<int> out(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      out[r] = training::argmax(std::span<const float>(logits.row(r).data(), static_cast<std::size_t>(logits.cols())));
    }
    return out;
  }

 private:
  MatF w_;
  RowVec<float> b_;
};

MatF gather(const MatF& x, const std::vector<int>& rows) {
  MatF out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(rows[i]);
  return out;
}

std::vector<Fold> make_folds(const std::vector<ManifestEntry>& entries) {
  const bool has_eval = std::any_of(entries.begin(), entries.end(), [](const auto& e) { return e.split == Split::kEval; });
  std::vector<Fold> folds;
  if (has_eval) {
    Fold f;
    for (int i = 0; i < static_cast<int>(entries.size()); ++i) {
      (entries[i].split == Split::kEval ? f.test : f.train).push_back(i);
    }
    folds.push_back(std::move(f));
    return folds;
  }
  std::set<Split> present;
  for (const auto& e : entries) {
    if (e.split != Split::kTrain) present.insert(e.split);
  }
  if (present.size() < 2) {
    throw InvalidInput("probing needs an eval split or at least two folds of held-out data");
  }
  for (Split held : present) {
    Fold f;
    for (int i = 0; i < static_cast<int>(entries.size()); ++i) {
      (entries[i].split == held ? f.test : f.train).push_back(i);
    }
    folds.push_back(std::move(f));
  }
  return folds;
}

ProbeResult probe_one(int layer, const MatF& x, const std::vector<int>& y, const std::vector<Fold>& folds,
                      int num_classes, const ProbeConfig& config) {
  std::vector<int> predicted, truth;
  for (const Fold& f : folds) {
    MatF train = gather(x, f.train);
    MatF test = gather(x, f.test);
    if (config.standardize) {
      const RowVec<float> mean = train.colwise().mean();
      RowVec<float> sd = ((train.rowwise() - mean).array().square().colwise().mean()).sqrt().matrix();
      for (Eigen::Index k = 0; k < sd.size(); ++k) {
        if (!(sd[k] > 1e-12f)) sd[k] = 1.0f;
      }
      train = (train.rowwise() - mean).array().rowwise() / sd.array();
      test = (test.rowwise() - mean).array().rowwise() / sd.array();
    }
    std::vector<int> ytrain;
    for (int i : f.train) ytrain.push_back(y[i]);
    LinearProbe probe(static_cast<int>(x.cols()), num_classes);
    probe.fit(train, ytrain, config);
    const auto pred = probe.predict(test);
    predicted.insert(predicted.end(), pred.begin(), pred.end());
    for (int i : f.test) truth.push_back(y[i]);
  }
  ProbeResult r;
  r.layer_index = layer;
  long correct = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) correct += predicted[i] == truth[i];
  r.accuracy = static_cast<double>(correct) / static_cast<double>(predicted.size());
  r.per_class_F1 = training::per_class_f1(predicted, truth, num_classes);
  return r;
}

}  // namespace

std::vector<ProbeResult> probe_layers(const CacheStore& store, const std::vector<ManifestEntry>& entries,
                                      int num_classes, int num_layers, const ProbeConfig& config) {
  config.validate();
  if (num_classes < 2) throw InvalidInput("probing needs at least 2 classes, got " + std::to_string(num_classes));
  if (num_layers < 1) throw InvalidInput("probing needs at least one layer");
  if (entries.empty()) throw InvalidInput("probing needs a non-empty manifest");

  std::vector<int> y;
  for (const auto& e : entries) {
    if (e.labels.size() != 1) {
      throw InvalidInput("probe entries need exactly one label; '" + e.utterance_id + "' has " +
                         std::to_string(e.labels.size()));
    }
    if (e.labels[0] < 0 || e.labels[0] >= num_classes) {
      throw InvalidInput("label of '" + e.utterance_id + "' is outside 0.." + std::to_string(num_classes - 1));
    }
    y.push_back(e.labels[0]);
  }
  const auto folds = make_folds(entries);
  for (const auto& f : folds) {
    std::set<int> seen;
    for (int i : f.train) seen.insert(y[i]);
    if (seen.size() < 2) throw InvalidInput("probe training data covers fewer than 2 classes");
    if (f.test.empty()) throw InvalidInput("probe held-out data is empty");
  }

  // Mean-pool every layer once; the stacks themselves are not kept.
  std::vector<MatF> pooled(static_cast<std::size_t>(num_layers));
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const RepresentationStack s = store.read(entries[i].utterance_id);
    if (s.layers() != num_layers) {
      throw InvalidInput("'" + entries[i].utterance_id + "' has " + std::to_string(s.layers()) + " layers, expected " +
                         std::to_string(num_layers));
    }
    for (int l = 0; l < num_layers; ++l) {
      if (i == 0) pooled[l].resize(static_cast<Eigen::Index>(entries.size()), s.dim());
      if (pooled[l].cols() != s.dim()) throw InvalidInput("'" + entries[i].utterance_id + "' has a different width");
      pooled[l].row(static_cast<Eigen::Index>(i)) = s.layer(l).cast<double>().colwise().mean().cast<float>();
    }
  }

  std::vector<ProbeResult> results(static_cast<std::size_t>(num_layers));
  const int threads = std::min(num_layers, config.threads > 0 ? config.threads
                                                               : std::max(1, static_cast<int>(std::thread::hardware_concurrency())));
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (int l = next++; l < num_layers; l = next++) {
      try {
        results[l] = probe_one(l, pooled[l], y, folds, num_classes, config);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return results;
}

std::vector<int> best_layer_histogram(const std::vector<ProbeResult>& probe_results) {
  if (probe_results.empty()) throw InvalidInput("best-layer histogram needs probe results");
  const std::size_t classes = probe_results[0].per_class_F1.size();
  if (classes == 0) throw InvalidInput("probe results carry no per-class F1");
  std::vector<const ProbeResult*> by_layer(probe_results.size(), nullptr);
  for (const auto& r : probe_results) {
    if (r.layer_index < 0 || r.layer_index >= static_cast<int>(probe_results.size()) || by_layer[r.layer_index]) {
      throw InvalidInput("probe results must cover layers 0..L-1 exactly once");
    }
    if (r.per_class_F1.size() != classes) throw InvalidInput("probe results disagree on the class count");
    by_layer[r.layer_index] = &r;
  }
  std::vector<int> counts(probe_results.size(), 0);
  for (std::size_t c = 0; c < classes; ++c) {
    std::size_t best = 0;
    for (std::size_t l = 1; l < by_layer.size(); ++l) {
      if (by_layer[l]->per_class_F1[c] > by_layer[best]->per_class_F1[c]) best = l;
    }
    ++counts[best];
  }
  return counts;
}

}  // namespace layertag::analysis
