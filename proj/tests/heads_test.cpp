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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "layertag/cost.hpp"
#include "layertag/error.hpp"
#include "layertag/heads.hpp"
#include "support/fixtures.hpp"
#include "support/reference_head.hpp"

using namespace layertag;
using namespace layertag::heads;

namespace {

HeadConfig toy_config(Variant v, int layers, int dim, int classes, int pool, std::optional<int> proj = {}) {
  HeadConfig c;
  c.variant = v;
  c.num_classes = classes;
  c.backbone_layers = layers;
  c.backbone_dim = dim;
  c.pool_target = pool;
  c.proj_dim = proj;
  return c;
}

RepresentationStack sequence_stack(const std::vector<float>& values) {
  RepresentationStack s("seq", 1, static_cast<int>(values.size()), 1, 50.0);
  for (std::size_t t = 0; t < values.size(); ++t) s.at(0, static_cast<int>(t), 0) = values[t];
  return s;
}

void expect_near(const std::vector<float>& got, const std::vector<double>& want, double tol) {
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], tol) << "index " << i;
}

}  // namespace

// ---------------------------------------------------------------- temporal_pool

TEST(TemporalPool, FiveHundredFramesToTwentyFive) {
  const auto s = fixtures::random_stack(2, 500, 3, 1);
  const auto p = temporal_pool(s, 25);
  ASSERT_EQ(p.frames(), 25);
  for (int l = 0; l < 2; ++l) {
    for (int t = 0; t < 25; ++t) {
      for (int j = 0; j < 3; ++j) {
        double acc = 0.0;
        for (int f = 20 * t; f < 20 * t + 20; ++f) acc += s.at(l, f, j);
        EXPECT_NEAR(p.at(l, t, j), acc / 20.0, 1e-6);
      }
    }
  }
}

TEST(TemporalPool, TargetEqualToLengthIsIdentity) {
  const auto s = fixtures::random_stack(3, 17, 4, 2);
  const auto p = temporal_pool(s, 17);
  EXPECT_TRUE(std::equal(s.values().begin(), s.values().end(), p.values().begin()));
}

TEST(TemporalPool, ArithmeticMeans) {
  const auto p = temporal_pool(sequence_stack({1, 3, 5, 7}), 2);
  EXPECT_FLOAT_EQ(p.at(0, 0, 0), 2.0F);
  EXPECT_FLOAT_EQ(p.at(0, 1, 0), 6.0F);
}

TEST(TemporalPool, LastWindowAbsorbsRemainder) {
  // k = 2: windows {1,2}, {3,4}, {5,6,7}.
  const auto p = temporal_pool(sequence_stack({1, 2, 3, 4, 5, 6, 7}), 3);
  EXPECT_FLOAT_EQ(p.at(0, 0, 0), 1.5F);
  EXPECT_FLOAT_EQ(p.at(0, 1, 0), 3.5F);
  EXPECT_FLOAT_EQ(p.at(0, 2, 0), 6.0F);
}

TEST(TemporalPool, RejectsTooFewFrames) {
  EXPECT_THROW(temporal_pool(sequence_stack({1, 2}), 3), InvalidInput);
  EXPECT_THROW(temporal_pool(sequence_stack({1, 2}), 0), InvalidInput);
}

// ---------------------------------------------------------------- weighted_average

TEST(WeightedAverage, EqualWeightsGiveLayerMean) {
  const auto s = fixtures::random_stack(4, 5, 3, 3);
  const std::vector<float> w(4, 0.7F);
  const MatF out = weighted_average(s, w);
  for (int t = 0; t < 5; ++t) {
    for (int j = 0; j < 3; ++j) {
      double mean = 0.0;
      for (int l = 0; l < 4; ++l) mean += s.at(l, t, j) / 4.0;
      EXPECT_NEAR(out(t, j), mean, 1e-6);
    }
  }
}

TEST(WeightedAverage, SaturatedWeightsSelectOneLayer) {
  const auto s = fixtures::random_stack(3, 4, 2, 4);
  const std::vector<float> w = {-1e4F, 50.0F, -1e4F};
  const MatF out = weighted_average(s, w);
  EXPECT_TRUE(out.isApprox(s.layer(1), 1e-6F));
}

TEST(WeightedAverage, LogThreeToOneMix) {
  const auto s = fixtures::random_stack(2, 3, 2, 5);
  const std::vector<float> w = {static_cast<float>(std::log(3.0)), 0.0F};
  const MatF out = weighted_average(s, w);
  for (int t = 0; t < 3; ++t) {
    for (int j = 0; j < 2; ++j) {
      EXPECT_NEAR(out(t, j), 0.75 * s.at(0, t, j) + 0.25 * s.at(1, t, j), 1e-6);
    }
  }
}

TEST(WeightedAverage, LengthMismatchRejected) {
  const auto s = fixtures::random_stack(3, 2, 2, 6);
  const std::vector<float> w = {0.0F, 0.0F};
  EXPECT_THROW(weighted_average(s, w), InvalidInput);
}

TEST(WeightedAverage, OutputStaysInsideLayerEnvelope) {
  std::mt19937_64 rng(7);
  std::normal_distribution<float> wdist(0.0F, 3.0F);
  for (int trial = 0; trial < 200; ++trial) {
    const int L = 1 + static_cast<int>(rng() % 6);
    const auto s = fixtures::random_stack(L, 3, 4, 100 + trial, 10.0);
    std::vector<float> w(L);
    for (float& v : w) v = wdist(rng);
    const MatF out = weighted_average(s, w);
    for (int t = 0; t < 3; ++t) {
      for (int j = 0; j < 4; ++j) {
        float lo = s.at(0, t, j);
        float hi = lo;
        for (int l = 1; l < L; ++l) {
          lo = std::min(lo, s.at(l, t, j));
          hi = std::max(hi, s.at(l, t, j));
        }
        EXPECT_GE(out(t, j), lo - 1e-5F);
        EXPECT_LE(out(t, j), hi + 1e-5F);
      }
    }
  }
}

// ---------------------------------------------------------------- Last-MLP

TEST(LastMlp, ZeroClassifierGivesHalfScores) {
  const auto cfg = toy_config(Variant::kLastMlp, 3, 5, 4, 25);
  HeadParams<float> params(cfg);
  const auto logits = forward_last_mlp(fixtures::random_stack(3, 40, 5, 8), params);
  for (float z : logits) EXPECT_EQ(z, 0.0F);
  for (float s : sigmoid(logits)) EXPECT_EQ(s, 0.5F);
}

TEST(LastMlp, ConstantOverTimeMatchesSingleFrame) {
  const auto cfg = toy_config(Variant::kLastMlp, 2, 3, 2, 1);
  HeadParams<float> params(cfg);
  fixtures::randomize(params, 9);
  auto one = fixtures::random_stack(2, 1, 3, 10);
  RepresentationStack many("many", 2, 30, 3, 50.0);
  for (int l = 0; l < 2; ++l) {
    for (int t = 0; t < 30; ++t) {
      for (int j = 0; j < 3; ++j) many.at(l, t, j) = one.at(l, 0, j);
    }
  }
  const auto a = forward_last_mlp(one, params);
  const auto b = forward_last_mlp(many, params);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-6);
}

TEST(LastMlp, MatchesHandComputedProduct) {
  // L=2, n=4, d=3, C=2.
  const auto cfg = toy_config(Variant::kLastMlp, 2, 3, 2, 1);
  HeadParams<float> params(cfg);
  fixtures::randomize(params, 11);
  const auto s = fixtures::random_stack(2, 4, 3, 12);
  const auto w = params.tensor("classifier.weight");
  const auto b = params.tensor("classifier.bias");
  std::vector<double> want(2);
  for (int c = 0; c < 2; ++c) {
    double acc = b[c];
    for (int j = 0; j < 3; ++j) {
      const double mean = (s.at(1, 0, j) + s.at(1, 1, j) + s.at(1, 2, j) + s.at(1, 3, j)) / 4.0;
      acc += mean * w[j * 2 + c];
    }
    want[c] = acc;
  }
  expect_near(forward_last_mlp(s, params), want, 1e-5);
}

TEST(LastMlp, RejectsWrongShapeAndVariant) {
  HeadParams<float> params(toy_config(Variant::kLastMlp, 2, 3, 2, 1));
  EXPECT_THROW(forward_last_mlp(fixtures::random_stack(3, 4, 3, 1), params), InvalidInput);
  EXPECT_THROW(forward_last_mlp(fixtures::random_stack(2, 4, 4, 1), params), InvalidInput);
  EXPECT_THROW(forward_wa_mlp(fixtures::random_stack(2, 4, 3, 1), params), InvalidInput);
}

// ---------------------------------------------------------------- WA-MLP

TEST(WaMlp, UniformWeightsOnIdenticalLayersEqualLastMlp) {
  const int L = 4;
  auto base = fixtures::random_stack(1, 6, 5, 13);
  RepresentationStack s("same", L, 6, 5, 50.0);
  for (int l = 0; l < L; ++l) s.layer(l) = base.layer(0);
  HeadParams<float> wa(toy_config(Variant::kWaMlp, L, 5, 3, 1));
  fixtures::randomize(wa, 14);
  std::fill(wa.tensor("wa.weight").begin(), wa.tensor("wa.weight").end(), 0.0F);
  HeadParams<float> last(toy_config(Variant::kLastMlp, L, 5, 3, 1));
  std::copy_n(wa.tensor("classifier.weight").begin(), 15, last.tensor("classifier.weight").begin());
  std::copy_n(wa.tensor("classifier.bias").begin(), 3, last.tensor("classifier.bias").begin());
  const auto a = forward_wa_mlp(s, wa);
  const auto b = forward_last_mlp(s, last);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-5);
}

TEST(WaMlp, ZeroClassifierGivesHalfScores) {
  HeadParams<float> params(toy_config(Variant::kWaMlp, 3, 4, 5, 1));
  fixtures::randomize(params, 15);
  std::fill(params.tensor("classifier.weight").begin(), params.tensor("classifier.weight").end(), 0.0F);
  std::fill(params.tensor("classifier.bias").begin(), params.tensor("classifier.bias").end(), 0.0F);
  for (float s : sigmoid(forward_wa_mlp(fixtures::random_stack(3, 9, 4, 16), params))) {
    EXPECT_EQ(s, 0.5F);
  }
}

TEST(WaMlp, TwoLayerToyMatchesOracle) {
  HeadParams<float> params(toy_config(Variant::kWaMlp, 2, 3, 2, 1));
  fixtures::randomize(params, 17);
  params.tensor("wa.weight")[0] = static_cast<float>(std::log(3.0));
  params.tensor("wa.weight")[1] = 0.0F;
  const auto s = fixtures::random_stack(2, 4, 3, 18);
  const auto w = params.tensor("classifier.weight");
  const auto b = params.tensor("classifier.bias");
  std::vector<double> want(2);
  for (int c = 0; c < 2; ++c) {
    double acc = b[c];
    for (int j = 0; j < 3; ++j) {
      double mean = 0.0;
      for (int t = 0; t < 4; ++t) mean += (0.75 * s.at(0, t, j) + 0.25 * s.at(1, t, j)) / 4.0;
      acc += mean * w[j * 2 + c];
    }
    want[c] = acc;
  }
  expect_near(forward_wa_mlp(s, params), want, 1e-5);
}

// ---------------------------------------------------------------- WA-Tr

namespace {

// Zeroes the residual-branch output projections so the block passes its input through.
template <typename T>
void make_pass_through(HeadParams<T>& p, const std::string& block) {
  for (const char* name : {".attn.o.weight", ".attn.o.bias", ".ffn.fc2.weight", ".ffn.fc2.bias"}) {
    auto t = p.tensor(block + name);
    std::fill(t.begin(), t.end(), T{0});
  }
}

}  // namespace

TEST(WaTr, PassThroughBlockReducesToWaMlp) {
  const int L = 3, n = 3, D = 4, C = 2;
  HeadParams<float> tr(toy_config(Variant::kWaTr, L, D, C, n));
  fixtures::randomize(tr, 19);
  make_pass_through(tr, "temporal");
  HeadParams<float> mlp(toy_config(Variant::kWaMlp, L, D, C, 1));
  for (const char* name : {"wa.weight", "classifier.weight", "classifier.bias"}) {
    std::copy(tr.tensor(name).begin(), tr.tensor(name).end(), mlp.tensor(name).begin());
  }
  const auto s = fixtures::random_stack(L, n, D, 20);
  const auto a = forward_wa_tr(s, tr);
  const auto b = forward_wa_mlp(s, mlp);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-5);
}

TEST(WaTr, TimePermutationInvariantWithoutPositions) {
  const int L = 2, n = 5, D = 6;
  HeadParams<float> params(toy_config(Variant::kWaTr, L, D, 3, n));
  fixtures::randomize(params, 21);
  const auto s = fixtures::random_stack(L, n, D, 22);
  RepresentationStack permuted = s;
  const int order[] = {3, 0, 4, 1, 2};
  for (int l = 0; l < L; ++l) {
    for (int t = 0; t < n; ++t) permuted.layer(l).row(t) = s.layer(l).row(order[t]);
  }
  const auto a = forward_wa_tr(s, params);
  const auto b = forward_wa_tr(permuted, params);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-5);

  auto with_pos = params.config();
  with_pos.positional_embeddings = true;
  HeadParams<float> positional(with_pos);
  fixtures::randomize(positional, 23);
  const auto c = forward_wa_tr(s, positional);
  const auto d = forward_wa_tr(permuted, positional);
  double diff = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) diff += std::abs(c[i] - d[i]);
  EXPECT_GT(diff, 1e-4);
}

TEST(WaTr, TinyCaseMatchesAttentionOracle) {
  // n' = 3, d' = 4 (no projection).
  HeadParams<double> params(toy_config(Variant::kWaTr, 2, 4, 3, 3));
  fixtures::randomize(params, 24);
  const auto s = fixtures::random_stack(2, 3, 4, 25);
  const RepresentationStack* ptr = &s;
  const Mat<double> got = forward<double>(params, std::span(&ptr, 1));
  const auto want = reference::head_logits(params, s);
  for (int c = 0; c < 3; ++c) EXPECT_NEAR(got(0, c), want[c], 1e-12);
}

// Pooled frames are stored in f32, so oracle cases with raw n != n' agree to
// single-precision rounding of the inputs rather than to double precision.
constexpr double kPooledTol = 1e-7;

TEST(WaTr, ProjectionAndHeadsMatchOracle) {
  auto cfg = toy_config(Variant::kWaTr, 3, 8, 2, 4, 6);
  cfg.attn_heads = 2;
  cfg.positional_embeddings = true;
  HeadParams<double> params(cfg);
  fixtures::randomize(params, 26);
  const auto s = fixtures::random_stack(3, 11, 8, 27);
  const RepresentationStack* ptr = &s;
  const Mat<double> got = forward<double>(params, std::span(&ptr, 1));
  const auto want = reference::head_logits(params, s);
  for (int c = 0; c < 2; ++c) EXPECT_NEAR(got(0, c), want[c], kPooledTol);
}

// ---------------------------------------------------------------- TL-Tr

TEST(TlTr, PassThroughBlocksGiveClassifierOfProjectedMean) {
  const int L = 3, n = 4, D = 6, d = 4, C = 2;
  HeadParams<float> params(toy_config(Variant::kTlTr, L, D, C, n, d));
  fixtures::randomize(params, 28);
  make_pass_through(params, "temporal");
  make_pass_through(params, "layer");
  // Uniform content: every layer and frame carries the same vector.
  RepresentationStack s("uniform", L, n, D, 50.0);
  std::mt19937_64 rng(29);
  std::uniform_real_distribution<float> dist(-1.0F, 1.0F);
  std::vector<float> v(D);
  for (float& x : v) x = dist(rng);
  for (int l = 0; l < L; ++l) {
    for (int t = 0; t < n; ++t) {
      for (int j = 0; j < D; ++j) s.at(l, t, j) = v[j];
    }
  }
  const auto pw = params.tensor("proj.weight");
  const auto pb = params.tensor("proj.bias");
  std::vector<double> projected(d);
  for (int k = 0; k < d; ++k) {
    projected[k] = pb[k];
    for (int j = 0; j < D; ++j) projected[k] += v[j] * pw[j * d + k];
  }
  const auto cw = params.tensor("classifier.weight");
  const auto cb = params.tensor("classifier.bias");
  std::vector<double> want(C);
  for (int c = 0; c < C; ++c) {
    want[c] = cb[c];
    for (int k = 0; k < d; ++k) want[c] += projected[k] * cw[k * C + c];
  }
  expect_near(forward_tl_tr(s, params), want, 1e-5);
}

TEST(TlTr, ToyCaseMatchesFullOracle) {
  // L = 2, n' = 2, d' = 4, projected from D = 5, raw n = 5.
  HeadParams<double> params(toy_config(Variant::kTlTr, 2, 5, 3, 2, 4));
  fixtures::randomize(params, 30);
  const auto s = fixtures::random_stack(2, 5, 5, 31);
  const RepresentationStack* ptr = &s;
  const Mat<double> got = forward<double>(params, std::span(&ptr, 1));
  const auto want = reference::head_logits(params, s);
  for (int c = 0; c < 3; ++c) EXPECT_NEAR(got(0, c), want[c], kPooledTol);
}

TEST(TlTr, PositionalMultiHeadMatchesOracle) {
  auto cfg = toy_config(Variant::kTlTr, 3, 8, 2, 3);
  cfg.attn_heads = 4;
  cfg.positional_embeddings = true;
  HeadParams<double> params(cfg);
  fixtures::randomize(params, 32);
  const auto s = fixtures::random_stack(3, 7, 8, 33);
  const RepresentationStack* ptr = &s;
  const Mat<double> got = forward<double>(params, std::span(&ptr, 1));
  const auto want = reference::head_logits(params, s);
  for (int c = 0; c < 2; ++c) EXPECT_NEAR(got(0, c), want[c], kPooledTol);
}

TEST(TlTr, LargeBackboneShape) {
  HeadConfig cfg;  // defaults: L=32, D=1280, C=527, n'=25
  cfg.proj_dim = 512;
  const auto params = HeadParams<float>::initialized(cfg, 1);
  const auto s = fixtures::random_stack(32, 500, 1280, 34);
  const auto logits = forward_tl_tr(s, params);
  EXPECT_EQ(logits.size(), 527U);
  for (float z : logits) EXPECT_TRUE(std::isfinite(z));
}

TEST(Heads, BatchedForwardMatchesSingleAndIsDeterministic) {
  for (Variant v : {Variant::kLastMlp, Variant::kWaMlp, Variant::kWaTr, Variant::kTlTr}) {
    HeadParams<float> params(toy_config(v, 3, 6, 4, 3, 4));
    fixtures::randomize(params, 35);
    std::vector<RepresentationStack> stacks;
    for (int b = 0; b < 3; ++b) stacks.push_back(fixtures::random_stack(3, 9 + b, 6, 36 + b));
    std::vector<const RepresentationStack*> batch;
    for (const auto& s : stacks) batch.push_back(&s);
    const MatF logits = forward<float>(params, batch);
    const MatF again = forward<float>(params, batch);
    EXPECT_EQ(logits, again) << to_string(v);
    for (int b = 0; b < 3; ++b) {
      const auto single = forward_logits(stacks[b], params);
      for (int c = 0; c < 4; ++c) EXPECT_NEAR(logits(b, c), single[c], 1e-5);
    }
  }
}

TEST(Heads, PreparedInputGivesSameLogits) {
  for (Variant v : {Variant::kLastMlp, Variant::kWaMlp, Variant::kWaTr, Variant::kTlTr}) {
    HeadParams<float> params(toy_config(v, 2, 5, 3, 4));
    fixtures::randomize(params, 40);
    const auto raw = fixtures::random_stack(2, 23, 5, 41);
    const auto prepared = prepare_input(params.config(), raw);
    EXPECT_EQ(prepared.frames(), params.config().prepared_frames());
    EXPECT_EQ(forward_logits(raw, params), forward_logits(prepared, params)) << to_string(v);
  }
}

// ---------------------------------------------------------------- config + params

TEST(HeadConfigTest, ValidationRejectsBadValues) {
  HeadConfig c;
  c.proj_dim = 2048;
  EXPECT_THROW(c.validate(), ConfigError);
  c.proj_dim = 512;
  c.attn_heads = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c.attn_heads = 8;
  EXPECT_NO_THROW(c.validate());
  c.num_classes = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(parse_variant("giant"), ConfigError);
  EXPECT_EQ(parse_variant("TL-Tr"), Variant::kTlTr);
}

TEST(HeadConfigTest, JsonRoundTripAndUnknownKeys) {
  HeadConfig c;
  c.variant = Variant::kWaTr;
  c.proj_dim = 256;
  c.positional_embeddings = true;
  EXPECT_EQ(head_config_from_json(to_json(c)), c);
  auto j = to_json(c);
  j["dropout"] = 0.1;
  EXPECT_THROW(head_config_from_json(j), ConfigError);
}

TEST(HeadParamsTest, InstantiatedCountEqualsAnalyticCount) {
  for (Variant v : {Variant::kLastMlp, Variant::kWaMlp, Variant::kWaTr, Variant::kTlTr}) {
    for (int dim : {128, 256, 512, 768, 1280}) {
      for (bool pos : {false, true}) {
        HeadConfig c;
        c.variant = v;
        if (dim != 1280) c.proj_dim = dim;
        c.positional_embeddings = pos;
        const ParamLayout layout(c);
        EXPECT_EQ(static_cast<std::int64_t>(layout.total()), cost::count_params(c).total)
            << to_string(v) << " d'=" << dim << " pos=" << pos;
      }
    }
  }
}

TEST(HeadParamsTest, DefaultInitStartsAtZeroLogits) {
  HeadConfig c;
  c.backbone_layers = 4;
  c.backbone_dim = 16;
  c.num_classes = 5;
  c.pool_target = 2;
  c.proj_dim = 8;
  const auto p = HeadParams<float>::initialized(c, 3);
  EXPECT_TRUE(p.all_finite());
  for (float z : forward_tl_tr(fixtures::random_stack(4, 6, 16, 4), p)) EXPECT_EQ(z, 0.0F);
  EXPECT_EQ(HeadParams<float>::initialized(c, 3), p);
  EXPECT_NE(HeadParams<float>::initialized(c, 4), p);
}

// ---------------------------------------------------------------- tagging result

TEST(TaggingResultTest, TopKSortedWithIndexTieBreak) {
  const std::vector<float> logits = {0.0F, 2.0F, 0.0F, -1.0F, 2.0F};
  const std::vector<std::string> names = {"a", "b", "c", "d", "e"};
  const auto r = make_tagging_result(logits, names, 4);
  ASSERT_EQ(r.top_k.size(), 4U);
  EXPECT_EQ(r.top_k[0].name, "b");
  EXPECT_EQ(r.top_k[1].name, "e");
  EXPECT_EQ(r.top_k[2].name, "a");
  EXPECT_EQ(r.top_k[3].name, "c");
  for (float s : r.scores) {
    EXPECT_GE(s, 0.0F);
    EXPECT_LE(s, 1.0F);
  }
}

TEST(TaggingResultTest, RandomScoresNonIncreasing) {
  std::mt19937_64 rng(5);
  std::normal_distribution<float> dist(0.0F, 4.0F);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<float> logits(20);
    for (float& z : logits) z = std::round(dist(rng));
    const auto r = make_tagging_result(logits, {}, 20);
    for (std::size_t i = 1; i < r.top_k.size(); ++i) {
      EXPECT_GE(r.top_k[i - 1].score, r.top_k[i].score);
      if (r.top_k[i - 1].score == r.top_k[i].score) EXPECT_LT(r.top_k[i - 1].index, r.top_k[i].index);
    }
  }
}

// ---------------------------------------------------------------- checkpoints

class CheckpointTest : public ::testing::Test {
 protected:
  std::filesystem::path dir_ = std::filesystem::temp_directory_path() / "layertag_ckpt_test";
  void SetUp() override { std::filesystem::create_directories(dir_); }
  void TearDown() override { std::filesystem::remove_all(dir_); }
};

TEST_F(CheckpointTest, RoundTripIsBitExact) {
  auto c = toy_config(Variant::kTlTr, 3, 8, 4, 2, 6);
  c.positional_embeddings = true;
  HeadParams<float> p(c);
  fixtures::randomize(p, 50);
  const auto path = (dir_ / "head.ckpt").string();
  save_checkpoint(path, p, {{"seed", 50}});
  const auto loaded = load_checkpoint(path);
  EXPECT_EQ(loaded.params, p);
  EXPECT_EQ(loaded.meta.at("seed"), 50);
}

TEST_F(CheckpointTest, RejectsForeignAndTruncatedFiles) {
  const auto bogus = (dir_ / "bogus.ckpt").string();
  std::ofstream(bogus) << "not a checkpoint";
  EXPECT_THROW(load_checkpoint(bogus), FormatError);
  EXPECT_THROW(load_checkpoint((dir_ / "missing.ckpt").string()), NotFound);

  HeadParams<float> p(toy_config(Variant::kLastMlp, 2, 3, 2, 1));
  const auto path = (dir_ / "trunc.ckpt").string();
  save_checkpoint(path, p);
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 4);
  EXPECT_THROW(load_checkpoint(path), FormatError);
}

TEST_F(CheckpointTest, RejectsVersionMismatch) {
  HeadParams<float> p(toy_config(Variant::kLastMlp, 2, 3, 2, 1));
  const auto path = (dir_ / "v.ckpt").string();
  save_checkpoint(path, p);
  std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
  f.seekp(4);
  const std::uint32_t bad = 99;
  f.write(reinterpret_cast<const char*>(&bad), 4);
  f.close();
  EXPECT_THROW(load_checkpoint(path), FormatError);
}
