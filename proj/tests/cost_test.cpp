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

#include <cmath>
#include <cstdint>

#include "layertag/cost.hpp"
#include "layertag/error.hpp"

using namespace layertag;
using namespace layertag::cost;
using heads::HeadConfig;
using heads::Variant;

namespace {

HeadConfig tl_tr(int dim) {
  HeadConfig c;
  c.variant = Variant::kTlTr;
  if (dim != c.backbone_dim) c.proj_dim = dim;
  return c;
}

// Independent closed form: block MACs on m tokens of width d with FFN 4d,
// LayerNorm at 5 ops per element.
std::int64_t block_macs(std::int64_t m, std::int64_t d) {
  const std::int64_t h = 4 * d;
  return m * (4 * d * d + 2 * d * h) + 2 * m * m * d + 10 * m * d;
}

std::int64_t block_params(std::int64_t d) { return 12 * d * d + 13 * d; }

}  // namespace

TEST(CountParams, LastMlpIsClassifierOnly) {
  HeadConfig c;
  c.variant = Variant::kLastMlp;
  EXPECT_EQ(count_params(c).total, 1280 * 527 + 527);
  EXPECT_EQ(count_params(c).total, 675087);
}

TEST(CountParams, TlTrClosedForm) {
  for (std::int64_t d : {128, 256, 512, 768}) {
    const std::int64_t want = 1280 * d + d + 2 * block_params(d) + d * 527 + 527;
    EXPECT_EQ(count_params(tl_tr(static_cast<int>(d))).total, want) << d;
  }
  EXPECT_EQ(count_params(tl_tr(1280)).total, 2 * block_params(1280) + 1280 * 527 + 527);
}

TEST(CountParams, PositionalEmbeddingsAddSequenceTimesWidth) {
  auto c = tl_tr(512);
  const auto without = count_params(c).total;
  c.positional_embeddings = true;
  EXPECT_EQ(count_params(c).total - without, (25 + 32) * 512);
}

TEST(CountParams, MatchesPublishedTable) {
  const int dims[] = {128, 256, 512, 768, 1280};
  const double millions[] = {0.6, 2.1, 7.2, 15.6, 40.0};
  for (int i = 0; i < 5; ++i) {
    const double got = static_cast<double>(count_params(tl_tr(dims[i])).total) / 1e6;
    EXPECT_LE(std::abs(got - millions[i]), 0.1) << dims[i] << ": " << got << "M";
  }
}

TEST(CountMacs, MatchesPublishedTable) {
  const int dims[] = {128, 256, 512, 768, 1280};
  const double giga[] = {0.31, 0.94, 3.17, 6.72, 16.42};
  for (int i = 0; i < 5; ++i) {
    const double got = static_cast<double>(count_macs(tl_tr(dims[i])).total) / 1e9;
    EXPECT_LE(std::abs(got - giga[i]) / giga[i], 0.03) << dims[i] << ": " << got << "G";
  }
}

TEST(CountMacs, TlTrClosedForm) {
  for (std::int64_t d : {128, 256, 512, 768}) {
    const std::int64_t want =
        32 * 25 * 1280 * d + 32 * block_macs(25, d) + block_macs(32, d) + d * 527;
    EXPECT_EQ(count_macs(tl_tr(static_cast<int>(d))).total, want) << d;
  }
  EXPECT_EQ(count_macs(tl_tr(512)).total, 3167591936LL);
  EXPECT_EQ(count_macs(tl_tr(1280)).total, 16422931200LL);
}

TEST(CountMacs, OtherVariants) {
  HeadConfig c;
  c.variant = Variant::kLastMlp;
  EXPECT_EQ(count_macs(c).total, 1280 * 527);
  c.variant = Variant::kWaMlp;
  EXPECT_EQ(count_macs(c).total, 32 * 1280 + 1280 * 527);
  c.variant = Variant::kWaTr;
  EXPECT_EQ(count_macs(c).total, 32LL * 25 * 1280 + block_macs(25, 1280) + 1280 * 527);
  EXPECT_EQ(count_params(c).total, 32 + block_params(1280) + 1280 * 527 + 527);
}

TEST(CountMacs, RawFramesOnlyAffectPooling) {
  // Pooling is free, so the raw length does not change the total.
  EXPECT_EQ(count_macs(tl_tr(256), 500).total, count_macs(tl_tr(256), 1500).total);
  EXPECT_THROW(count_macs(tl_tr(256), 10), ConfigError);
}

TEST(CostReportTest, BreakdownSumsToTotals) {
  for (Variant v : {Variant::kLastMlp, Variant::kWaMlp, Variant::kWaTr, Variant::kTlTr}) {
    for (int d : {128, 512, 1280}) {
      auto c = tl_tr(d);
      c.variant = v;
      c.positional_embeddings = (d == 128);
      const auto r = cost_report(c);
      std::int64_t macs = 0;
      std::int64_t params = 0;
      for (const auto& [name, comp] : r.breakdown) {
        macs += comp.macs;
        params += comp.params;
      }
      EXPECT_EQ(macs, r.macs);
      EXPECT_EQ(params, r.params);
      EXPECT_EQ(r.breakdown.size(), std::size(kComponents));
    }
  }
}

TEST(CostReportTest, MonotoneInWidth) {
  for (Variant v : {Variant::kWaTr, Variant::kTlTr}) {
    std::int64_t prev_macs = 0;
    std::int64_t prev_params = 0;
    for (int d : {64, 128, 256, 512, 768, 1024, 1280}) {
      // Dropping the projection at backbone width breaks the ordering for WA_TR.
      if (v == Variant::kWaTr && d == 1280) continue;
      auto c = tl_tr(d);
      c.variant = v;
      const auto r = cost_report(c);
      EXPECT_GT(r.macs, prev_macs);
      EXPECT_GT(r.params, prev_params);
      prev_macs = r.macs;
      prev_params = r.params;
    }
  }
}

TEST(Speedup, ReferenceTagger) {
  EXPECT_NEAR(speedup(cost_report(tl_tr(512)), kReferenceTaggerMacs), 42.0, 0.5);
  HeadConfig last;
  last.variant = Variant::kLastMlp;
  const double s = speedup(cost_report(last), kReferenceTaggerMacs);
  EXPECT_NEAR(s, 133e9 / 674560.0, 1e-6 * s);
  EXPECT_GT(s, 190e3);
  EXPECT_LT(s, 200e3);
}

TEST(Speedup, SelfReferenceIsOne) {
  const auto r = cost_report(tl_tr(256));
  EXPECT_DOUBLE_EQ(speedup(r, static_cast<double>(r.macs)), 1.0);
}

TEST(Speedup, Errors) {
  const auto r = cost_report(tl_tr(256));
  EXPECT_THROW(speedup(r, 0.0), InvalidInput);
  EXPECT_THROW(speedup(r, -1.0), InvalidInput);
  auto zero = r;
  zero.macs = 0;
  EXPECT_THROW(speedup(zero, 1e9), InvalidInput);
}

TEST(CostReportTest, InvalidConfigRejected) {
  auto c = tl_tr(512);
  c.num_classes = 0;
  EXPECT_THROW(count_params(c), ConfigError);
  EXPECT_THROW(count_macs(c), ConfigError);
}

TEST(CostReportTest, JsonAndTable) {
  const auto r = cost_report(tl_tr(512));
  const auto j = to_json(r);
  EXPECT_EQ(j.at("macs").get<std::int64_t>(), r.macs);
  EXPECT_EQ(j.at("params").get<std::int64_t>(), r.params);
  EXPECT_TRUE(j.at("breakdown").contains("temporal_transformer"));
  const auto table = format_table(r);
  EXPECT_NE(table.find("total"), std::string::npos);
  EXPECT_NE(table.find("3.17"), std::string::npos);
}
