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

#include "layertag/heads.hpp"
#include "support/fixtures.hpp"

using namespace layertag::heads;

namespace {

struct GradCase {
  const char* name;
  Variant variant;
  std::optional<int> proj;
  bool positional;
  int attn_heads;
  int raw_frames;
};

void PrintTo(const GradCase& c, std::ostream* os) { *os << c.name; }

class HeadGradient : public ::testing::TestWithParam<GradCase> {};

TEST_P(HeadGradient, AnalyticMatchesCentralDifferences) {
  const auto& gc = GetParam();
  HeadConfig c;
  c.variant = gc.variant;
  c.backbone_layers = 2;
  c.backbone_dim = 8;
  c.num_classes = 4;
  c.pool_target = 3;
  c.proj_dim = gc.proj;
  c.positional_embeddings = gc.positional;
  c.attn_heads = gc.attn_heads;
  const auto r = fixtures::gradient_check(c, 123, gc.raw_frames);
  EXPECT_EQ(r.failures, 0U) << "worst " << r.worst_tensor << " rel " << r.max_rel_error;
  EXPECT_EQ(r.checked, ParamLayout(c).total());
}

INSTANTIATE_TEST_SUITE_P(
    Variants, HeadGradient,
    ::testing::Values(GradCase{"last_mlp", Variant::kLastMlp, {}, false, 1, 7},
                      GradCase{"wa_mlp", Variant::kWaMlp, {}, false, 1, 7},
                      GradCase{"wa_tr", Variant::kWaTr, {}, false, 1, 3},
                      GradCase{"wa_tr_proj_pos", Variant::kWaTr, 6, true, 2, 7},
                      GradCase{"tl_tr", Variant::kTlTr, {}, false, 1, 3},
                      GradCase{"tl_tr_proj", Variant::kTlTr, 6, false, 1, 7},
                      GradCase{"tl_tr_proj_pos_heads", Variant::kTlTr, 6, true, 2, 7}),
    [](const auto& info) { return std::string(info.param.name); });

}  // namespace
