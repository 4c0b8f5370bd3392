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

#include <fstream>

#include "layertag/error.hpp"
#include "layertag/manifest.hpp"
#include "support/temp_dir.hpp"

using namespace layertag;
using namespace layertag::training;

namespace {

void write_file(const std::filesystem::path& p, const std::string& text) { std::ofstream(p) << text; }

ClassMap animals() { return ClassMap({"dog", "cat", "rain"}); }

template <typename F>
std::string error_of(F&& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Manifest, ThreeWellFormedLines) {
  fixtures::TempDir dir;
  write_file(dir / "m.jsonl",
             R"({"utterance_id":"a","audio_path":"a.wav","duration_s":5,"labels":["dog"],"split":"train"})"
             "\n"
             R"({"utterance_id":"b","audio_path":"/abs/b.wav","duration_s":2.5,"labels":["rain","cat","rain"],"split":"eval"})"
             "\n\n"
             R"({"utterance_id":"c","audio_path":"c.wav","duration_s":1,"labels":[2],"split":"fold3"})"
             "\n");
  const auto entries = ingest_manifest(dir / "m.jsonl", animals());
  ASSERT_EQ(entries.size(), 3U);
  EXPECT_EQ(entries[0].audio_path, (dir / "a.wav").string());
  EXPECT_EQ(entries[1].audio_path, "/abs/b.wav");
  EXPECT_EQ(entries[1].labels, (std::vector<int>{1, 2}));
  EXPECT_EQ(entries[1].split, Split::kEval);
  EXPECT_EQ(entries[2].split, Split::kFold3);
  EXPECT_EQ(entries[2].labels, std::vector<int>{2});
}

TEST(Manifest, MissingLabelsReportsLine) {
  fixtures::TempDir dir;
  write_file(dir / "m.jsonl",
             R"({"utterance_id":"a","audio_path":"a.wav","duration_s":5,"labels":["dog"]})"
             "\n"
             R"({"utterance_id":"b","audio_path":"b.wav","duration_s":5,"split":"train"})"
             "\n");
  const auto msg = error_of([&] { ingest_manifest(dir / "m.jsonl", animals()); });
  EXPECT_NE(msg.find("m.jsonl:2:"), std::string::npos) << msg;
  EXPECT_NE(msg.find("labels"), std::string::npos) << msg;
  EXPECT_THROW(ingest_manifest(dir / "m.jsonl", animals()), FormatError);
  ManifestOptions speech;
  speech.require_labels = false;
  EXPECT_EQ(ingest_manifest(dir / "m.jsonl", animals(), speech).size(), 2U);
}

TEST(Manifest, UnknownLabelNamed) {
  fixtures::TempDir dir;
  write_file(dir / "m.jsonl", R"({"utterance_id":"a","audio_path":"a.wav","duration_s":5,"labels":["horse"]})");
  const auto msg = error_of([&] { ingest_manifest(dir / "m.jsonl", animals()); });
  EXPECT_NE(msg.find("horse"), std::string::npos) << msg;
  EXPECT_NE(msg.find(":1:"), std::string::npos) << msg;
}

TEST(Manifest, MalformedLinesRejected) {
  fixtures::TempDir dir;
  const std::string bad[] = {
      "{not json",
      R"({"utterance_id":"a","audio_path":"a.wav","duration_s":0,"labels":["dog"]})",
      R"({"utterance_id":"a","audio_path":"a.wav","duration_s":1,"labels":[7]})",
      R"({"utterance_id":"a","audio_path":"a.wav","duration_s":1,"labels":["dog"],"split":"fold9"})",
      R"({"utterance_id":"a","audio_path":"a.wav","duration_s":1,"labels":["dog"],"colour":"red"})",
      R"({"audio_path":"a.wav","duration_s":1,"labels":["dog"]})",
      R"({"utterance_id":"a","audio_path":"a.wav","duration_s":"long","labels":["dog"]})",
      "[1,2]",
  };
  for (const auto& line : bad) {
    write_file(dir / "m.jsonl", line + "\n");
    EXPECT_THROW(ingest_manifest(dir / "m.jsonl", animals()), FormatError) << line;
  }
  write_file(dir / "m.jsonl",
             R"({"utterance_id":"a","audio_path":"a.wav","duration_s":1,"labels":["dog"]})"
             "\n"
             R"({"utterance_id":"a","audio_path":"b.wav","duration_s":1,"labels":["cat"]})"
             "\n");
  EXPECT_NE(error_of([&] { ingest_manifest(dir / "m.jsonl", animals()); }).find("duplicate"), std::string::npos);
  EXPECT_THROW(ingest_manifest(dir / "absent.jsonl", animals()), NotFound);
}

TEST(Manifest, WriteThenIngestRoundTrips) {
  fixtures::TempDir dir;
  std::vector<ManifestEntry> entries(2);
  entries[0] = {"x", "/data/x.wav", 3.0, {0, 2}, Split::kTrain, std::nullopt};
  entries[1] = {"y", "/data/y.wav", 4.0, {1}, Split::kFold5, std::string("hello world")};
  write_manifest(dir / "m.jsonl", entries, animals());
  const auto back = ingest_manifest(dir / "m.jsonl", animals());
  ASSERT_EQ(back.size(), 2U);
  EXPECT_EQ(back[0].labels, entries[0].labels);
  EXPECT_EQ(back[1].transcript, entries[1].transcript);
  EXPECT_EQ(back[1].split, Split::kFold5);
}

TEST(ClassMapTest, JsonRoundTripAndValidation) {
  fixtures::TempDir dir;
  save_class_map(dir / "classes.json", animals());
  const auto back = load_class_map(dir / "classes.json");
  EXPECT_EQ(back.names(), animals().names());
  EXPECT_EQ(back.index("rain"), 2);
  EXPECT_THROW(back.index("snow"), InvalidInput);
  write_file(dir / "gap.json", R"({"a":0,"b":2})");
  EXPECT_THROW(load_class_map(dir / "gap.json"), FormatError);
  write_file(dir / "dup.json", R"({"a":0,"b":0})");
  EXPECT_THROW(load_class_map(dir / "dup.json"), FormatError);
}

TEST(Esc50, ConvertsOfficialMetadataLayout) {
  fixtures::TempDir dir;
  std::ofstream csv(dir / "esc50.csv");
  csv << "filename,fold,target,category,esc10,src_file,take\n";
  const char* categories[] = {"dog", "rooster", "pig", "cow", "frog"};
  // 50 classes x 40 clips, 8 per fold per class, as in the official release.
  int written = 0;
  for (int target = 0; target < 50; ++target) {
    for (int clip = 0; clip < 40; ++clip) {
      const int fold = 1 + clip / 8;
      csv << fold << "-" << 100000 + written << "-A-" << target << ".wav," << fold << "," << target << ","
          << (target < 5 ? categories[target] : "class_" + std::to_string(target)) << ","
          << (target < 5 ? "True" : "False") << "," << 100000 + written << ",A\n";
      ++written;
    }
  }
  csv.close();
  const auto ds = convert_esc50(dir / "esc50.csv", dir / "audio");
  EXPECT_EQ(ds.entries.size(), 2000U);
  EXPECT_EQ(ds.classes.size(), 50);
  EXPECT_EQ(ds.classes.name(1), "rooster");
  for (int k = 1; k <= 5; ++k) EXPECT_EQ(select_split(ds.entries, fold_split(k)).size(), 400U);
  EXPECT_EQ(ds.entries.front().duration_s, 5.0);
  EXPECT_EQ(ds.entries.front().audio_path, (dir / "audio" / "1-100000-A-0.wav").string());
  EXPECT_EQ(ds.entries.front().utterance_id, "1-100000-A-0");
}

TEST(Esc50, RejectsBadMetadata) {
  fixtures::TempDir dir;
  write_file(dir / "a.csv", "filename,target,category\nx.wav,0,dog\n");
  EXPECT_THROW(convert_esc50(dir / "a.csv", dir.path()), FormatError);
  write_file(dir / "b.csv", "filename,fold,target,category\nx.wav,6,0,dog\n");
  EXPECT_THROW(convert_esc50(dir / "b.csv", dir.path()), FormatError);
  write_file(dir / "c.csv", "filename,fold,target,category\nx.wav,1,1,dog\n");
  EXPECT_THROW(convert_esc50(dir / "c.csv", dir.path()), FormatError);
}
