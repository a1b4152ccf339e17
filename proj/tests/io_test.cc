/* Copyright 2026 The CrowdNMS Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#include "crowdnms/io.h"

#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

namespace crowdnms {
namespace {

// Runs `fn` and returns the FormatError message, or "" if nothing was thrown.
template <typename Fn>
std::string FormatErrorOf(Fn fn) {
  try {
    fn();
  } catch (const FormatError& e) {
    return e.what();
  }
  return "";
}

TEST(JsonlTest, ProposalsRoundTripExactly) {
  const Scene s = GenerateScene(SceneConfig{}, 4);
  std::stringstream ss;
  WriteProposals(ss, s.proposals);
  EXPECT_EQ(ReadProposals(ss, "p.jsonl"), s.proposals);
}

TEST(JsonlTest, GtRoundTripExactly) {
  const Scene s = GenerateScene(SceneConfig{}, 4);
  std::stringstream ss;
  WriteGt(ss, s.gt);
  EXPECT_EQ(ReadGt(ss, "gt.jsonl"), s.gt);
}

TEST(JsonlTest, SceneMetaAndPairsRoundTrip) {
  const std::vector<SceneMeta> meta = {{0, 320, 240}, {7, 640.5, 480}};
  std::stringstream ss;
  WriteSceneMeta(ss, meta);
  EXPECT_EQ(ReadSceneMeta(ss, "s.jsonl"), meta);

  const std::vector<PairRecord> pairs = {{3, 0, 4, 5, 1}, {3, 2, 1, 6, 0}};
  std::stringstream ps;
  WritePairs(ps, pairs);
  EXPECT_EQ(ReadPairs(ps, "pairs.jsonl"), pairs);
}

TEST(JsonlTest, PairRecordFromSample) {
  PairSample s;
  s.image_id = 9;
  s.index_i = 1;
  s.index_j = 5;
  s.label = {6, true, 2, 0};
  EXPECT_EQ(ToRecord(s), (PairRecord{9, 1, 5, 6, 0}));
}

TEST(JsonlTest, DistancesRoundTripGroupedByImage) {
  DistanceMatrix a(1);
  a.Set(0, 3, 0.125);
  a.Set(2, 1, 1.0 / 3.0);
  DistanceMatrix b(4);
  b.Set(5, 6, 0.0);
  std::stringstream ss;
  WriteDistances(ss, a);
  WriteDistances(ss, b);
  const auto got = ReadDistances(ss, "d.jsonl");
  ASSERT_EQ(got.size(), 2u);
  EXPECT_EQ(got.at(1), a);
  EXPECT_EQ(got.at(4), b);
}

TEST(JsonlTest, BlankLinesAreSkipped) {
  std::stringstream ss(
      "\n{\"image_id\":0,\"x\":1,\"y\":2,\"w\":3,\"h\":4,\"score\":0.5}\n  \n");
  const auto p = ReadProposals(ss, "p.jsonl");
  ASSERT_EQ(p.size(), 1u);
  EXPECT_EQ(p[0].box, (Box{1, 2, 3, 4}));
}

TEST(JsonlTest, ErrorsNameSourceAndLine) {
  const std::string good =
      "{\"image_id\":0,\"x\":1,\"y\":2,\"w\":3,\"h\":4,\"score\":0.5}\n";
  auto read = [](const std::string& text) {
    return FormatErrorOf([&] {
      std::stringstream ss(text);
      ReadProposals(ss, "props.jsonl");
    });
  };
  EXPECT_EQ(read(good + "{not json\n").rfind("props.jsonl:2: ", 0), 0u);
  EXPECT_EQ(read(good + good + "[1,2]\n").rfind("props.jsonl:3: ", 0), 0u);
  EXPECT_NE(read("{\"image_id\":0,\"x\":1,\"y\":2,\"w\":3,\"h\":4}\n")
                .find("props.jsonl:1: missing numeric field 'score'"),
            std::string::npos);
  EXPECT_NE(
      read("{\"image_id\":0,\"x\":1,\"y\":2,\"w\":-3,\"h\":4,\"score\":1}\n"),
      "");
  EXPECT_EQ(read(good), "");

  const std::string bad_pair = FormatErrorOf([] {
    std::stringstream ss(
        "{\"image_id\":0,\"i\":0,\"j\":1,\"case_id\":9,\"y\":1}\n");
    ReadPairs(ss, "pairs.jsonl");
  });
  EXPECT_EQ(bad_pair.rfind("pairs.jsonl:1: ", 0), 0u) << bad_pair;

  const std::string bad_dist = FormatErrorOf([] {
    std::stringstream ss("{\"image_id\":0,\"i\":2,\"j\":2,\"dist\":0.5}\n");
    ReadDistances(ss, "d.jsonl");
  });
  EXPECT_EQ(bad_dist.rfind("d.jsonl:1: ", 0), 0u) << bad_dist;
}

TEST(BinaryTest, FeatureGridRoundTripsBitExactly) {
  const Scene s = GenerateScene(SceneConfig{}, 2);
  std::stringstream ss;
  WriteFeatureGrid(ss, s.features);
  const std::string bytes = ss.str();
  ASSERT_EQ(bytes.substr(0, 4), "PWFG");
  const auto& f = s.features;
  EXPECT_EQ(bytes.size(), 4 + 4 * 4 + 8 + 8 * f.values().size());
  // Little-endian version 1 after the magic.
  EXPECT_EQ(bytes.substr(4, 4), std::string("\x01\x00\x00\x00", 4));
  EXPECT_EQ(ReadFeatureGrid(ss, "f.bin"), s.features);
}

TEST(BinaryTest, FeatureGridErrors) {
  EXPECT_NE(FormatErrorOf([] {
              std::stringstream ss("XXXX");
              ReadFeatureGrid(ss, "f.bin");
            }).find("bad magic"),
            std::string::npos);
  const Scene s = GenerateScene(SceneConfig{}, 2);
  std::stringstream full;
  WriteFeatureGrid(full, s.features);
  std::string bytes = full.str();
  std::stringstream cut(bytes.substr(0, bytes.size() - 3));
  EXPECT_NE(
      FormatErrorOf([&] { ReadFeatureGrid(cut, "f.bin"); }).find("truncated"),
      std::string::npos);
  std::stringstream extra(bytes + "z");
  EXPECT_NE(
      FormatErrorOf([&] { ReadFeatureGrid(extra, "f.bin"); }).find("trailing"),
      std::string::npos);
  bytes[4] = '\x02';
  std::stringstream version(bytes);
  EXPECT_NE(FormatErrorOf([&] {
              ReadFeatureGrid(version, "f.bin");
            }).find("unsupported feature grid version"),
            std::string::npos);
}

TEST(BinaryTest, CheckpointRoundTripsBothHeads) {
  for (HeadType head : {HeadType::kGap, HeadType::kFc}) {
    ModelConfig cfg;
    cfg.width = 5;
    cfg.embedding_dim = 7;
    cfg.head = head;
    EmbeddingModel m(cfg, 3);
    m.mutable_running_mean()[2] = 0.25;
    m.mutable_running_var()[4] = 3.5;
    std::stringstream ss;
    WriteCheckpoint(ss, m);
    EXPECT_EQ(ss.str().substr(0, 4), "PWRN");
    const EmbeddingModel back = ReadCheckpoint(ss, "m.bin");
    EXPECT_EQ(back, m);
    EXPECT_EQ(back.config(), cfg);
  }
}

TEST(BinaryTest, CheckpointErrors) {
  EXPECT_NE(FormatErrorOf([] {
              std::stringstream ss("PWFG");
              ReadCheckpoint(ss, "m.bin");
            }).find("bad magic"),
            std::string::npos);
  EmbeddingModel m(ModelConfig{}, 1);
  std::stringstream ss;
  WriteCheckpoint(ss, m);
  std::string bytes = ss.str();
  bytes[4 + 4 * 5] = '\x07';  // head field
  std::stringstream bad(bytes);
  EXPECT_NE(FormatErrorOf([&] {
              ReadCheckpoint(bad, "m.bin");
            }).find("unknown head type"),
            std::string::npos);
}

TEST(FileTest, TextRoundTripAndMissingFile) {
  const auto dir = std::filesystem::temp_directory_path() / "crowdnms_io_test";
  std::filesystem::create_directories(dir);
  WriteTextFile(dir / "a.txt", "hello\nworld\n");
  EXPECT_EQ(ReadTextFile(dir / "a.txt"), "hello\nworld\n");
  EXPECT_THROW(ReadTextFile(dir / "missing.txt"), std::runtime_error);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace crowdnms
