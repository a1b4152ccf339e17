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

#include "crowdnms/eval.h"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "oracles.h"
#include "test_util.h"

namespace crowdnms {
namespace {

using oracles::BruteForceAp;
using oracles::Instance;
using oracles::NaiveTp;
using oracles::RandomInstance;
using testing_util::Uniform;

ScoredProposal D(Box b, double s, ImageId img = 0) { return {b, s, img}; }
GtObject G(Box b, ObjectId id = 0, ImageId img = 0) { return {img, id, b}; }

TEST(MatchDetectionsTest, Examples) {
  const std::vector<Box> gt = {{0, 0, 10, 10}};
  const std::vector<ScoredProposal> exact = {D(gt[0], 0.9)};
  MatchResult r = MatchDetections(exact, gt, 0.5);
  EXPECT_EQ(r.det_tp, std::vector<bool>{true});
  EXPECT_EQ(r.gt_matched, std::vector<bool>{true});
  EXPECT_EQ(r.det_gt, std::vector<int>{0});

  const std::vector<ScoredProposal> twice = {D(gt[0], 0.6), D(gt[0], 0.9)};
  r = MatchDetections(twice, gt, 0.5);
  EXPECT_EQ(r.det_tp, (std::vector<bool>{false, true}));

  // IoU 45/100 = 0.45.
  const std::vector<ScoredProposal> weak = {D({0, 0, 10, 4.5}, 0.9)};
  r = MatchDetections(weak, gt, 0.5);
  EXPECT_EQ(r.det_tp, std::vector<bool>{false});
  EXPECT_EQ(r.det_gt, std::vector<int>{-1});
}

TEST(MatchDetectionsTest, TakesHighestIouUnmatchedGt) {
  const std::vector<Box> gt = {{0, 0, 10, 10}, {1, 0, 10, 10}};
  const std::vector<ScoredProposal> d = {D({1, 0, 10, 10}, 0.9),
                                         D({1, 0, 10, 10}, 0.8)};
  const MatchResult r = MatchDetections(d, gt, 0.5);
  EXPECT_EQ(r.det_gt, (std::vector<int>{1, 0}));
}

TEST(AveragePrecisionTest, Examples) {
  const std::vector<GtObject> gt = {G({0, 0, 10, 10})};
  const std::vector<ScoredProposal> perfect = {D({0, 0, 10, 10}, 0.7)};
  EXPECT_EQ(AveragePrecision(perfect, gt, 0.5), 1.0);

  const std::vector<ScoredProposal> fp_first = {D({50, 50, 10, 10}, 0.9),
                                                D({0, 0, 10, 10}, 0.8)};
  EXPECT_DOUBLE_EQ(*AveragePrecision(fp_first, gt, 0.5), 0.5);
  EXPECT_DOUBLE_EQ(
      *AveragePrecision(fp_first, gt, 0.5, ApInterpolation::kAllPoint), 0.5);

  EXPECT_EQ(AveragePrecision({}, gt, 0.5), 0.0);
  EXPECT_FALSE(AveragePrecision(perfect, {}, 0.5).has_value());
}

TEST(AveragePrecisionTest, HalfRecallAtFullPrecision) {
  // 1 of 2 gt found: precision 1 up to recall 0.5, i.e. 51 of 101 levels.
  const std::vector<GtObject> gt = {G({0, 0, 10, 10}, 0),
                                    G({50, 0, 10, 10}, 1)};
  const std::vector<ScoredProposal> d = {D({0, 0, 10, 10}, 0.9)};
  EXPECT_DOUBLE_EQ(*AveragePrecision(d, gt, 0.5), 51.0 / 101.0);
  EXPECT_DOUBLE_EQ(*AveragePrecision(d, gt, 0.5, ApInterpolation::kAllPoint),
                   0.5);
}

TEST(AveragePrecisionTest, TiedScoresRankInInputOrder) {
  const std::vector<GtObject> gt = {G({0, 0, 10, 10})};
  const std::vector<ScoredProposal> tp_first = {D({0, 0, 10, 10}, 0.5),
                                                D({50, 50, 10, 10}, 0.5)};
  const std::vector<ScoredProposal> fp_first = {tp_first[1], tp_first[0]};
  EXPECT_EQ(AveragePrecision(tp_first, gt, 0.5), 1.0);
  EXPECT_DOUBLE_EQ(*AveragePrecision(fp_first, gt, 0.5), 0.5);
}

TEST(AveragePrecisionTest, MatchesBruteForceOracle) {
  std::mt19937_64 rng(12);
  for (int t = 0; t < 500; ++t) {
    const Instance in = RandomInstance(rng);
    for (double thr : {0.3, 0.5, 0.7}) {
      EXPECT_EQ(*AveragePrecision(in.dets, in.gt, thr),
                BruteForceAp(in.dets, in.gt, thr))
          << "trial " << t << " thr " << thr;
    }
  }
}

TEST(AveragePrecisionTest, NonIncreasingInEvalThreshold) {
  std::mt19937_64 rng(13);
  for (int t = 0; t < 500; ++t) {
    const Instance in = RandomInstance(rng);
    double prev = 2.0;
    for (double thr : EvalConfig::DefaultEvalThresholds()) {
      const double ap = *AveragePrecision(in.dets, in.gt, thr);
      EXPECT_LE(ap, prev) << "trial " << t << " thr " << thr;
      prev = ap;
    }
  }
}

TEST(AveragePrecisionTest, TrailingZeroOverlapFalsePositiveNeverHelps) {
  std::mt19937_64 rng(14);
  for (int t = 0; t < 300; ++t) {
    Instance in = RandomInstance(rng);
    const double before = *AveragePrecision(in.dets, in.gt, 0.5);
    in.dets.push_back(D({500, 500, 5, 5}, 0.0, in.gt[0].image_id));
    EXPECT_LE(*AveragePrecision(in.dets, in.gt, 0.5), before);
  }
}

TEST(PrCurveTest, CumulativeCounts) {
  RankedOutcomes r;
  r.tp = {true, false, true};
  r.score = {0.9, 0.8, 0.7};
  r.num_gt = 4;
  const auto c = PrCurve(r);
  ASSERT_EQ(c.size(), 3u);
  EXPECT_DOUBLE_EQ(c[0].recall, 0.25);
  EXPECT_DOUBLE_EQ(c[1].precision, 0.5);
  EXPECT_DOUBLE_EQ(c[2].recall, 0.5);
  EXPECT_DOUBLE_EQ(c[2].precision, 2.0 / 3.0);
  EXPECT_EQ(c[2].score, 0.7);
}

TEST(RankDetectionsTest, MatchesPerImage) {
  // The same box in two images: each matches its own image's gt only.
  const std::vector<GtObject> gt = {G({0, 0, 10, 10}, 0, 1)};
  const std::vector<ScoredProposal> d = {D({0, 0, 10, 10}, 0.9, 2),
                                         D({0, 0, 10, 10}, 0.8, 1)};
  const RankedOutcomes r = RankDetections(d, gt, 0.5);
  EXPECT_EQ(r.tp, (std::vector<bool>{false, true}));
  EXPECT_EQ(r.num_gt, 1u);
}

TEST(MapOverThresholdsTest, PerfectDetectionsScoreOneEverywhere) {
  std::vector<GtObject> gt;
  std::vector<ScoredProposal> d;
  for (int k = 0; k < 5; ++k) {
    gt.push_back(G({k * 30.0, 0, 20, 40}, k));
    d.push_back(D(gt.back().box, 0.5 + 0.1 * k));
  }
  const EvalReport rep = MapOverThresholds(d, gt, EvalConfig{});
  ASSERT_EQ(rep.thresholds.size(), 10u);
  for (const ThresholdResult& t : rep.thresholds) {
    EXPECT_EQ(t.ap, 1.0);
    EXPECT_EQ(t.tp, 5u);
    EXPECT_EQ(t.fp, 0u);
    EXPECT_EQ(t.recall, 1.0);
    EXPECT_EQ(t.precision, 1.0);
  }
  EXPECT_EQ(rep.mean_ap, 1.0);
}

TEST(MapOverThresholdsTest, JitteredDetectionsPassOnlyLooseThresholds) {
  // IoU 0.6 with the gt.
  const std::vector<GtObject> gt = {G({0, 0, 10, 10})};
  const std::vector<ScoredProposal> d = {D({2.5, 0, 10, 10}, 0.9)};
  ASSERT_DOUBLE_EQ(Iou(d[0].box, gt[0].box), 0.6);
  EvalConfig cfg;
  cfg.eval_thrs = {0.5, 0.7};
  const EvalReport rep = MapOverThresholds(d, gt, cfg);
  EXPECT_EQ(rep.thresholds[0].ap, 1.0);
  EXPECT_EQ(rep.thresholds[1].ap, 0.0);
  EXPECT_EQ(rep.mean_ap, 0.5);
}

TEST(MapOverThresholdsTest, NoGroundTruthGivesAbsentAp) {
  const std::vector<ScoredProposal> d = {D({0, 0, 10, 10}, 0.9)};
  const EvalReport rep = MapOverThresholds(d, {}, EvalConfig{});
  for (const ThresholdResult& t : rep.thresholds) {
    EXPECT_FALSE(t.ap.has_value());
    EXPECT_EQ(t.fp, 1u);
    EXPECT_EQ(t.recall, 0.0);
  }
  EXPECT_FALSE(rep.mean_ap.has_value());
}

TEST(MapOverThresholdsTest, CountsAreConsistent) {
  std::mt19937_64 rng(15);
  for (int t = 0; t < 100; ++t) {
    const Instance in = RandomInstance(rng);
    const EvalReport rep = MapOverThresholds(in.dets, in.gt, EvalConfig{});
    for (const ThresholdResult& r : rep.thresholds) {
      EXPECT_LE(r.tp, r.num_det);
      EXPECT_LE(r.tp, r.num_gt);
      EXPECT_EQ(r.tp + r.fp, r.num_det);
      EXPECT_DOUBLE_EQ(r.recall, static_cast<double>(r.tp) / r.num_gt);
      EXPECT_EQ(r.curve.size(), r.num_det);
    }
  }
}

TEST(EvalConfigTest, DefaultsAndValidation) {
  const auto thr = EvalConfig::DefaultEvalThresholds();
  ASSERT_EQ(thr.size(), 10u);
  EXPECT_DOUBLE_EQ(thr.front(), 0.5);
  EXPECT_DOUBLE_EQ(thr.back(), 0.95);
  const auto b = EvalConfig::DefaultBuckets();
  ASSERT_EQ(b.size(), 10u);
  EXPECT_DOUBLE_EQ(b.front().lo, 0.4);
  EXPECT_DOUBLE_EQ(b.back().hi, 0.9);
  EXPECT_NO_THROW(Validate(EvalConfig{}));
  EvalConfig cfg;
  cfg.eval_thrs = {0.0};
  EXPECT_THROW(Validate(cfg), std::invalid_argument);
  cfg = EvalConfig{};
  cfg.buckets = {{0.5, 0.6}, {0.55, 0.7}};
  EXPECT_THROW(Validate(cfg), std::invalid_argument);
  cfg.buckets = {{0.5, 0.5}};
  EXPECT_THROW(Validate(cfg), std::invalid_argument);
}

TEST(F1ScoreTest, Examples) {
  EXPECT_EQ(F1Score(2, 0, 0), 1.0);
  EXPECT_DOUBLE_EQ(F1Score(1, 0, 1), 2.0 / 3.0);
  EXPECT_EQ(F1Score(0, 3, 2), 0.0);
  EXPECT_EQ(F1Score(0, 0, 0), 0.0);
}

// gt pair at IoU 80/120 = 0.667, bucket [0.65, 0.70).
const std::vector<GtObject> kPair = {G({0, 0, 10, 10}, 0),
                                     G({2, 0, 10, 10}, 1)};

TEST(F1ByOcclusionTest, BothDetected) {
  const std::vector<ScoredProposal> d = {D(kPair[0].box, 0.9),
                                         D(kPair[1].box, 0.8)};
  const OcclusionReport r =
      F1ByOcclusion(d, kPair, 0.5, EvalConfig::DefaultBuckets());
  for (std::size_t b = 0; b < r.buckets.size(); ++b) {
    if (b == 5) {
      EXPECT_EQ(r.buckets[b].f1, 1.0);
      EXPECT_EQ(r.buckets[b].tp, 2u);
    } else {
      EXPECT_FALSE(r.buckets[b].f1.has_value());
    }
  }
}

TEST(F1ByOcclusionTest, OneMissed) {
  const std::vector<ScoredProposal> d = {D(kPair[0].box, 0.9)};
  const OcclusionReport r =
      F1ByOcclusion(d, kPair, 0.5, EvalConfig::DefaultBuckets());
  EXPECT_DOUBLE_EQ(*r.buckets[5].f1, 2.0 / 3.0);
  EXPECT_EQ(r.buckets[5].fn, 1u);
}

TEST(F1ByOcclusionTest, FalsePositiveGoesToBestOverlappingGtBucket) {
  const std::vector<ScoredProposal> d = {
      D(kPair[0].box, 0.9), D(kPair[1].box, 0.8), D({2.5, 0, 10, 10}, 0.7),
      D({90, 90, 5, 5}, 0.6)};
  const OcclusionReport r =
      F1ByOcclusion(d, kPair, 0.5, EvalConfig::DefaultBuckets());
  EXPECT_EQ(r.buckets[5].fp, 1u);
  EXPECT_DOUBLE_EQ(*r.buckets[5].f1, F1Score(2, 1, 0));
}

TEST(F1ByOcclusionTest, IsolatedObjectsLeaveBucketsEmpty) {
  const std::vector<GtObject> gt = {G({0, 0, 10, 10}, 0),
                                    G({50, 0, 10, 10}, 1)};
  const std::vector<ScoredProposal> d = {D(gt[0].box, 0.9)};
  const OcclusionReport r =
      F1ByOcclusion(d, gt, 0.5, EvalConfig::DefaultBuckets());
  for (const BucketResult& b : r.buckets) EXPECT_FALSE(b.f1.has_value());
  EXPECT_EQ(r.remainder_tp, 1u);
  EXPECT_EQ(r.remainder_fn, 1u);
}

TEST(F1ByOcclusionTest, BucketCountsCoverAllGt) {
  for (int i = 0; i < 30; ++i) {
    const Scene s = GenerateScene(SceneConfig{}, i);
    const OcclusionReport r =
        F1ByOcclusion(s.proposals, s.gt, 0.5, EvalConfig::DefaultBuckets());
    std::size_t total = r.remainder_tp + r.remainder_fn;
    for (const BucketResult& b : r.buckets) total += b.tp + b.fn;
    EXPECT_EQ(total, s.gt.size());
  }
}

}  // namespace
}  // namespace crowdnms
