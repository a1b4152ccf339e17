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

// COCO-style detection evaluation: greedy one-to-one matching by score,
// interpolated average precision, and F1 stratified by ground-truth
// occlusion.

#ifndef CROWDNMS_EVAL_H_
#define CROWDNMS_EVAL_H_

#include <optional>
#include <span>
#include <vector>

#include "crowdnms/scene.h"

namespace crowdnms {

enum class ApInterpolation { kCoco101, kAllPoint };

// Half-open occlusion interval [lo, hi).
struct Bucket {
  double lo = 0.0;
  double hi = 0.0;
};

struct EvalConfig {
  std::vector<double> eval_thrs = DefaultEvalThresholds();
  std::vector<Bucket> buckets = DefaultBuckets();
  double f1_eval_thr = 0.5;
  ApInterpolation interpolation = ApInterpolation::kCoco101;

  // 0.50, 0.55, ..., 0.95
  static std::vector<double> DefaultEvalThresholds();
  // [0.40, 0.45), [0.45, 0.50), ..., [0.85, 0.90)
  static std::vector<Bucket> DefaultBuckets();
};

// Throws std::invalid_argument for thresholds outside (0, 1] or buckets that
// overlap or are out of order.
void Validate(const EvalConfig& cfg);

// Result of matching the detections of one image.
struct MatchResult {
  std::vector<bool> det_tp;      // per detection, input order
  std::vector<int> det_gt;       // matched gt index or -1
  std::vector<bool> gt_matched;  // per gt
};

// Detections are visited in descending score order (input order on ties);
// each takes the unmatched gt with highest IoU if that IoU >= eval_thr.
MatchResult MatchDetections(std::span<const ScoredProposal> dets,
                            std::span<const Box> gt, double eval_thr);

struct PrPoint {
  double recall = 0.0;
  double precision = 0.0;
  double score = 0.0;
};

// Detection-level outcome across all images, in global descending score
// order.
struct RankedOutcomes {
  std::vector<bool> tp;
  std::vector<double> score;
  std::size_t num_gt = 0;
};

RankedOutcomes RankDetections(std::span<const ScoredProposal> dets,
                              std::span<const GtObject> gt, double eval_thr);

std::vector<PrPoint> PrCurve(const RankedOutcomes& r);

// Interpolated AP from a ranked list. Absent when there is no ground truth.
std::optional<double> AveragePrecision(
    const RankedOutcomes& r,
    ApInterpolation interp = ApInterpolation::kCoco101);

// Convenience: rank then integrate. Detections and gt may span many images.
std::optional<double> AveragePrecision(
    std::span<const ScoredProposal> dets, std::span<const GtObject> gt,
    double eval_thr, ApInterpolation interp = ApInterpolation::kCoco101);

struct ThresholdResult {
  double eval_thr = 0.0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t num_det = 0;
  std::size_t num_gt = 0;
  double recall = 0.0;     // tp / num_gt, 0 when num_gt == 0
  double precision = 0.0;  // tp / num_det, 0 when num_det == 0
  std::optional<double> ap;
  std::vector<PrPoint> curve;
};

struct BucketResult {
  Bucket bucket;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::optional<double> f1;  // absent when the bucket holds no gt
};

struct OcclusionReport {
  double eval_thr = 0.5;
  std::vector<BucketResult> buckets;
  // Ground truth whose occlusion falls outside every bucket.
  std::size_t remainder_tp = 0;
  std::size_t remainder_fn = 0;
};

struct EvalReport {
  std::vector<ThresholdResult> thresholds;
  std::optional<double> mean_ap;  // absent if any AP is absent
  OcclusionReport occlusion;
};

// Each gt is assigned to the bucket containing its maximum IoU with the other
// gt boxes of its image. Unmatched detections count as FP for the bucket of
// their best-overlapping gt (if they overlap any).
OcclusionReport F1ByOcclusion(std::span<const ScoredProposal> dets,
                              std::span<const GtObject> gt, double eval_thr,
                              std::span<const Bucket> buckets);

EvalReport MapOverThresholds(std::span<const ScoredProposal> dets,
                             std::span<const GtObject> gt,
                             const EvalConfig& cfg);

// 2PR / (P + R), 0 when P + R == 0.
double F1Score(std::size_t tp, std::size_t fp, std::size_t fn);

}  // namespace crowdnms

#endif  // CROWDNMS_EVAL_H_
