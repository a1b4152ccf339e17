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

#include <algorithm>
#include <map>
#include <numeric>
#include <stdexcept>

namespace crowdnms {
namespace {

// Stable descending-score order.
std::vector<std::size_t> ScoreOrder(std::span<const ScoredProposal> dets) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return dets[a].score > dets[b].score;
                   });
  return order;
}

struct ImageGroup {
  std::vector<std::size_t> dets;  // indices into the global detection list
  std::vector<std::size_t> gt;    // indices into the global gt list
};

std::map<ImageId, ImageGroup> GroupByImage(std::span<const ScoredProposal> dets,
                                           std::span<const GtObject> gt) {
  std::map<ImageId, ImageGroup> groups;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    groups[dets[i].image_id].dets.push_back(i);
  }
  for (std::size_t i = 0; i < gt.size(); ++i) {
    groups[gt[i].image_id].gt.push_back(i);
  }
  return groups;
}

// Matches one image's detections and writes per-detection flags back into
// the global arrays.
void MatchGroup(const ImageGroup& g, std::span<const ScoredProposal> dets,
                std::span<const GtObject> gt, double eval_thr,
                MatchResult* local, std::vector<Box>* gt_boxes) {
  std::vector<ScoredProposal> d;
  d.reserve(g.dets.size());
  for (std::size_t i : g.dets) d.push_back(dets[i]);
  gt_boxes->clear();
  for (std::size_t i : g.gt) gt_boxes->push_back(gt[i].box);
  *local = MatchDetections(d, *gt_boxes, eval_thr);
}

}  // namespace

std::vector<double> EvalConfig::DefaultEvalThresholds() {
  std::vector<double> v;
  for (int i = 0; i < 10; ++i) v.push_back(0.5 + 0.05 * i);
  return v;
}

std::vector<Bucket> EvalConfig::DefaultBuckets() {
  std::vector<Bucket> v;
  for (int i = 0; i < 10; ++i) {
    v.push_back({0.4 + 0.05 * i, 0.4 + 0.05 * (i + 1)});
  }
  return v;
}

void Validate(const EvalConfig& cfg) {
  for (double t : cfg.eval_thrs) {
    if (!(t > 0.0 && t <= 1.0)) {
      throw std::invalid_argument("evaluation thresholds must lie in (0, 1]");
    }
  }
  if (!(cfg.f1_eval_thr > 0.0 && cfg.f1_eval_thr <= 1.0)) {
    throw std::invalid_argument("F1 evaluation threshold must lie in (0, 1]");
  }
  for (std::size_t i = 0; i < cfg.buckets.size(); ++i) {
    const Bucket& b = cfg.buckets[i];
    if (!(b.lo < b.hi)) throw std::invalid_argument("empty occlusion bucket");
    if (i > 0 && b.lo < cfg.buckets[i - 1].hi) {
      throw std::invalid_argument(
          "occlusion buckets must be disjoint and ordered");
    }
  }
}

MatchResult MatchDetections(std::span<const ScoredProposal> dets,
                            std::span<const Box> gt, double eval_thr) {
  MatchResult r;
  r.det_tp.assign(dets.size(), false);
  r.det_gt.assign(dets.size(), -1);
  r.gt_matched.assign(gt.size(), false);
  for (std::size_t d : ScoreOrder(dets)) {
    int best = -1;
    double best_iou = eval_thr;
    for (std::size_t g = 0; g < gt.size(); ++g) {
      if (r.gt_matched[g]) continue;
      const double v = Iou(dets[d].box, gt[g]);
      if (v >= best_iou && (best < 0 || v > best_iou)) {
        best = static_cast<int>(g);
        best_iou = v;
      }
    }
    if (best >= 0) {
      r.det_tp[d] = true;
      r.det_gt[d] = best;
      r.gt_matched[static_cast<std::size_t>(best)] = true;
    }
  }
  return r;
}

RankedOutcomes RankDetections(std::span<const ScoredProposal> dets,
                              std::span<const GtObject> gt, double eval_thr) {
  std::vector<bool> tp(dets.size(), false);
  MatchResult local;
  std::vector<Box> boxes;
  for (const auto& [id, g] : GroupByImage(dets, gt)) {
    MatchGroup(g, dets, gt, eval_thr, &local, &boxes);
    for (std::size_t k = 0; k < g.dets.size(); ++k) {
      tp[g.dets[k]] = local.det_tp[k];
    }
  }
  RankedOutcomes r;
  r.num_gt = gt.size();
  for (std::size_t i : ScoreOrder(dets)) {
    r.tp.push_back(tp[i]);
    r.score.push_back(dets[i].score);
  }
  return r;
}

std::vector<PrPoint> PrCurve(const RankedOutcomes& r) {
  std::vector<PrPoint> curve;
  curve.reserve(r.tp.size());
  std::size_t tp = 0;
  for (std::size_t k = 0; k < r.tp.size(); ++k) {
    if (r.tp[k]) ++tp;
    PrPoint p;
    p.recall = r.num_gt == 0
                   ? 0.0
                   : static_cast<double>(tp) / static_cast<double>(r.num_gt);
    p.precision = static_cast<double>(tp) / static_cast<double>(k + 1);
    p.score = r.score[k];
    curve.push_back(p);
  }
  return curve;
}

std::optional<double> AveragePrecision(const RankedOutcomes& r,
                                       ApInterpolation interp) {
  if (r.num_gt == 0) return std::nullopt;
  const std::vector<PrPoint> curve = PrCurve(r);
  const std::size_t n = curve.size();
  // Precision envelope: best precision at this rank or any later one.
  std::vector<double> env(n);
  for (std::size_t k = n; k-- > 0;) {
    env[k] = k + 1 < n ? std::max(curve[k].precision, env[k + 1])
                       : curve[k].precision;
  }

  if (interp == ApInterpolation::kAllPoint) {
    double ap = 0.0;
    double prev_recall = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      if (curve[k].recall > prev_recall) {
        ap += (curve[k].recall - prev_recall) * env[k];
        prev_recall = curve[k].recall;
      }
    }
    return ap;
  }

  double sum = 0.0;
  std::size_t k = 0;
  for (int i = 0; i <= 100; ++i) {
    const double level = static_cast<double>(i) / 100.0;
    while (k < n && curve[k].recall < level) ++k;
    if (k < n) sum += env[k];
  }
  return sum / 101.0;
}

std::optional<double> AveragePrecision(std::span<const ScoredProposal> dets,
                                       std::span<const GtObject> gt,
                                       double eval_thr,
                                       ApInterpolation interp) {
  return AveragePrecision(RankDetections(dets, gt, eval_thr), interp);
}

double F1Score(std::size_t tp, std::size_t fp, std::size_t fn) {
  const double p = tp + fp == 0
                       ? 0.0
                       : static_cast<double>(tp) / static_cast<double>(tp + fp);
  const double r = tp + fn == 0
                       ? 0.0
                       : static_cast<double>(tp) / static_cast<double>(tp + fn);
  return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

OcclusionReport F1ByOcclusion(std::span<const ScoredProposal> dets,
                              std::span<const GtObject> gt, double eval_thr,
                              std::span<const Bucket> buckets) {
  OcclusionReport rep;
  rep.eval_thr = eval_thr;
  for (const Bucket& b : buckets) rep.buckets.push_back({b, 0, 0, 0, {}});
  std::vector<std::size_t> gt_count(buckets.size(), 0);

  auto bucket_of = [&](double occ) -> int {
    for (std::size_t b = 0; b < buckets.size(); ++b) {
      if (occ >= buckets[b].lo && occ < buckets[b].hi)
        return static_cast<int>(b);
    }
    return -1;
  };

  MatchResult local;
  std::vector<Box> boxes;
  for (const auto& [id, g] : GroupByImage(dets, gt)) {
    MatchGroup(g, dets, gt, eval_thr, &local, &boxes);
    std::vector<int> gt_bucket(boxes.size(), -1);
    std::vector<Box> others;
    for (std::size_t k = 0; k < boxes.size(); ++k) {
      others.clear();
      for (std::size_t o = 0; o < boxes.size(); ++o) {
        if (o != k) others.push_back(boxes[o]);
      }
      const int b = bucket_of(GtOcclusion(boxes[k], others));
      gt_bucket[k] = b;
      if (b < 0) {
        (local.gt_matched[k] ? rep.remainder_tp : rep.remainder_fn)++;
        continue;
      }
      ++gt_count[static_cast<std::size_t>(b)];
      BucketResult& br = rep.buckets[static_cast<std::size_t>(b)];
      (local.gt_matched[k] ? br.tp : br.fn)++;
    }
    for (std::size_t k = 0; k < g.dets.size(); ++k) {
      if (local.det_tp[k]) continue;
      int best = -1;
      double best_iou = 0.0;
      for (std::size_t o = 0; o < boxes.size(); ++o) {
        const double v = Iou(dets[g.dets[k]].box, boxes[o]);
        if (v > best_iou) {
          best_iou = v;
          best = static_cast<int>(o);
        }
      }
      if (best < 0) continue;
      const int b = gt_bucket[static_cast<std::size_t>(best)];
      if (b >= 0) rep.buckets[static_cast<std::size_t>(b)].fp++;
    }
  }
  for (std::size_t b = 0; b < buckets.size(); ++b) {
    BucketResult& br = rep.buckets[b];
    if (gt_count[b] > 0) br.f1 = F1Score(br.tp, br.fp, br.fn);
  }
  return rep;
}

EvalReport MapOverThresholds(std::span<const ScoredProposal> dets,
                             std::span<const GtObject> gt,
                             const EvalConfig& cfg) {
  Validate(cfg);
  EvalReport rep;
  bool all_present = !cfg.eval_thrs.empty();
  double ap_sum = 0.0;
  for (double thr : cfg.eval_thrs) {
    const RankedOutcomes ranked = RankDetections(dets, gt, thr);
    ThresholdResult t;
    t.eval_thr = thr;
    t.num_det = dets.size();
    t.num_gt = gt.size();
    t.tp = static_cast<std::size_t>(
        std::count(ranked.tp.begin(), ranked.tp.end(), true));
    t.fp = t.num_det - t.tp;
    t.recall = t.num_gt == 0
                   ? 0.0
                   : static_cast<double>(t.tp) / static_cast<double>(t.num_gt);
    t.precision = t.num_det == 0 ? 0.0
                                 : static_cast<double>(t.tp) /
                                       static_cast<double>(t.num_det);
    t.ap = AveragePrecision(ranked, cfg.interpolation);
    t.curve = PrCurve(ranked);
    if (t.ap) {
      ap_sum += *t.ap;
    } else {
      all_present = false;
    }
    rep.thresholds.push_back(std::move(t));
  }
  if (all_present) {
    rep.mean_ap = ap_sum / static_cast<double>(cfg.eval_thrs.size());
  }
  rep.occlusion = F1ByOcclusion(dets, gt, cfg.f1_eval_thr, cfg.buckets);
  return rep;
}

}  // namespace crowdnms
