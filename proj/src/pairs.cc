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

#include "crowdnms/pairs.h"

#include <algorithm>
#include <random>
#include <stdexcept>
#include <utility>

namespace crowdnms {

void Validate(const SamplingConfig& cfg) {
  if (cfg.dissimilar_weight == 0 || cfg.similar_weight == 0) {
    throw std::invalid_argument("sampling ratio terms must be positive");
  }
  if (!(cfg.match_thr > 0.0 && cfg.match_thr <= 1.0) ||
      !(cfg.nms_thr > 0.0 && cfg.nms_thr <= 1.0)) {
    throw std::invalid_argument("thresholds must lie in (0, 1]");
  }
  if (cfg.roi_size == 0) throw std::invalid_argument("roi size must be > 0");
}

std::optional<ObjectId> MatchProposalToGt(const ScoredProposal& p,
                                          std::span<const GtObject> gt,
                                          double match_thr) {
  std::optional<ObjectId> best_id;
  double best_iou = -1.0;
  for (const GtObject& g : gt) {
    const double v = Iou(p.box, g.box);
    if (v > best_iou || (v == best_iou && best_id && g.object_id < *best_id)) {
      best_iou = v;
      best_id = g.object_id;
    }
  }
  if (!best_id || best_iou < match_thr) return std::nullopt;
  return best_id;
}

PairLabel LabelPair(const ScoredProposal& p_i, const ScoredProposal& p_j,
                    std::span<const GtObject> gt, double nms_thr,
                    double match_thr) {
  const auto a = MatchProposalToGt(p_i, gt, match_thr);
  const auto b = MatchProposalToGt(p_j, gt, match_thr);
  PairLabel label;
  label.object_count = (a ? 1 : 0) + (b ? 1 : 0);
  if (a && b && *a == *b) label.object_count = 1;
  label.nearby = Iou(p_i.box, p_j.box) >= nms_thr;
  label.case_id = (label.nearby ? 4 : 1) + label.object_count;
  label.y = (label.nearby && label.object_count == 2) ? 0 : 1;
  return label;
}

ClassQuota SplitBudget(const SamplingConfig& cfg, std::size_t dissimilar_avail,
                       std::size_t similar_avail) {
  const std::size_t budget = cfg.pairs_per_image;
  const std::size_t dis_target = budget * cfg.dissimilar_weight /
                                 (cfg.dissimilar_weight + cfg.similar_weight);
  const std::size_t sim_target = budget - dis_target;
  ClassQuota q;
  if (dissimilar_avail < dis_target) {
    q.dissimilar = dissimilar_avail;
    q.similar = std::min(similar_avail, budget - q.dissimilar);
  } else if (similar_avail < sim_target) {
    q.similar = similar_avail;
    q.dissimilar = std::min(dissimilar_avail, budget - q.similar);
  } else {
    q.dissimilar = dis_target;
    q.similar = sim_target;
  }
  return q;
}

std::vector<PairSample> SampleTrainingPairs(const Scene& scene,
                                            const SamplingConfig& cfg) {
  Validate(cfg);
  using Candidate = std::pair<std::size_t, std::size_t>;
  std::vector<Candidate> dissimilar;
  std::vector<Candidate> similar;
  const auto& props = scene.proposals;
  for (std::size_t i = 0; i < props.size(); ++i) {
    for (std::size_t j = i + 1; j < props.size(); ++j) {
      if (Iou(props[i].box, props[j].box) < cfg.nms_thr) continue;
      const PairLabel l =
          LabelPair(props[i], props[j], scene.gt, cfg.nms_thr, cfg.match_thr);
      (l.y == 0 ? dissimilar : similar).emplace_back(i, j);
    }
  }

  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed),
                    static_cast<std::uint32_t>(cfg.seed >> 32),
                    static_cast<std::uint32_t>(scene.image_id),
                    static_cast<std::uint32_t>(
                        static_cast<std::uint64_t>(scene.image_id) >> 32)};
  std::mt19937_64 rng(seq);
  std::shuffle(dissimilar.begin(), dissimilar.end(), rng);
  std::shuffle(similar.begin(), similar.end(), rng);

  const ClassQuota q = SplitBudget(cfg, dissimilar.size(), similar.size());
  std::vector<Candidate> chosen(dissimilar.begin(),
                                dissimilar.begin() + q.dissimilar);
  chosen.insert(chosen.end(), similar.begin(), similar.begin() + q.similar);
  std::shuffle(chosen.begin(), chosen.end(), rng);

  std::vector<PairSample> out;
  out.reserve(chosen.size());
  for (const auto& [i, j] : chosen) {
    PairSample s;
    s.image_id = scene.image_id;
    s.index_i = i;
    s.index_j = j;
    s.roi_i = RoiAlign(scene.features, props[i].box, cfg.roi_size);
    s.roi_j = RoiAlign(scene.features, props[j].box, cfg.roi_size);
    s.label =
        LabelPair(props[i], props[j], scene.gt, cfg.nms_thr, cfg.match_thr);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace crowdnms
