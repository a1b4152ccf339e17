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

// Proposal-pair taxonomy and training-pair sampling.
//
// A pair is "nearby" when the two proposals overlap with IoU >= N_t. Crossed
// with the number of distinct objects the pair contains (0, 1 or 2) this
// gives six cases:
//
//   case  nearby  objects   label
//   1     no      0         -
//   2     no      1         -
//   3     no      2         -
//   4     yes     0         similar    (y = 1)
//   5     yes     1         similar    (y = 1)
//   6     yes     2         dissimilar (y = 0)
//
// Only nearby pairs are used for training.

#ifndef CROWDNMS_PAIRS_H_
#define CROWDNMS_PAIRS_H_

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "crowdnms/geometry.h"
#include "crowdnms/scene.h"

namespace crowdnms {

struct PairLabel {
  int case_id = 0;  // 1..6
  bool nearby = false;
  int object_count = 0;  // 0, 1 or 2
  int y = 1;             // 1 = similar, 0 = dissimilar

  friend bool operator==(const PairLabel&, const PairLabel&) = default;
};

struct PairSample {
  ImageId image_id = 0;
  std::size_t index_i = 0;
  std::size_t index_j = 0;
  RoiFeature roi_i;
  RoiFeature roi_j;
  PairLabel label;
};

struct SamplingConfig {
  std::size_t pairs_per_image = 32;
  // dissimilar : similar
  std::size_t dissimilar_weight = 1;
  std::size_t similar_weight = 3;
  double match_thr = 0.5;
  double nms_thr = 0.5;
  std::size_t roi_size = kDefaultRoiSize;
  std::uint64_t seed = 1;
};

void Validate(const SamplingConfig& cfg);

// Identity of the ground-truth object with the highest IoU to `p`, provided
// that IoU is >= match_thr. Ties go to the lowest object_id.
std::optional<ObjectId> MatchProposalToGt(const ScoredProposal& p,
                                          std::span<const GtObject> gt,
                                          double match_thr);

PairLabel LabelPair(const ScoredProposal& p_i, const ScoredProposal& p_j,
                    std::span<const GtObject> gt, double nms_thr,
                    double match_thr);

// How many of each class to take given the candidate counts. Keeps the
// configured ratio when both classes have enough candidates; otherwise the
// scarce class is taken in full and the other fills the remaining budget.
struct ClassQuota {
  std::size_t dissimilar = 0;
  std::size_t similar = 0;
};
ClassQuota SplitBudget(const SamplingConfig& cfg, std::size_t dissimilar_avail,
                       std::size_t similar_avail);

// Samples nearby pairs from one scene with ROI features attached. Returns an
// empty list when the scene has no nearby pairs. Deterministic in
// (cfg.seed, scene.image_id).
std::vector<PairSample> SampleTrainingPairs(const Scene& scene,
                                            const SamplingConfig& cfg);

}  // namespace crowdnms

#endif  // CROWDNMS_PAIRS_H_
