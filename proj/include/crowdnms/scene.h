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

// Synthetic crowded scenes: ground-truth boxes with a controlled occlusion
// profile, scored proposals jittered around them, and a feature grid in which
// every object paints its own identity signature.

#ifndef CROWDNMS_SCENE_H_
#define CROWDNMS_SCENE_H_

#include <cstdint>
#include <vector>

#include "crowdnms/geometry.h"

namespace crowdnms {

using ImageId = std::int64_t;
using ObjectId = std::int64_t;

struct ScoredProposal {
  Box box;
  double score = 0.0;
  ImageId image_id = 0;

  friend bool operator==(const ScoredProposal&,
                         const ScoredProposal&) = default;
};

struct GtObject {
  ImageId image_id = 0;
  ObjectId object_id = 0;
  Box box;

  friend bool operator==(const GtObject&, const GtObject&) = default;
};

struct Scene {
  ImageId image_id = 0;
  double width = 0.0;
  double height = 0.0;
  std::vector<GtObject> gt;
  std::vector<ScoredProposal> proposals;
  FeatureGrid features;

  friend bool operator==(const Scene&, const Scene&) = default;
};

// Closed interval [lo, hi].
struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

struct SceneConfig {
  std::uint64_t seed = 1;

  double image_width = 320.0;
  double image_height = 240.0;
  double stride = 8.0;
  std::size_t channels = 8;

  int objects_min = 2;
  int objects_max = 4;
  // Target IoU of the designated occluded pair (objects 0 and 1).
  Range occlusion{0.5, 0.8};
  // Every other object keeps IoU at most this with all previously placed ones.
  double background_max_iou = 0.3;

  Range object_width{40.0, 72.0};
  Range aspect{1.8, 2.4};  // height / width
  Range pair_scale{0.85, 1.15};

  int proposals_per_object = 8;
  double center_jitter = 0.01;  // std-dev, fraction of box size
  double size_jitter = 0.01;    // std-dev of log-size
  double min_proposal_iou = 0.3;

  double score_floor = 0.2;  // base score at IoU 0
  double score_noise = 0.05;

  double signature_strength = 1.0;
  double signature_sharpness = 0.1;  // softmax temperature on box distance
  double noise_strength = 0.1;

  int max_retries = 1000;
};

// Throws std::invalid_argument for inconsistent ranges or non-positive sizes.
void Validate(const SceneConfig& cfg);

// Deterministic in (cfg.seed, index). The scene's image_id equals `index`.
// Throws std::runtime_error("placement failed") when the occlusion target
// cannot be met within cfg.max_retries attempts.
Scene GenerateScene(const SceneConfig& cfg, std::int64_t index);

// Per-object signature vectors used when painting the scene (same order as
// scene.gt). Regenerated from (cfg, index); exposed for learnability checks.
std::vector<std::vector<double>> SceneSignatures(const SceneConfig& cfg,
                                                 std::int64_t index,
                                                 std::size_t object_count);

// Perfect stand-in for the learned distance: 1 when the two proposals match
// two distinct ground-truth objects, else 0. Throws std::invalid_argument if
// either proposal belongs to another image.
double OracleDistance(const ScoredProposal& p_i, const ScoredProposal& p_j,
                      const Scene& scene, double match_thr = 0.5);

}  // namespace crowdnms

#endif  // CROWDNMS_SCENE_H_
