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

// Non-maximum suppression variants. All of them select proposals in
// descending score order (earlier input wins ties) and return the selected
// proposals in selection order.

#ifndef CROWDNMS_SUPPRESS_H_
#define CROWDNMS_SUPPRESS_H_

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crowdnms/distance_matrix.h"
#include "crowdnms/scene.h"

namespace crowdnms {

enum class NmsMethod { kGreedy, kSoftLinear, kSoftGaussian, kPairwise };

std::string ToString(NmsMethod m);
// Accepts greedy, soft-linear, soft-gaussian, pairwise.
NmsMethod ParseNmsMethod(const std::string& s);

struct SuppressionConfig {
  NmsMethod method = NmsMethod::kGreedy;
  double nms_thr = 0.5;            // N_t
  std::optional<double> dist_thr;  // D_t, pairwise only
  std::optional<double> sigma;     // soft-gaussian only
  double theta = 0.0;              // soft-NMS score filter
};

// Throws std::invalid_argument when a field required by the method is
// missing or out of range.
void Validate(const SuppressionConfig& cfg);

// A kept proposal together with its index in the input list.
struct Kept {
  std::size_t index = 0;
  ScoredProposal proposal;

  friend bool operator==(const Kept&, const Kept&) = default;
};

std::vector<Kept> GreedyNms(std::span<const ScoredProposal> props,
                            double nms_thr);

// Neighbours with IoU >= nms_thr are rescored s * (1 - IoU); after every
// round the remaining proposals scoring below theta are dropped.
std::vector<Kept> SoftNmsLinear(std::span<const ScoredProposal> props,
                                double nms_thr, double theta);

// Every remaining proposal is rescored s * exp(-IoU^2 / sigma).
std::vector<Kept> SoftNmsGaussian(std::span<const ScoredProposal> props,
                                  double sigma, double theta);

// Greedy NMS where a neighbour is removed only if IoU >= nms_thr and its
// distance to the selected proposal is <= dist_thr. Throws
// std::invalid_argument("incomplete distance matrix") when an overlapping
// pair has no entry.
std::vector<Kept> PairwiseNms(std::span<const ScoredProposal> props,
                              double nms_thr, double dist_thr,
                              const DistanceMatrix& dm);

// Dispatches on cfg.method. `dm` is required for kPairwise.
std::vector<Kept> Suppress(std::span<const ScoredProposal> props,
                           const SuppressionConfig& cfg,
                           const DistanceMatrix* dm = nullptr);

// Documented (E_t -> N_t, D_t) operating points for GreedyNMS / Pairwise-NMS.
// The E_t = 0.9 row has N_t = 1, which never suppresses anything.
struct Preset {
  double eval_thr;
  double nms_thr;
  double dist_thr;
};
std::span<const Preset> Presets();
std::optional<Preset> PresetFor(double eval_thr);

}  // namespace crowdnms

#endif  // CROWDNMS_SUPPRESS_H_
