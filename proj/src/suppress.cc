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

#include "crowdnms/suppress.h"

#include <array>
#include <cmath>
#include <stdexcept>

namespace crowdnms {
namespace {

// Index into `alive` of the highest-scoring entry; first one wins ties.
std::size_t ArgMax(const std::vector<std::size_t>& alive,
                   const std::vector<double>& scores) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < alive.size(); ++k) {
    if (scores[alive[k]] > scores[alive[best]]) best = k;
  }
  return best;
}

std::vector<std::size_t> AllIndices(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

// Shared loop for the hard-suppression variants: `suppress(m, i)` decides
// whether remaining proposal i is removed by the selected proposal m.
template <typename Pred>
std::vector<Kept> HardNms(std::span<const ScoredProposal> props,
                          Pred suppress) {
  std::vector<double> scores(props.size());
  for (std::size_t i = 0; i < props.size(); ++i) scores[i] = props[i].score;
  std::vector<std::size_t> alive = AllIndices(props.size());
  std::vector<Kept> out;
  while (!alive.empty()) {
    const std::size_t pos = ArgMax(alive, scores);
    const std::size_t m = alive[pos];
    out.push_back({m, props[m]});
    alive.erase(alive.begin() + static_cast<long>(pos));
    std::vector<std::size_t> next;
    next.reserve(alive.size());
    for (std::size_t i : alive) {
      if (!suppress(m, i)) next.push_back(i);
    }
    alive.swap(next);
  }
  return out;
}

template <typename Decay>
std::vector<Kept> SoftNms(std::span<const ScoredProposal> props, double theta,
                          Decay decay) {
  std::vector<double> scores(props.size());
  for (std::size_t i = 0; i < props.size(); ++i) scores[i] = props[i].score;
  std::vector<std::size_t> alive = AllIndices(props.size());
  std::vector<Kept> out;
  while (!alive.empty()) {
    const std::size_t pos = ArgMax(alive, scores);
    const std::size_t m = alive[pos];
    ScoredProposal sel = props[m];
    sel.score = scores[m];
    out.push_back({m, sel});
    alive.erase(alive.begin() + static_cast<long>(pos));
    std::vector<std::size_t> next;
    next.reserve(alive.size());
    for (std::size_t i : alive) {
      scores[i] *= decay(Iou(props[m].box, props[i].box));
      if (scores[i] >= theta) next.push_back(i);
    }
    alive.swap(next);
  }
  return out;
}

constexpr std::array<Preset, 10> kPresets = {{
    {0.50, 0.55, 1.25},
    {0.55, 0.55, 1.25},
    {0.60, 0.55, 1.25},
    {0.65, 0.60, 1.40},
    {0.70, 0.65, 1.30},
    {0.75, 0.70, 0.65},
    {0.80, 0.80, 0.90},
    {0.85, 0.85, 0.50},
    {0.90, 1.00, 0.00},
    {0.95, 0.95, 0.20},
}};

}  // namespace

std::string ToString(NmsMethod m) {
  switch (m) {
    case NmsMethod::kGreedy:
      return "greedy";
    case NmsMethod::kSoftLinear:
      return "soft-linear";
    case NmsMethod::kSoftGaussian:
      return "soft-gaussian";
    case NmsMethod::kPairwise:
      return "pairwise";
  }
  return "unknown";
}

NmsMethod ParseNmsMethod(const std::string& s) {
  if (s == "greedy") return NmsMethod::kGreedy;
  if (s == "soft-linear") return NmsMethod::kSoftLinear;
  if (s == "soft-gaussian") return NmsMethod::kSoftGaussian;
  if (s == "pairwise") return NmsMethod::kPairwise;
  throw std::invalid_argument("unknown NMS method '" + s + "'");
}

void Validate(const SuppressionConfig& cfg) {
  if (!(cfg.nms_thr >= 0.0 && cfg.nms_thr <= 1.0)) {
    throw std::invalid_argument("N_t must lie in [0, 1]");
  }
  if (!(cfg.theta >= 0.0 && cfg.theta <= 1.0)) {
    throw std::invalid_argument("theta must lie in [0, 1]");
  }
  if (cfg.method == NmsMethod::kPairwise) {
    if (!cfg.dist_thr) throw std::invalid_argument("pairwise NMS needs D_t");
    if (std::isnan(*cfg.dist_thr) || *cfg.dist_thr < 0.0) {
      throw std::invalid_argument("D_t must be >= 0");
    }
  }
  if (cfg.method == NmsMethod::kSoftGaussian) {
    if (!cfg.sigma)
      throw std::invalid_argument("Gaussian soft-NMS needs sigma");
    if (!(*cfg.sigma > 0.0)) throw std::invalid_argument("sigma must be > 0");
  }
}

std::vector<Kept> GreedyNms(std::span<const ScoredProposal> props,
                            double nms_thr) {
  return HardNms(props, [&](std::size_t m, std::size_t i) {
    return Iou(props[m].box, props[i].box) >= nms_thr;
  });
}

std::vector<Kept> SoftNmsLinear(std::span<const ScoredProposal> props,
                                double nms_thr, double theta) {
  return SoftNms(props, theta, [nms_thr](double iou) {
    return iou >= nms_thr ? 1.0 - iou : 1.0;
  });
}

std::vector<Kept> SoftNmsGaussian(std::span<const ScoredProposal> props,
                                  double sigma, double theta) {
  return SoftNms(props, theta, [sigma](double iou) {
    return std::exp(-(iou * iou) / sigma);
  });
}

std::vector<Kept> PairwiseNms(std::span<const ScoredProposal> props,
                              double nms_thr, double dist_thr,
                              const DistanceMatrix& dm) {
  return HardNms(props, [&](std::size_t m, std::size_t i) {
    if (Iou(props[m].box, props[i].box) < nms_thr) return false;
    const auto d = dm.Get(m, i);
    if (!d) throw std::invalid_argument("incomplete distance matrix");
    return *d <= dist_thr;
  });
}

std::vector<Kept> Suppress(std::span<const ScoredProposal> props,
                           const SuppressionConfig& cfg,
                           const DistanceMatrix* dm) {
  Validate(cfg);
  switch (cfg.method) {
    case NmsMethod::kGreedy:
      return GreedyNms(props, cfg.nms_thr);
    case NmsMethod::kSoftLinear:
      return SoftNmsLinear(props, cfg.nms_thr, cfg.theta);
    case NmsMethod::kSoftGaussian:
      return SoftNmsGaussian(props, *cfg.sigma, cfg.theta);
    case NmsMethod::kPairwise:
      if (dm == nullptr)
        throw std::invalid_argument("pairwise NMS needs distances");
      return PairwiseNms(props, cfg.nms_thr, *cfg.dist_thr, *dm);
  }
  throw std::invalid_argument("unknown NMS method");
}

std::span<const Preset> Presets() { return kPresets; }

std::optional<Preset> PresetFor(double eval_thr) {
  for (const Preset& p : kPresets) {
    if (std::abs(p.eval_thr - eval_thr) < 1e-9) return p;
  }
  return std::nullopt;
}

}  // namespace crowdnms
