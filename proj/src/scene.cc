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

#include "crowdnms/scene.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

#include "crowdnms/pairs.h"

namespace crowdnms {
namespace {

// Independent streams per (seed, index, purpose).
enum class Stream : std::uint32_t {
  kPlacement = 1,
  kProposals = 2,
  kSignatures = 3,
  kNoise = 4
};

std::mt19937_64 MakeRng(std::uint64_t seed, std::int64_t index, Stream s) {
  std::seed_seq seq{
      static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
      static_cast<std::uint32_t>(index),
      static_cast<std::uint32_t>(static_cast<std::uint64_t>(index) >> 32),
      static_cast<std::uint32_t>(s)};
  return std::mt19937_64(seq);
}

double Uniform(std::mt19937_64& rng, const Range& r) {
  return std::uniform_real_distribution<double>(r.lo, r.hi)(rng);
}

double Normal(std::mt19937_64& rng) {
  return std::normal_distribution<double>(0.0, 1.0)(rng);
}

void CheckRange(const Range& r, const char* name) {
  if (!std::isfinite(r.lo) || !std::isfinite(r.hi) || r.lo > r.hi) {
    throw std::invalid_argument(std::string("invalid range for ") + name);
  }
}

bool Inside(const Box& b, double width, double height) {
  return b.x >= 0.0 && b.y >= 0.0 && b.x2() <= width && b.y2() <= height;
}

Box RandomObjectBox(std::mt19937_64& rng, const SceneConfig& cfg) {
  const double w = Uniform(rng, cfg.object_width);
  const double h = w * Uniform(rng, cfg.aspect);
  const double x = std::uniform_real_distribution<double>(
      0.0, std::max(0.0, cfg.image_width - w))(rng);
  const double y = std::uniform_real_distribution<double>(
      0.0, std::max(0.0, cfg.image_height - h))(rng);
  return Box{x, y, w, h};
}

// Places `second` (given size) relative to `first` along direction `angle` so
// that their IoU equals `target`. IoU is non-increasing along a ray from the
// concentric position, so a bisection on the shift suffices.
bool PlaceAtIou(const Box& first, double w, double h, double angle,
                double target, Box* out) {
  const double dx = std::cos(angle) * first.w;
  const double dy = std::sin(angle) * first.h;
  auto at = [&](double s) {
    return Box{first.cx() + s * dx - 0.5 * w, first.cy() + s * dy - 0.5 * h, w,
               h};
  };
  if (Iou(first, at(0.0)) < target) return false;
  double lo = 0.0;
  double hi = 4.0;
  for (int it = 0; it < 100; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (Iou(first, at(mid)) >= target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  *out = at(lo);
  return true;
}

std::vector<Box> PlaceObjects(const SceneConfig& cfg, std::mt19937_64& rng,
                              int count) {
  std::vector<Box> boxes;
  if (count <= 0) return boxes;

  if (count == 1) {
    boxes.push_back(RandomObjectBox(rng, cfg));
  } else {
    bool placed = false;
    for (int attempt = 0; attempt < cfg.max_retries && !placed; ++attempt) {
      const Box a = RandomObjectBox(rng, cfg);
      const double target = Uniform(rng, cfg.occlusion);
      const double scale = Uniform(rng, cfg.pair_scale);
      const double w = a.w * scale;
      const double h = w * Uniform(rng, cfg.aspect);
      const double angle = std::uniform_real_distribution<double>(
          0.0, 2.0 * std::numbers::pi)(rng);
      Box b;
      if (!PlaceAtIou(a, w, h, angle, target, &b)) continue;
      if (!Inside(a, cfg.image_width, cfg.image_height) ||
          !Inside(b, cfg.image_width, cfg.image_height)) {
        continue;
      }
      const double achieved = Iou(a, b);
      if (achieved < cfg.occlusion.lo || achieved > cfg.occlusion.hi) continue;
      boxes = {a, b};
      placed = true;
    }
    if (!placed) throw std::runtime_error("placement failed");
  }

  while (static_cast<int>(boxes.size()) < count) {
    bool placed = false;
    for (int attempt = 0; attempt < cfg.max_retries && !placed; ++attempt) {
      const Box c = RandomObjectBox(rng, cfg);
      if (!Inside(c, cfg.image_width, cfg.image_height)) continue;
      if (GtOcclusion(c, boxes) > cfg.background_max_iou) continue;
      boxes.push_back(c);
      placed = true;
    }
    if (!placed) throw std::runtime_error("placement failed");
  }
  return boxes;
}

// Normalised Chebyshev distance from the box centre; < 1 inside the box.
double BoxDistance(const Box& b, double px, double py) {
  return std::max(std::abs(px - b.cx()) / (0.5 * b.w),
                  std::abs(py - b.cy()) / (0.5 * b.h));
}

FeatureGrid PaintFeatures(const SceneConfig& cfg, std::int64_t index,
                          const std::vector<Box>& boxes,
                          const std::vector<std::vector<double>>& signatures) {
  const auto grid_w =
      static_cast<std::size_t>(std::ceil(cfg.image_width / cfg.stride));
  const auto grid_h =
      static_cast<std::size_t>(std::ceil(cfg.image_height / cfg.stride));
  FeatureGrid fg(cfg.channels, grid_h, grid_w, cfg.stride);

  // Low-frequency background noise: a few random plane waves per channel.
  std::mt19937_64 rng = MakeRng(cfg.seed, index, Stream::kNoise);
  constexpr int kWaves = 3;
  struct Wave {
    double kx, ky, phase, amp;
  };
  std::vector<Wave> waves;
  for (std::size_t c = 0; c < cfg.channels; ++c) {
    for (int k = 0; k < kWaves; ++k) {
      const double freq = std::uniform_real_distribution<double>(
          0.005, 0.03)(rng);  // cycles per pixel
      const double dir = std::uniform_real_distribution<double>(
          0.0, 2.0 * std::numbers::pi)(rng);
      waves.push_back({2.0 * std::numbers::pi * freq * std::cos(dir),
                       2.0 * std::numbers::pi * freq * std::sin(dir),
                       std::uniform_real_distribution<double>(
                           0.0, 2.0 * std::numbers::pi)(rng),
                       cfg.noise_strength / std::sqrt(double{kWaves})});
    }
  }

  std::vector<double> weight(boxes.size());
  for (std::size_t gy = 0; gy < grid_h; ++gy) {
    const double py = (static_cast<double>(gy) + 0.5) * cfg.stride;
    for (std::size_t gx = 0; gx < grid_w; ++gx) {
      const double px = (static_cast<double>(gx) + 0.5) * cfg.stride;

      // Soft ownership among the objects covering this cell.
      double total = 0.0;
      for (std::size_t k = 0; k < boxes.size(); ++k) {
        const double r = BoxDistance(boxes[k], px, py);
        weight[k] = 0.0;
        if (r >= 1.0) continue;
        weight[k] = std::exp(-r / cfg.signature_sharpness);
        total += weight[k];
      }
      for (std::size_t c = 0; c < cfg.channels; ++c) {
        double v = 0.0;
        for (std::size_t k = 0; k < boxes.size(); ++k) {
          if (weight[k] > 0.0) v += weight[k] / total * signatures[k][c];
        }
        for (int k = 0; k < kWaves; ++k) {
          const Wave& wv = waves[c * kWaves + k];
          v += wv.amp * std::sin(wv.kx * px + wv.ky * py + wv.phase);
        }
        fg.at(c, gy, gx) = v;
      }
    }
  }
  return fg;
}

std::vector<ScoredProposal> JitterProposals(const SceneConfig& cfg,
                                            std::int64_t index,
                                            const std::vector<Box>& boxes) {
  std::mt19937_64 rng = MakeRng(cfg.seed, index, Stream::kProposals);
  std::vector<ScoredProposal> props;
  for (const Box& g : boxes) {
    for (int p = 0; p < cfg.proposals_per_object; ++p) {
      Box cand = g;
      for (int attempt = 0; attempt < cfg.max_retries; ++attempt) {
        const double cx = g.cx() + cfg.center_jitter * g.w * Normal(rng);
        const double cy = g.cy() + cfg.center_jitter * g.h * Normal(rng);
        const double w = g.w * std::exp(cfg.size_jitter * Normal(rng));
        const double h = g.h * std::exp(cfg.size_jitter * Normal(rng));
        const Box b{cx - 0.5 * w, cy - 0.5 * h, w, h};
        if (Iou(b, g) >= cfg.min_proposal_iou) {
          cand = b;
          break;
        }
      }
      const double base =
          cfg.score_floor + (1.0 - cfg.score_floor) * Iou(cand, g);
      const double score =
          std::clamp(base - cfg.score_noise * Normal(rng), 0.0, 1.0);
      props.push_back({cand, score, index});
    }
  }
  return props;
}

}  // namespace

void Validate(const SceneConfig& cfg) {
  CheckRange(cfg.occlusion, "occlusion");
  CheckRange(cfg.object_width, "object width");
  CheckRange(cfg.aspect, "aspect");
  CheckRange(cfg.pair_scale, "pair scale");
  if (cfg.occlusion.lo < 0.0 || cfg.occlusion.hi > 1.0) {
    throw std::invalid_argument("occlusion range must lie in [0,1]");
  }
  if (cfg.objects_min < 0 || cfg.objects_min > cfg.objects_max) {
    throw std::invalid_argument("invalid objects-per-scene range");
  }
  if (!(cfg.image_width > 0.0) || !(cfg.image_height > 0.0) ||
      !(cfg.stride > 0.0) || cfg.channels == 0) {
    throw std::invalid_argument("image size, stride and channels must be > 0");
  }
  if (!(cfg.object_width.lo > 0.0) || !(cfg.aspect.lo > 0.0) ||
      !(cfg.pair_scale.lo > 0.0)) {
    throw std::invalid_argument("object sizes must be positive");
  }
  if (cfg.proposals_per_object < 0 || cfg.max_retries <= 0) {
    throw std::invalid_argument("invalid proposal count or retry cap");
  }
  if (!(cfg.signature_sharpness > 0.0)) {
    throw std::invalid_argument("signature sharpness must be positive");
  }
}

std::vector<std::vector<double>> SceneSignatures(const SceneConfig& cfg,
                                                 std::int64_t index,
                                                 std::size_t object_count) {
  std::mt19937_64 rng = MakeRng(cfg.seed, index, Stream::kSignatures);
  std::vector<std::vector<double>> sigs(object_count,
                                        std::vector<double>(cfg.channels));
  for (auto& s : sigs) {
    for (double& v : s) v = cfg.signature_strength * Normal(rng);
  }
  return sigs;
}

Scene GenerateScene(const SceneConfig& cfg, std::int64_t index) {
  Validate(cfg);
  std::mt19937_64 rng = MakeRng(cfg.seed, index, Stream::kPlacement);
  const int count =
      std::uniform_int_distribution<int>(cfg.objects_min, cfg.objects_max)(rng);
  const std::vector<Box> boxes = PlaceObjects(cfg, rng, count);
  const auto sigs = SceneSignatures(cfg, index, boxes.size());

  Scene scene;
  scene.image_id = index;
  scene.width = cfg.image_width;
  scene.height = cfg.image_height;
  for (std::size_t k = 0; k < boxes.size(); ++k) {
    scene.gt.push_back({index, static_cast<ObjectId>(k), boxes[k]});
  }
  scene.proposals = JitterProposals(cfg, index, boxes);
  scene.features = PaintFeatures(cfg, index, boxes, sigs);
  return scene;
}

double OracleDistance(const ScoredProposal& p_i, const ScoredProposal& p_j,
                      const Scene& scene, double match_thr) {
  if (p_i.image_id != scene.image_id || p_j.image_id != scene.image_id) {
    throw std::invalid_argument("proposal does not belong to image " +
                                std::to_string(scene.image_id));
  }
  const auto a = MatchProposalToGt(p_i, scene.gt, match_thr);
  const auto b = MatchProposalToGt(p_j, scene.gt, match_thr);
  return (a && b && *a != *b) ? 1.0 : 0.0;
}

}  // namespace crowdnms
