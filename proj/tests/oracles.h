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

// Independent naive references for the suppression methods and the
// evaluator, shared by the unit tests and the acceptance suite.

#ifndef CROWDNMS_TESTS_ORACLES_H_
#define CROWDNMS_TESTS_ORACLES_H_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "crowdnms/distance_matrix.h"
#include "crowdnms/embed.h"
#include "crowdnms/eval.h"
#include "crowdnms/geometry.h"
#include "crowdnms/pairs.h"
#include "crowdnms/scene.h"
#include "crowdnms/suppress.h"
#include "test_util.h"

namespace crowdnms {
namespace oracles {

using testing_util::Uniform;

// Naive reference: each round stable-sorts the survivors by score and takes
// the front. `decay(m, i)` returns the factor applied to survivor i, or a
// negative value to remove it outright.
template <typename Decay>
inline std::vector<Kept> NaiveNms(const std::vector<ScoredProposal>& props,
                                  double theta, Decay decay) {
  struct Item {
    std::size_t index;
    double score;
  };
  std::vector<Item> rest;
  for (std::size_t i = 0; i < props.size(); ++i) {
    rest.push_back({i, props[i].score});
  }
  std::vector<Kept> out;
  while (!rest.empty()) {
    std::stable_sort(
        rest.begin(), rest.end(),
        [](const Item& a, const Item& b) { return a.score > b.score; });
    const Item m = rest.front();
    rest.erase(rest.begin());
    ScoredProposal kept = props[m.index];
    kept.score = m.score;
    out.push_back({m.index, kept});
    // Restore input order so ties keep resolving to the earlier proposal.
    std::sort(rest.begin(), rest.end(),
              [](const Item& a, const Item& b) { return a.index < b.index; });
    std::vector<Item> next;
    for (Item it : rest) {
      const double f = decay(m.index, it.index);
      if (f < 0.0) continue;
      it.score *= f;
      if (it.score >= theta) next.push_back(it);
    }
    rest = next;
  }
  return out;
}

inline std::vector<Kept> NaiveGreedy(const std::vector<ScoredProposal>& p,
                                     double nt) {
  return NaiveNms(p, -1.0, [&](std::size_t m, std::size_t i) {
    return Iou(p[m].box, p[i].box) >= nt ? -1.0 : 1.0;
  });
}

inline std::vector<Kept> NaiveLinear(const std::vector<ScoredProposal>& p,
                                     double nt, double theta) {
  return NaiveNms(p, theta, [&](std::size_t m, std::size_t i) {
    const double v = Iou(p[m].box, p[i].box);
    return v >= nt ? 1.0 - v : 1.0;
  });
}

inline std::vector<Kept> NaiveGaussian(const std::vector<ScoredProposal>& p,
                                       double sigma, double theta) {
  return NaiveNms(p, theta, [&](std::size_t m, std::size_t i) {
    const double v = Iou(p[m].box, p[i].box);
    return std::exp(-(v * v) / sigma);
  });
}

inline std::vector<Kept> NaivePairwise(const std::vector<ScoredProposal>& p,
                                       double nt, double dt,
                                       const DistanceMatrix& dm) {
  return NaiveNms(p, -1.0, [&](std::size_t m, std::size_t i) {
    const bool near = Iou(p[m].box, p[i].box) >= nt;
    return near && *dm.Get(m, i) <= dt ? -1.0 : 1.0;
  });
}

inline DistanceMatrix RandomDistances(std::mt19937_64& rng,
                                      const std::vector<ScoredProposal>& p) {
  DistanceMatrix dm(0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t j = i + 1; j < p.size(); ++j) {
      dm.Set(i, j, Uniform(rng, 0.0, 2.0));
    }
  }
  return dm;
}

// Per-image greedy matching written independently of the library.
inline std::vector<bool> NaiveTp(const std::vector<ScoredProposal>& dets,
                                 const std::vector<GtObject>& gt, double thr) {
  std::vector<bool> tp(dets.size(), false);
  std::vector<bool> used(gt.size(), false);
  std::vector<std::size_t> order(dets.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return dets[a].score > dets[b].score;
                   });
  for (std::size_t d : order) {
    int best = -1;
    double best_v = -1.0;
    for (std::size_t g = 0; g < gt.size(); ++g) {
      if (used[g] || gt[g].image_id != dets[d].image_id) continue;
      const double v = Iou(dets[d].box, gt[g].box);
      if (v >= thr && v > best_v) {
        best_v = v;
        best = static_cast<int>(g);
      }
    }
    if (best >= 0) {
      used[static_cast<std::size_t>(best)] = true;
      tp[d] = true;
    }
  }
  return tp;
}

// Enumerates every score cutoff (scores must be distinct), computes exact
// precision and recall at each, then applies the 101-point definition.
inline double BruteForceAp(const std::vector<ScoredProposal>& dets,
                           const std::vector<GtObject>& gt, double thr) {
  const std::vector<bool> tp = NaiveTp(dets, gt, thr);
  std::vector<double> rec, prec;
  for (const ScoredProposal& cut : dets) {
    std::size_t n = 0, t = 0;
    for (std::size_t i = 0; i < dets.size(); ++i) {
      if (dets[i].score >= cut.score) {
        ++n;
        t += tp[i] ? 1 : 0;
      }
    }
    rec.push_back(static_cast<double>(t) / static_cast<double>(gt.size()));
    prec.push_back(static_cast<double>(t) / static_cast<double>(n));
  }
  double sum = 0.0;
  for (int i = 0; i <= 100; ++i) {
    const double level = static_cast<double>(i) / 100.0;
    double best = 0.0;
    for (std::size_t k = 0; k < rec.size(); ++k) {
      if (rec[k] >= level) best = std::max(best, prec[k]);
    }
    sum += best;
  }
  return sum / 101.0;
}

struct Instance {
  std::vector<ScoredProposal> dets;
  std::vector<GtObject> gt;
};

// Up to two images, up to 4 gt each, up to 10 detections with distinct
// scores placed near the gt.
inline Instance RandomInstance(std::mt19937_64& rng) {
  Instance in;
  const int images = std::uniform_int_distribution<int>(1, 2)(rng);
  for (int img = 0; img < images; ++img) {
    const int n = std::uniform_int_distribution<int>(1, 4)(rng);
    for (int k = 0; k < n; ++k) {
      in.gt.push_back(GtObject{
          img,
          k,
          Box{Uniform(rng, 0, 30), Uniform(rng, 0, 30), Uniform(rng, 10, 20),
              Uniform(rng, 10, 20)},
      });
    }
  }
  const int nd = std::uniform_int_distribution<int>(0, 10)(rng);
  std::vector<double> scores;
  for (int k = 0; k < nd; ++k) scores.push_back((k + 1) / 11.0);
  std::shuffle(scores.begin(), scores.end(), rng);
  for (int k = 0; k < nd; ++k) {
    const GtObject& g = in.gt[std::uniform_int_distribution<std::size_t>(
        0, in.gt.size() - 1)(rng)];
    Box b = g.box;
    b.x += Uniform(rng, -4, 4);
    b.y += Uniform(rng, -4, 4);
    b.w *= Uniform(rng, 0.8, 1.25);
    in.dets.push_back({b, scores[static_cast<std::size_t>(k)], g.image_id});
  }
  return in;
}

inline ModelConfig SmallConfig(HeadType head = HeadType::kGap) {
  ModelConfig c;
  c.in_channels = 8;
  c.width = 4;
  c.embedding_dim = 8;
  c.head = head;
  return c;
}

// Training pairs from a few generated scenes.
inline std::vector<PairSample> Samples(int scenes) {
  std::vector<PairSample> out;
  for (int i = 0; i < scenes; ++i) {
    for (PairSample& p : SampleTrainingPairs(GenerateScene(SceneConfig{}, i),
                                             SamplingConfig{})) {
      out.push_back(std::move(p));
    }
  }
  return out;
}

// Largest |analytic - numeric| / max(1, |numeric|) over all parameters.
inline double WorstGradientError(const EmbeddingModel& m, const PairSample& s,
                                 double margin, double eps) {
  const PairGradient g = Backward(m, s, margin);
  double worst = 0.0;
  for (std::size_t i = 0; i < m.params().size(); ++i) {
    EmbeddingModel mp = m;
    EmbeddingModel mm = m;
    mp.mutable_params()[i] += eps;
    mm.mutable_params()[i] -= eps;
    const double num =
        (PairLoss(mp, s, margin) - PairLoss(mm, s, margin)) / (2.0 * eps);
    worst = std::max(worst,
                     std::abs(g.grad[i] - num) / std::max(1.0, std::abs(num)));
  }
  return worst;
}

}  // namespace oracles
}  // namespace crowdnms

#endif  // CROWDNMS_TESTS_ORACLES_H_
