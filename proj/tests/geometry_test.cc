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

#include "crowdnms/geometry.h"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "test_util.h"

namespace crowdnms {
namespace {

using testing_util::RandomBox;
using testing_util::Uniform;

TEST(IouTest, IdenticalBoxesGiveOne) {
  const Box b{3.5, -2.0, 7.25, 11.0};
  EXPECT_EQ(Iou(b, b), 1.0);
}

TEST(IouTest, DisjointBoxesGiveZero) {
  EXPECT_EQ(Iou({0, 0, 2, 2}, {10, 10, 2, 2}), 0.0);
}

TEST(IouTest, TouchingBoxesGiveZero) {
  EXPECT_EQ(Iou({0, 0, 2, 2}, {2, 0, 2, 2}), 0.0);
}

TEST(IouTest, HalfShiftedSquares) {
  EXPECT_DOUBLE_EQ(Iou({0, 0, 2, 2}, {1, 0, 2, 2}), 1.0 / 3.0);
}

TEST(IouTest, ContainedBox) {
  EXPECT_DOUBLE_EQ(Iou({0, 0, 4, 4}, {1, 1, 2, 2}), 4.0 / 16.0);
}

TEST(IouTest, SymmetricOnRandomPairs) {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 5000; ++t) {
    const Box a = RandomBox(rng);
    const Box b = RandomBox(rng);
    EXPECT_EQ(Iou(a, b), Iou(b, a));
    EXPECT_GE(Iou(a, b), 0.0);
    EXPECT_LE(Iou(a, b), 1.0);
  }
}

TEST(IouTest, SelfIouIsExactlyOneOnRandomBoxes) {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 5000; ++t) {
    const Box a = RandomBox(rng);
    EXPECT_EQ(Iou(a, a), 1.0);
  }
}

TEST(IouTest, TranslatingAwayNeverIncreases) {
  std::mt19937_64 rng(9);
  for (int t = 0; t < 500; ++t) {
    const Box a = RandomBox(rng);
    Box b = RandomBox(rng);
    // Move b away from a along x.
    const double dir = b.cx() >= a.cx() ? 1.0 : -1.0;
    double prev = Iou(a, b);
    for (int s = 0; s < 40; ++s) {
      b.x += dir * 1.5;
      const double cur = Iou(a, b);
      EXPECT_LE(cur, prev);
      prev = cur;
    }
  }
}

TEST(BoxTest, ValidityChecks) {
  EXPECT_TRUE(IsValid({0, 0, 1, 1}));
  EXPECT_FALSE(IsValid({0, 0, 0, 1}));
  EXPECT_FALSE(IsValid({0, 0, 1, -1}));
  EXPECT_FALSE(IsValid({std::nan(""), 0, 1, 1}));
  EXPECT_FALSE(IsValid({0, 0, INFINITY, 1}));
  EXPECT_THROW(CheckValid({0, 0, 0, 1}), std::invalid_argument);
}

TEST(GtOcclusionTest, EmptyOthers) {
  EXPECT_EQ(GtOcclusion({0, 0, 2, 2}, {}), 0.0);
}

TEST(GtOcclusionTest, IdenticalOther) {
  const std::vector<Box> others = {{0, 0, 2, 2}};
  EXPECT_EQ(GtOcclusion({0, 0, 2, 2}, others), 1.0);
}

TEST(GtOcclusionTest, MaxOverOthers) {
  const std::vector<Box> others = {{10, 10, 2, 2}, {1, 0, 2, 2}};
  EXPECT_DOUBLE_EQ(GtOcclusion({0, 0, 2, 2}, others), 1.0 / 3.0);
}

FeatureGrid RandomGrid(std::mt19937_64& rng, std::size_t c, std::size_t h,
                       std::size_t w, double stride) {
  std::vector<double> v(c * h * w);
  for (double& x : v) x = Uniform(rng, -1.0, 1.0);
  return FeatureGrid(c, h, w, stride, v);
}

// Textbook bilinear interpolation written independently of the library:
// corners are the four cell centres surrounding the point.
double OracleSample(const FeatureGrid& fg, std::size_t c, double u, double v) {
  const double px = u - 0.5;
  const double py = v - 0.5;
  const int x0 = static_cast<int>(std::floor(px));
  const int y0 = static_cast<int>(std::floor(py));
  double acc = 0.0;
  for (int yy = y0; yy <= y0 + 1; ++yy) {
    for (int xx = x0; xx <= x0 + 1; ++xx) {
      const double wx = 1.0 - std::abs(px - xx);
      const double wy = 1.0 - std::abs(py - yy);
      double val = 0.0;
      if (xx >= 0 && yy >= 0 && xx < static_cast<int>(fg.width()) &&
          yy < static_cast<int>(fg.height())) {
        val = fg.at(c, yy, xx);
      }
      acc += wx * wy * val;
    }
  }
  return acc;
}

TEST(RoiAlignTest, ConstantGridGivesConstantOutput) {
  FeatureGrid fg(2, 6, 9, 8.0, std::vector<double>(2 * 6 * 9, 2.5));
  const RoiFeature r = RoiAlign(fg, {10.0, 7.0, 30.0, 25.0}, 14);
  ASSERT_EQ(r.values.size(), 2u * 14 * 14);
  for (double v : r.values) EXPECT_NEAR(v, 2.5, 1e-12);
}

TEST(RoiAlignTest, CellAlignedRoiCopiesSubgrid) {
  std::mt19937_64 rng(3);
  const FeatureGrid fg = RandomGrid(rng, 3, 10, 12, 8.0);
  // Cells x in [2, 6), y in [3, 7).
  const RoiFeature r = RoiAlign(fg, {16.0, 24.0, 32.0, 32.0}, 4);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < 4; ++y) {
      for (std::size_t x = 0; x < 4; ++x) {
        EXPECT_NEAR(r.at(c, y, x), fg.at(c, y + 3, x + 2), 1e-12);
      }
    }
  }
}

TEST(RoiAlignTest, MatchesBilinearOracleOnRandomInputs) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 200; ++t) {
    const double stride = Uniform(rng, 2.0, 16.0);
    const FeatureGrid fg = RandomGrid(rng, 2, 7, 9, stride);
    Box roi;
    roi.w = Uniform(rng, 6.0, 60.0);
    roi.h = Uniform(rng, 6.0, 60.0);
    roi.x = Uniform(rng, -roi.w / 2, fg.image_width() - 1.0);
    roi.y = Uniform(rng, -roi.h / 2, fg.image_height() - 1.0);
    const std::size_t s = 5;
    const RoiFeature r = RoiAlign(fg, roi, s);
    for (std::size_t c = 0; c < 2; ++c) {
      for (std::size_t y = 0; y < s; ++y) {
        for (std::size_t x = 0; x < s; ++x) {
          const double u = (roi.x + (x + 0.5) * roi.w / s) / stride;
          const double v = (roi.y + (y + 0.5) * roi.h / s) / stride;
          EXPECT_NEAR(r.at(c, y, x), OracleSample(fg, c, u, v), 1e-6);
        }
      }
    }
  }
}

TEST(RoiAlignTest, LinearInGridValues) {
  std::mt19937_64 rng(12);
  for (int t = 0; t < 50; ++t) {
    const FeatureGrid f = RandomGrid(rng, 2, 6, 6, 8.0);
    const FeatureGrid g = RandomGrid(rng, 2, 6, 6, 8.0);
    const double a = Uniform(rng, -2.0, 2.0);
    const double b = Uniform(rng, -2.0, 2.0);
    std::vector<double> mix(f.values().size());
    for (std::size_t i = 0; i < mix.size(); ++i) {
      mix[i] = a * f.values()[i] + b * g.values()[i];
    }
    const FeatureGrid h(2, 6, 6, 8.0, mix);
    const double w = Uniform(rng, 4.0, 40.0);
    const double hh = Uniform(rng, 4.0, 40.0);
    const Box roi = {Uniform(rng, -w / 2, 40.0), Uniform(rng, -hh / 2, 40.0), w,
                     hh};
    const RoiFeature rf = RoiAlign(f, roi, 7);
    const RoiFeature rg = RoiAlign(g, roi, 7);
    const RoiFeature rh = RoiAlign(h, roi, 7);
    for (std::size_t i = 0; i < rh.values.size(); ++i) {
      EXPECT_NEAR(rh.values[i], a * rf.values[i] + b * rg.values[i], 1e-9);
    }
  }
}

TEST(RoiAlignTest, OverhangReadsZero) {
  FeatureGrid fg(1, 4, 4, 8.0, std::vector<double>(16, 1.0));
  // Left half of the ROI lies outside the image.
  const RoiFeature r = RoiAlign(fg, {-32.0, 0.0, 64.0, 32.0}, 4);
  EXPECT_NEAR(r.at(0, 1, 0), 0.0, 1e-12);
  EXPECT_NEAR(r.at(0, 1, 3), 1.0, 1e-12);
}

TEST(RoiAlignTest, RoiOutsideImageThrows) {
  FeatureGrid fg(1, 4, 4, 8.0);
  try {
    RoiAlign(fg, {100.0, 100.0, 10.0, 10.0});
    FAIL() << "expected an exception";
  } catch (const std::invalid_argument& e) {
    EXPECT_STREQ(e.what(), "empty ROI");
  }
}

TEST(FeatureGridTest, RejectsNonFiniteValues) {
  EXPECT_THROW(FeatureGrid(1, 1, 2, 8.0, {0.0, std::nan("")}),
               std::invalid_argument);
  EXPECT_THROW(FeatureGrid(1, 1, 1, 0.0), std::invalid_argument);
}

}  // namespace
}  // namespace crowdnms
