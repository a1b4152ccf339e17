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

#ifndef CROWDNMS_GEOMETRY_H_
#define CROWDNMS_GEOMETRY_H_

#include <cstddef>
#include <span>
#include <vector>

namespace crowdnms {

// Axis-aligned rectangle in image pixels, stored as top-left corner plus
// size. Width and height are strictly positive.
struct Box {
  double x = 0.0;
  double y = 0.0;
  double w = 1.0;
  double h = 1.0;

  double x2() const { return x + w; }
  double y2() const { return y + h; }
  double cx() const { return x + 0.5 * w; }
  double cy() const { return y + 0.5 * h; }

  friend bool operator==(const Box&, const Box&) = default;
};

// Returns true when all coordinates are finite and w, h > 0.
bool IsValid(const Box& b);

// Throws std::invalid_argument when `b` violates the Box invariants.
void CheckValid(const Box& b);

// Area computed from the corner coordinates, so that Iou(a, a) == 1 exactly.
double Area(const Box& b);

// Intersection over union. Symmetric, 1 for identical boxes, 0 if disjoint.
double Iou(const Box& a, const Box& b);

// Maximum IoU of `g` against `others` (which must not contain `g` itself);
// 0 for an empty list.
double GtOcclusion(const Box& g, std::span<const Box> others);

// Dense C x H x W grid of real-valued activations. `stride` is the number of
// image pixels per grid cell; cell (y, x) covers pixels
// [x * stride, (x + 1) * stride) horizontally.
class FeatureGrid {
 public:
  FeatureGrid() = default;
  FeatureGrid(std::size_t channels, std::size_t height, std::size_t width,
              double stride = 8.0);
  FeatureGrid(std::size_t channels, std::size_t height, std::size_t width,
              double stride, std::vector<double> values);

  std::size_t channels() const { return channels_; }
  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  double stride() const { return stride_; }

  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return values_[(c * height_ + y) * width_ + x];
  }
  double& at(std::size_t c, std::size_t y, std::size_t x) {
    return values_[(c * height_ + y) * width_ + x];
  }

  std::span<const double> values() const { return values_; }
  std::span<double> mutable_values() { return values_; }

  // Image extent implied by the grid, in pixels.
  double image_width() const { return static_cast<double>(width_) * stride_; }
  double image_height() const { return static_cast<double>(height_) * stride_; }

  friend bool operator==(const FeatureGrid&, const FeatureGrid&) = default;

 private:
  std::size_t channels_ = 0;
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  double stride_ = 8.0;
  std::vector<double> values_;
};

// Fixed-size C x S x S patch produced by RoiAlign.
struct RoiFeature {
  std::size_t channels = 0;
  std::size_t size = 0;
  std::vector<double> values;

  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return values[(c * size + y) * size + x];
  }

  friend bool operator==(const RoiFeature&, const RoiFeature&) = default;
};

inline constexpr std::size_t kDefaultRoiSize = 14;

// Bilinear sample of one channel at continuous feature coordinates (u, v),
// where cell (y, x) has its centre at (x + 0.5, y + 0.5). Lattice points
// outside the grid contribute 0.
double BilinearSample(const FeatureGrid& fg, std::size_t channel, double u,
                      double v);

// Extracts an out_size x out_size patch for `roi`, one bilinear sample at the
// centre of each output bin. ROI coordinates are divided by the grid stride
// and are not clipped; samples falling outside the grid read 0.
// Throws std::invalid_argument("empty ROI") if `roi` does not intersect the
// image extent.
RoiFeature RoiAlign(const FeatureGrid& fg, const Box& roi,
                    std::size_t out_size = kDefaultRoiSize);

}  // namespace crowdnms

#endif  // CROWDNMS_GEOMETRY_H_
