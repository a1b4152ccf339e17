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

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace crowdnms {

bool IsValid(const Box& b) {
  return std::isfinite(b.x) && std::isfinite(b.y) && std::isfinite(b.w) &&
         std::isfinite(b.h) && b.w > 0.0 && b.h > 0.0;
}

void CheckValid(const Box& b) {
  if (!IsValid(b)) {
    throw std::invalid_argument(
        "invalid box (" + std::to_string(b.x) + ", " + std::to_string(b.y) +
        ", " + std::to_string(b.w) + ", " + std::to_string(b.h) + ")");
  }
}

double Area(const Box& b) { return (b.x2() - b.x) * (b.y2() - b.y); }

double Iou(const Box& a, const Box& b) {
  const double iw = std::min(a.x2(), b.x2()) - std::max(a.x, b.x);
  const double ih = std::min(a.y2(), b.y2()) - std::max(a.y, b.y);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  const double uni = Area(a) + Area(b) - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

double GtOcclusion(const Box& g, std::span<const Box> others) {
  double best = 0.0;
  for (const Box& o : others) best = std::max(best, Iou(g, o));
  return best;
}

FeatureGrid::FeatureGrid(std::size_t channels, std::size_t height,
                         std::size_t width, double stride)
    : FeatureGrid(channels, height, width, stride,
                  std::vector<double>(channels * height * width, 0.0)) {}

FeatureGrid::FeatureGrid(std::size_t channels, std::size_t height,
                         std::size_t width, double stride,
                         std::vector<double> values)
    : channels_(channels),
      height_(height),
      width_(width),
      stride_(stride),
      values_(std::move(values)) {
  if (!(stride_ > 0.0) || !std::isfinite(stride_)) {
    throw std::invalid_argument("feature grid stride must be positive");
  }
  if (values_.size() != channels_ * height_ * width_) {
    throw std::invalid_argument(
        "feature grid value count does not match " + std::to_string(channels_) +
        "x" + std::to_string(height_) + "x" + std::to_string(width_));
  }
  for (double v : values_) {
    if (!std::isfinite(v)) {
      throw std::invalid_argument("feature grid contains non-finite value");
    }
  }
}

double BilinearSample(const FeatureGrid& fg, std::size_t channel, double u,
                      double v) {
  // Shift so that integer coordinates land on cell centres.
  const double gx = u - 0.5;
  const double gy = v - 0.5;
  const double fx = std::floor(gx);
  const double fy = std::floor(gy);
  const double ax = gx - fx;
  const double ay = gy - fy;
  const long x0 = static_cast<long>(fx);
  const long y0 = static_cast<long>(fy);
  const long w = static_cast<long>(fg.width());
  const long h = static_cast<long>(fg.height());

  auto read = [&](long yy, long xx) -> double {
    if (xx < 0 || yy < 0 || xx >= w || yy >= h) return 0.0;
    return fg.at(channel, static_cast<std::size_t>(yy),
                 static_cast<std::size_t>(xx));
  };

  return (1.0 - ay) * ((1.0 - ax) * read(y0, x0) + ax * read(y0, x0 + 1)) +
         ay * ((1.0 - ax) * read(y0 + 1, x0) + ax * read(y0 + 1, x0 + 1));
}

RoiFeature RoiAlign(const FeatureGrid& fg, const Box& roi,
                    std::size_t out_size) {
  CheckValid(roi);
  if (out_size == 0) throw std::invalid_argument("ROI output size must be > 0");
  const double ix = std::min(roi.x2(), fg.image_width()) - std::max(roi.x, 0.0);
  const double iy =
      std::min(roi.y2(), fg.image_height()) - std::max(roi.y, 0.0);
  if (ix <= 0.0 || iy <= 0.0) throw std::invalid_argument("empty ROI");

  const double s = fg.stride();
  const double x0 = roi.x / s;
  const double y0 = roi.y / s;
  const double bin_w = roi.w / s / static_cast<double>(out_size);
  const double bin_h = roi.h / s / static_cast<double>(out_size);

  RoiFeature out;
  out.channels = fg.channels();
  out.size = out_size;
  out.values.resize(fg.channels() * out_size * out_size);
  for (std::size_t c = 0; c < fg.channels(); ++c) {
    for (std::size_t oy = 0; oy < out_size; ++oy) {
      const double v = y0 + (static_cast<double>(oy) + 0.5) * bin_h;
      for (std::size_t ox = 0; ox < out_size; ++ox) {
        const double u = x0 + (static_cast<double>(ox) + 0.5) * bin_w;
        out.values[(c * out_size + oy) * out_size + ox] =
            BilinearSample(fg, c, u, v);
      }
    }
  }
  return out;
}

}  // namespace crowdnms
