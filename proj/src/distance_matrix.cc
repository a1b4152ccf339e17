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

#include "crowdnms/distance_matrix.h"

#include <cmath>
#include <stdexcept>

namespace crowdnms {

void DistanceMatrix::Set(std::size_t i, std::size_t j, double dist) {
  if (i == j) throw std::invalid_argument("distance matrix has no diagonal");
  if (!std::isfinite(dist) || dist < 0.0) {
    throw std::invalid_argument("distance must be finite and >= 0");
  }
  entries_[Ordered(i, j)] = dist;
}

std::optional<double> DistanceMatrix::Get(std::size_t i, std::size_t j) const {
  if (i == j) return std::nullopt;
  const auto it = entries_.find(Ordered(i, j));
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

}  // namespace crowdnms
