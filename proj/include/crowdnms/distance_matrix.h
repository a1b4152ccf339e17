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

#ifndef CROWDNMS_DISTANCE_MATRIX_H_
#define CROWDNMS_DISTANCE_MATRIX_H_

#include <cstddef>
#include <map>
#include <optional>
#include <utility>

#include "crowdnms/scene.h"

namespace crowdnms {

// Sparse symmetric pair distances for one image, keyed by proposal index
// within that image. The diagonal is never stored.
class DistanceMatrix {
 public:
  using Key = std::pair<std::size_t, std::size_t>;

  DistanceMatrix() = default;
  explicit DistanceMatrix(ImageId image_id) : image_id_(image_id) {}

  ImageId image_id() const { return image_id_; }

  // Throws std::invalid_argument for i == j or a negative/non-finite value.
  void Set(std::size_t i, std::size_t j, double dist);
  std::optional<double> Get(std::size_t i, std::size_t j) const;

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  // Entries with i < j, in ascending (i, j) order.
  const std::map<Key, double>& entries() const { return entries_; }

  friend bool operator==(const DistanceMatrix&,
                         const DistanceMatrix&) = default;

 private:
  static Key Ordered(std::size_t i, std::size_t j) {
    return i < j ? Key{i, j} : Key{j, i};
  }

  ImageId image_id_ = 0;
  std::map<Key, double> entries_;
};

}  // namespace crowdnms

#endif  // CROWDNMS_DISTANCE_MATRIX_H_
