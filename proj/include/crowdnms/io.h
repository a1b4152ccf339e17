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

// On-disk formats.
//
// JSONL (one object per line):
//   gt          {"image_id", "object_id", "x", "y", "w", "h"}
//   proposals   {"image_id", "x", "y", "w", "h", "score"}   (also detections)
//   scenes      {"image_id", "width", "height"}
//   pairs       {"image_id", "i", "j", "case_id", "y"}
//   distances   {"image_id", "i", "j", "dist"}
// Proposal indices i, j are positions within the image's proposal list.
//
// Binary, little-endian:
//   feature grid  "PWFG", u32 version, u32 C, u32 H, u32 W, f64 stride,
//                 f64 values[C*H*W] (row-major C x H x W)
//   checkpoint    "PWRN", u32 version, u32 in_channels, u32 roi_size,
//                 u32 width, u32 embedding_dim, u32 head (0 gap, 1 fc),
//                 f64 params[...] in declaration order,
//                 f64 running_mean[6*width], f64 running_var[6*width]

#ifndef CROWDNMS_IO_H_
#define CROWDNMS_IO_H_

#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "crowdnms/distance_matrix.h"
#include "crowdnms/embed.h"
#include "crowdnms/geometry.h"
#include "crowdnms/pairs.h"
#include "crowdnms/scene.h"

namespace crowdnms {

inline constexpr std::uint32_t kFeatureGridVersion = 1;
inline constexpr std::uint32_t kCheckpointVersion = 1;

// Errors while parsing carry "<source>:<line>: <what>".
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SceneMeta {
  ImageId image_id = 0;
  double width = 0.0;
  double height = 0.0;

  friend bool operator==(const SceneMeta&, const SceneMeta&) = default;
};

struct PairRecord {
  ImageId image_id = 0;
  std::size_t i = 0;
  std::size_t j = 0;
  int case_id = 0;
  int y = 1;

  friend bool operator==(const PairRecord&, const PairRecord&) = default;
};

void WriteProposals(std::ostream& os, std::span<const ScoredProposal> props);
std::vector<ScoredProposal> ReadProposals(std::istream& is,
                                          const std::string& source);

void WriteGt(std::ostream& os, std::span<const GtObject> gt);
std::vector<GtObject> ReadGt(std::istream& is, const std::string& source);

void WriteSceneMeta(std::ostream& os, std::span<const SceneMeta> scenes);
std::vector<SceneMeta> ReadSceneMeta(std::istream& is,
                                     const std::string& source);

void WritePairs(std::ostream& os, std::span<const PairRecord> pairs);
std::vector<PairRecord> ReadPairs(std::istream& is, const std::string& source);
PairRecord ToRecord(const PairSample& s);

void WriteDistances(std::ostream& os, const DistanceMatrix& dm);
std::map<ImageId, DistanceMatrix> ReadDistances(std::istream& is,
                                                const std::string& source);

void WriteFeatureGrid(std::ostream& os, const FeatureGrid& fg);
FeatureGrid ReadFeatureGrid(std::istream& is, const std::string& source);

void WriteCheckpoint(std::ostream& os, const EmbeddingModel& m);
EmbeddingModel ReadCheckpoint(std::istream& is, const std::string& source);

// File helpers; they throw std::runtime_error naming the path on failure.
void WriteTextFile(const std::filesystem::path& path, const std::string& text);
std::string ReadTextFile(const std::filesystem::path& path);

}  // namespace crowdnms

#endif  // CROWDNMS_IO_H_
