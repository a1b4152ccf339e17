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

// Pipeline stages behind the command-line tool:
//   gen -> sample-pairs -> train -> distances -> nms -> eval -> report
//
// A corpus directory holds scenes.jsonl, gt.jsonl, proposals.jsonl and
// features/<image_id>.bin. Every stage writes its outputs ordered by image id,
// independent of how many worker threads were used.

#ifndef CROWDNMS_PIPELINE_H_
#define CROWDNMS_PIPELINE_H_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "crowdnms/embed.h"
#include "crowdnms/eval.h"
#include "crowdnms/pairs.h"
#include "crowdnms/scene.h"
#include "crowdnms/suppress.h"

namespace crowdnms {

namespace fs = std::filesystem;

// Worker count: CROWDNMS_THREADS if set and positive, else the hardware
// concurrency (at least 1).
std::size_t DefaultThreads();

// Runs fn(0) ... fn(n - 1) on up to `threads` workers. The first exception
// thrown by any call is rethrown after all workers finish.
void ParallelFor(std::size_t n, std::size_t threads,
                 const std::function<void(std::size_t)>& fn);

struct GenOptions {
  SceneConfig scene;
  std::int64_t scenes = 0;
  std::int64_t first_index = 0;
  fs::path out_dir;
  std::size_t threads = 1;
};
void CmdGen(const GenOptions& opt);

// Reads a corpus written by CmdGen, ordered by image id.
std::vector<Scene> LoadCorpus(const fs::path& dir);

struct SamplePairsOptions {
  fs::path corpus;
  SamplingConfig sampling;
  fs::path out;
  std::size_t threads = 1;
};
void CmdSamplePairs(const SamplePairsOptions& opt);

// Pair samples (with ROI features) for every scene, in image order.
std::vector<PairSample> CollectPairs(const std::vector<Scene>& scenes,
                                     const SamplingConfig& cfg,
                                     std::size_t threads);

struct TrainOptions {
  fs::path corpus;
  std::optional<fs::path> val_corpus;
  ModelConfig model;
  TrainConfig train;
  SamplingConfig sampling;
  std::uint64_t init_seed = 1;
  fs::path out_model;
  std::optional<fs::path> out_log;
  std::size_t threads = 1;
  std::function<void(const std::string&)> log;
};

struct TrainSummary {
  TrainResult result;
  std::size_t train_pairs = 0;
  std::size_t val_pairs = 0;
  std::optional<double> val_accuracy;
  std::optional<DistanceStats> val_distances;
};
TrainSummary CmdTrain(const TrainOptions& opt);

struct DistancesOptions {
  fs::path corpus;
  fs::path model;
  double nms_thr = 0.5;
  fs::path out;
  std::size_t threads = 1;
};
void CmdDistances(const DistancesOptions& opt);

struct NmsOptions {
  fs::path proposals;
  SuppressionConfig suppression;
  std::optional<fs::path> distances;
  fs::path out;
  std::size_t threads = 1;
};
void CmdNms(const NmsOptions& opt);

// Runs suppression per image; output ordered by image id then selection
// order.
std::vector<ScoredProposal> SuppressAll(
    const std::vector<ScoredProposal>& proposals, const SuppressionConfig& cfg,
    const std::map<ImageId, DistanceMatrix>* distances, std::size_t threads);

struct EvalOptions {
  fs::path detections;
  fs::path gt;
  EvalConfig eval;
  fs::path out_json;
  // Writes <prefix>_pr.csv, <prefix>_ap.csv and <prefix>_f1.csv when set.
  std::optional<fs::path> csv_prefix;
};
EvalReport CmdEval(const EvalOptions& opt);

std::string EvalReportToJson(const EvalReport& r);
EvalReport EvalReportFromJson(const std::string& text,
                              const std::string& source);

struct ReportOptions {
  // (label, eval report json); the first entry is the baseline for gains.
  std::vector<std::pair<std::string, fs::path>> inputs;
  fs::path out_dir;
};
// Writes ap_table.csv, summary_table.csv, f1_buckets.csv and
// gain_vs_occlusion.csv.
void CmdReport(const ReportOptions& opt);

// Parses "lo:hi:step" (inclusive of hi within 1e-9) or a comma list.
std::vector<double> ParseThresholdList(const std::string& text);
// Parses "lo:hi:step" into consecutive half-open buckets, or a comma list of
// "lo-hi" pairs.
std::vector<Bucket> ParseBuckets(const std::string& text);
// Parses "lo:hi".
Range ParseRange(const std::string& text);

}  // namespace crowdnms

#endif  // CROWDNMS_PIPELINE_H_
