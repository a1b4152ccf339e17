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

// Pairwise-relationship embedding network.
//
// Layout (width W, input C x S x S, embedding dimension D):
//
//   conv1 3x3 C->W, relu, bn1
//   conv2 3x3 W->W, relu, bn2
//   maxpool 2x2                      (S -> S/2)
//   conv3 3x3 W->W, relu, bn3
//   fc1 1x1 W->W, relu, bn4
//   fc2 1x1 W->W, relu, bn5
//   fc3 1x1 W->W, relu, bn6
//   head:  kGap  linear W->D at every cell, then global average pooling
//          kFc   flatten W x S/2 x S/2, dense -> D
//
// Batch normalization: during training the two ROIs of a pair form one batch
// and each layer normalizes with that batch's per-channel statistics (over
// both ROIs and all positions). The running statistics are an exponential
// average of those batch statistics and are what inference normalizes with.

#ifndef CROWDNMS_EMBED_H_
#define CROWDNMS_EMBED_H_

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "crowdnms/distance_matrix.h"
#include "crowdnms/geometry.h"
#include "crowdnms/pairs.h"

namespace crowdnms {

enum class HeadType : std::uint32_t { kGap = 0, kFc = 1 };

struct ModelConfig {
  std::size_t in_channels = 8;
  std::size_t roi_size = kDefaultRoiSize;
  std::size_t width = 32;
  std::size_t embedding_dim = 50;
  HeadType head = HeadType::kGap;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct TrainConfig {
  double learning_rate = 1e-4;
  double momentum = 0.9;
  double weight_decay = 1e-5;
  std::size_t batch_size = 1;
  double margin = 1.0;
  int epochs = 4;
  std::uint64_t seed = 1;
  double bn_momentum = 0.9;
  // Samples used to initialise the batch-norm statistics before the first
  // step; 0 skips calibration.
  std::size_t bn_calibration_samples = 64;
  bool shuffle = true;
};

void Validate(const TrainConfig& cfg);

// Named slice of the flat parameter vector.
struct ParamBlock {
  std::string name;
  std::size_t offset = 0;
  std::size_t size = 0;
  bool weight_decay = true;

  friend bool operator==(const ParamBlock&, const ParamBlock&) = default;
};

class EmbeddingModel {
 public:
  static constexpr std::size_t kNumBatchNorm = 6;
  static constexpr double kBatchNormEps = 1e-5;

  EmbeddingModel() = default;
  // Fan-in scaled uniform initialisation, deterministic in `seed`.
  EmbeddingModel(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  std::size_t pooled_size() const { return cfg_.roi_size / 2; }

  std::span<const ParamBlock> blocks() const { return blocks_; }
  const ParamBlock& block(const std::string& name) const;

  std::span<const double> params() const { return params_; }
  std::span<double> mutable_params() { return params_; }
  std::span<double> mutable_block(const std::string& name);

  // Running statistics, kNumBatchNorm * width entries each.
  std::span<const double> running_mean() const { return running_mean_; }
  std::span<const double> running_var() const { return running_var_; }
  std::span<double> mutable_running_mean() { return running_mean_; }
  std::span<double> mutable_running_var() { return running_var_; }

  // Inference forward pass. Throws std::invalid_argument on shape mismatch.
  std::vector<double> Forward(const RoiFeature& roi) const;

  friend bool operator==(const EmbeddingModel&,
                         const EmbeddingModel&) = default;

 private:
  void AddBlock(const std::string& name, std::size_t size, bool decay);

  ModelConfig cfg_;
  std::vector<ParamBlock> blocks_;
  std::vector<double> params_;
  std::vector<double> running_mean_;
  std::vector<double> running_var_;
};

// L1 distance between two embeddings.
double L1Distance(std::span<const double> a, std::span<const double> b);

// L1 distance between the embeddings of two ROIs.
double PairDistance(const EmbeddingModel& m, const RoiFeature& roi_i,
                    const RoiFeature& roi_j);

// y * d + (1 - y) * max(0, margin - d).
double ContrastiveLoss(double d, int y, double margin);

// Gradient of the contrastive loss of one pair with respect to every
// parameter, laid out like EmbeddingModel::params().
struct PairGradient {
  double loss = 0.0;
  double distance = 0.0;
  std::vector<double> grad;
};

// Exact gradient of the training-mode loss (pair batch statistics, including
// their dependence on the parameters). Subgradient 0 is used
// at the hinge (d == margin) and for zero coordinates of the L1 difference.
PairGradient Backward(const EmbeddingModel& m, const PairSample& sample,
                      double margin);

// Training-mode loss of one pair, evaluated the same way Backward() does.
double PairLoss(const EmbeddingModel& m, const PairSample& sample,
                double margin);

// Updates the running statistics from the activations of one pair.
void UpdateBatchNormStats(EmbeddingModel* m, const PairSample& sample,
                          double momentum);

// Sets the running statistics to the pooled batch statistics of the first
// `count` samples.
void CalibrateBatchNorm(EmbeddingModel* m, std::span<const PairSample> samples,
                        std::size_t count);

struct TrainResult {
  std::vector<double> epoch_loss;  // mean loss per epoch
  std::size_t steps = 0;
};

// Per-step callback: (step, loss). Optional.
using StepCallback = std::function<void(std::size_t, double)>;

// SGD with momentum; L2 weight decay on conv/linear parameters only.
// Deterministic for a fixed seed and sample order. Throws std::runtime_error
// when the loss becomes non-finite.
TrainResult Train(EmbeddingModel* model, std::span<const PairSample> samples,
                  const TrainConfig& cfg, const StepCallback& on_step = {});

// Fraction of samples classified correctly when predicting "similar" for
// distance < threshold.
double PairAccuracy(const EmbeddingModel& m,
                    std::span<const PairSample> samples, double threshold);

struct DistanceStats {
  double mean_similar = 0.0;
  double mean_dissimilar = 0.0;
  std::size_t similar = 0;
  std::size_t dissimilar = 0;
};
DistanceStats MeanDistances(const EmbeddingModel& m,
                            std::span<const PairSample> samples);

// Distances for every unordered proposal pair with IoU >= nms_thr, computed
// once per image from the scene's feature grid.
DistanceMatrix InferDistanceMatrix(const EmbeddingModel& m, const Scene& scene,
                                   double nms_thr);

}  // namespace crowdnms

#endif  // CROWDNMS_EMBED_H_
