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

#include "crowdnms/embed.h"

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace crowdnms {
namespace {

constexpr std::size_t kLayers = EmbeddingModel::kNumBatchNorm;

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

// Unfolds a [cin][h][w] input into [cin*k*k][h*w] columns for a k x k kernel
// with stride 1 and zero padding k/2.
void Im2Col(const double* in, std::size_t cin, std::size_t h, std::size_t w,
            std::size_t k, double* col) {
  const long pad = static_cast<long>(k / 2);
  const long H = static_cast<long>(h);
  const long W = static_cast<long>(w);
  for (std::size_t ci = 0; ci < cin; ++ci) {
    const double* plane = in + ci * h * w;
    for (long ky = 0; ky < static_cast<long>(k); ++ky) {
      for (long kx = 0; kx < static_cast<long>(k); ++kx) {
        double* row = col + ((ci * k + ky) * k + kx) * h * w;
        const long dy = ky - pad;
        const long dx = kx - pad;
        for (long y = 0; y < H; ++y) {
          const long sy = y + dy;
          for (long x = 0; x < W; ++x) {
            const long sx = x + dx;
            row[y * W + x] = (sy >= 0 && sy < H && sx >= 0 && sx < W)
                                 ? plane[sy * W + sx]
                                 : 0.0;
          }
        }
      }
    }
  }
}

// Inverse of Im2Col: accumulates columns back into a zeroed [cin][h][w].
void Col2Im(const double* col, std::size_t cin, std::size_t h, std::size_t w,
            std::size_t k, double* out) {
  const long pad = static_cast<long>(k / 2);
  const long H = static_cast<long>(h);
  const long W = static_cast<long>(w);
  std::fill(out, out + cin * h * w, 0.0);
  for (std::size_t ci = 0; ci < cin; ++ci) {
    double* plane = out + ci * h * w;
    for (long ky = 0; ky < static_cast<long>(k); ++ky) {
      for (long kx = 0; kx < static_cast<long>(k); ++kx) {
        const double* row = col + ((ci * k + ky) * k + kx) * h * w;
        const long dy = ky - pad;
        const long dx = kx - pad;
        for (long y = std::max(0L, -dy); y < std::min(H, H - dy); ++y) {
          for (long x = std::max(0L, -dx); x < std::min(W, W - dx); ++x) {
            plane[(y + dy) * W + x + dx] += row[y * W + x];
          }
        }
      }
    }
  }
}

// Im2Col into an owned matrix. Products run only on Eigen-allocated operands
// so that vectorised kernels see the same alignment on every call, which keeps
// results bit-identical across runs.
RowMatrix Columns(const double* in, std::size_t cin, std::size_t h,
                  std::size_t w, std::size_t k) {
  RowMatrix cols(static_cast<Eigen::Index>(cin * k * k),
                 static_cast<Eigen::Index>(h * w));
  if (k == 1) {
    cols = ConstMap(in, cols.rows(), cols.cols());
  } else {
    Im2Col(in, cin, h, w, k, cols.data());
  }
  return cols;
}

// 2-D convolution with a square k x k kernel, stride 1 and zero padding k/2.
// Layouts: in [cin][h][w], weight [cout][cin][k][k], out [cout][h][w].
void Conv(const double* in, std::size_t cin, std::size_t h, std::size_t w,
          const double* weight, const double* bias, std::size_t cout,
          std::size_t k, double* out) {
  const auto hw = static_cast<Eigen::Index>(h * w);
  const auto rows = static_cast<Eigen::Index>(cin * k * k);
  const auto co = static_cast<Eigen::Index>(cout);
  const RowMatrix cols = Columns(in, cin, h, w, k);
  RowMatrix o(co, hw);
  o.noalias() = RowMatrix(ConstMap(weight, co, rows)) * cols;
  for (Eigen::Index c = 0; c < co; ++c) o.row(c).array() += bias[c];
  MutMap(out, co, hw) = o;
}

// Accumulates weight/bias gradients and (if din != nullptr) writes the input
// gradient.
void ConvBackward(const double* in, std::size_t cin, std::size_t h,
                  std::size_t w, const double* weight, std::size_t cout,
                  std::size_t k, const double* dout, double* din,
                  double* dweight, double* dbias) {
  const auto hw = static_cast<Eigen::Index>(h * w);
  const auto rows = static_cast<Eigen::Index>(cin * k * k);
  const auto co = static_cast<Eigen::Index>(cout);
  const RowMatrix cols = Columns(in, cin, h, w, k);
  const RowMatrix g = ConstMap(dout, co, hw);
  RowMatrix dw = g * cols.transpose();
  MutMap(dweight, co, rows) += dw;
  const Eigen::VectorXd db = g.rowwise().sum();
  Eigen::Map<Eigen::VectorXd>(dbias, co) += db;
  if (din == nullptr) return;
  RowMatrix dcol(rows, hw);
  dcol.noalias() = RowMatrix(ConstMap(weight, co, rows)).transpose() * g;
  if (k == 1) {
    MutMap(din, rows, hw) = dcol;
    return;
  }
  Col2Im(dcol.data(), cin, h, w, k, din);
}

// Cached activations of one forward pass.
struct Trace {
  std::array<std::vector<double>, kLayers> pre;   // conv output
  std::array<std::vector<double>, kLayers> act;   // relu(pre)
  std::array<std::vector<double>, kLayers> norm;  // bn(act)
  std::vector<double> pooled;
  std::vector<std::size_t> pool_arg;
  std::vector<double> head_in;  // GAP vector or flattened grid
  std::vector<double> embedding;
};

// Forward pass over a batch of ROIs together with the per-channel statistics
// the batch-norm layers normalised with.
struct BatchTrace {
  std::vector<Trace> items;
  bool batch_stats = false;
  std::array<std::vector<double>, kLayers> mean;
  std::array<std::vector<double>, kLayers> var;  // biased
};

struct LayerShape {
  std::size_t cin;
  std::size_t side;
  std::size_t k;
};

class Network {
 public:
  explicit Network(const EmbeddingModel& m) : m_(m), cfg_(m.config()) {
    const std::size_t s = cfg_.roi_size;
    const std::size_t p = m.pooled_size();
    shapes_ = {{{cfg_.in_channels, s, 3},
                {cfg_.width, s, 3},
                {cfg_.width, p, 3},
                {cfg_.width, p, 1},
                {cfg_.width, p, 1},
                {cfg_.width, p, 1}}};
    static const std::array<const char*, kLayers> kConv = {
        "conv1", "conv2", "conv3", "fc1", "fc2", "fc3"};
    for (std::size_t l = 0; l < kLayers; ++l) {
      const std::string bn = "bn" + std::to_string(l + 1);
      weight_[l] = &m.block(std::string(kConv[l]) + ".weight");
      bias_[l] = &m.block(std::string(kConv[l]) + ".bias");
      gamma_[l] = &m.block(bn + ".gamma");
      beta_[l] = &m.block(bn + ".beta");
    }
    head_w_ = &m.block("head.weight");
    head_b_ = &m.block("head.bias");
  }

  void CheckInput(const RoiFeature& roi) const {
    if (roi.channels != cfg_.in_channels || roi.size != cfg_.roi_size ||
        roi.values.size() != roi.channels * roi.size * roi.size) {
      std::ostringstream os;
      os << "roi shape " << roi.channels << "x" << roi.size << "x" << roi.size
         << " does not match model input " << cfg_.in_channels << "x"
         << cfg_.roi_size << "x" << cfg_.roi_size;
      throw std::invalid_argument(os.str());
    }
  }

  // batch_stats: normalise with the statistics of this batch (training);
  // otherwise with the model's running statistics (inference).
  BatchTrace Forward(std::span<const RoiFeature* const> rois,
                     bool batch_stats) const {
    for (const RoiFeature* r : rois) CheckInput(*r);
    const std::size_t wdt = cfg_.width;
    BatchTrace bt;
    bt.batch_stats = batch_stats;
    bt.items.resize(rois.size());
    std::vector<const double*> x(rois.size());
    for (std::size_t b = 0; b < rois.size(); ++b) x[b] = rois[b]->values.data();

    for (std::size_t l = 0; l < kLayers; ++l) {
      const LayerShape& sh = shapes_[l];
      const std::size_t plane = sh.side * sh.side;
      for (std::size_t b = 0; b < rois.size(); ++b) {
        Trace& t = bt.items[b];
        t.pre[l].resize(wdt * plane);
        Conv(x[b], sh.cin, sh.side, sh.side, P(weight_[l]), P(bias_[l]), wdt,
             sh.k, t.pre[l].data());
        t.act[l].resize(wdt * plane);
        for (std::size_t i = 0; i < t.pre[l].size(); ++i) {
          t.act[l][i] = std::max(0.0, t.pre[l][i]);
        }
      }
      if (batch_stats) {
        BatchStats(bt, l, &bt.mean[l], &bt.var[l]);
      } else {
        bt.mean[l].assign(m_.running_mean().begin() + l * wdt,
                          m_.running_mean().begin() + (l + 1) * wdt);
        bt.var[l].assign(m_.running_var().begin() + l * wdt,
                         m_.running_var().begin() + (l + 1) * wdt);
      }
      const double* gamma = P(gamma_[l]);
      const double* beta = P(beta_[l]);
      for (std::size_t b = 0; b < rois.size(); ++b) {
        Trace& t = bt.items[b];
        t.norm[l].resize(wdt * plane);
        for (std::size_t c = 0; c < wdt; ++c) {
          const double inv = InvStd(bt.var[l][c]);
          const double mu = bt.mean[l][c];
          for (std::size_t i = 0; i < plane; ++i) {
            t.norm[l][c * plane + i] =
                gamma[c] * (t.act[l][c * plane + i] - mu) * inv + beta[c];
          }
        }
        x[b] = t.norm[l].data();
        if (l == 1) {
          MaxPool(t.norm[l], sh.side, &t.pooled, &t.pool_arg);
          x[b] = t.pooled.data();
        }
      }
    }
    for (Trace& t : bt.items) Head(&t);
    return bt;
  }

  std::vector<double> Embed(const RoiFeature& roi) const {
    const RoiFeature* r = &roi;
    return Forward(std::span<const RoiFeature* const>(&r, 1), false)
        .items[0]
        .embedding;
  }

  // Accumulates d(loss)/d(params) into `grad` given d(loss)/d(embedding) of
  // every batch item.
  void Backward(std::span<const RoiFeature* const> rois, const BatchTrace& bt,
                const std::vector<std::vector<double>>& d_embed,
                std::vector<double>* grad) const {
    const std::size_t wdt = cfg_.width;
    const std::size_t n_items = rois.size();
    std::vector<std::vector<double>> d_norm(n_items);
    for (std::size_t b = 0; b < n_items; ++b) {
      HeadBackward(bt.items[b], d_embed[b], grad, &d_norm[b]);
    }

    std::vector<std::vector<double>> d_pre(n_items);
    std::vector<double> d_in;
    for (std::size_t l = kLayers; l-- > 0;) {
      const LayerShape& sh = shapes_[l];
      const std::size_t pl = sh.side * sh.side;
      const double* gamma = P(gamma_[l]);
      double* g_gamma = grad->data() + gamma_[l]->offset;
      double* g_beta = grad->data() + beta_[l]->offset;
      const double count = static_cast<double>(n_items * pl);

      for (std::size_t b = 0; b < n_items; ++b) d_pre[b].assign(wdt * pl, 0.0);
      for (std::size_t c = 0; c < wdt; ++c) {
        const double inv = InvStd(bt.var[l][c]);
        const double mu = bt.mean[l][c];
        double sum_dy = 0.0;
        double sum_dy_xhat = 0.0;
        for (std::size_t b = 0; b < n_items; ++b) {
          const Trace& t = bt.items[b];
          for (std::size_t i = 0; i < pl; ++i) {
            const std::size_t idx = c * pl + i;
            const double dy = d_norm[b][idx];
            sum_dy += dy;
            sum_dy_xhat += dy * (t.act[l][idx] - mu) * inv;
          }
        }
        g_gamma[c] += sum_dy_xhat;
        g_beta[c] += sum_dy;
        const double mean_dy = bt.batch_stats ? sum_dy / count : 0.0;
        const double mean_dy_xhat = bt.batch_stats ? sum_dy_xhat / count : 0.0;
        for (std::size_t b = 0; b < n_items; ++b) {
          const Trace& t = bt.items[b];
          for (std::size_t i = 0; i < pl; ++i) {
            const std::size_t idx = c * pl + i;
            if (!(t.pre[l][idx] > 0.0)) continue;
            const double xhat = (t.act[l][idx] - mu) * inv;
            d_pre[b][idx] = gamma[c] * inv *
                            (d_norm[b][idx] - mean_dy - xhat * mean_dy_xhat);
          }
        }
      }

      const bool need_input_grad = l > 0;
      for (std::size_t b = 0; b < n_items; ++b) {
        const Trace& t = bt.items[b];
        const double* input = l == 0   ? rois[b]->values.data()
                              : l == 2 ? t.pooled.data()
                                       : t.norm[l - 1].data();
        d_in.assign(need_input_grad ? sh.cin * pl : 0, 0.0);
        ConvBackward(input, sh.cin, sh.side, sh.side, P(weight_[l]), wdt, sh.k,
                     d_pre[b].data(), need_input_grad ? d_in.data() : nullptr,
                     grad->data() + weight_[l]->offset,
                     grad->data() + bias_[l]->offset);
        if (!need_input_grad) continue;
        if (l == 2) {
          // Route the pooled gradient back to the arg-max positions of bn2.
          const std::size_t s = shapes_[1].side;
          d_norm[b].assign(wdt * s * s, 0.0);
          for (std::size_t i = 0; i < d_in.size(); ++i) {
            d_norm[b][t.pool_arg[i]] += d_in[i];
          }
        } else {
          d_norm[b].swap(d_in);
        }
      }
    }
  }

 private:
  static double InvStd(double var) {
    return 1.0 / std::sqrt(var + EmbeddingModel::kBatchNormEps);
  }

  const double* P(const ParamBlock* b) const {
    return m_.params().data() + b->offset;
  }

  // Per-channel mean and biased variance of layer `l`'s post-relu
  // activations over every item and position of the batch.
  void BatchStats(const BatchTrace& bt, std::size_t l,
                  std::vector<double>* mean, std::vector<double>* var) const {
    const std::size_t wdt = cfg_.width;
    const std::size_t plane = bt.items.front().act[l].size() / wdt;
    const double n = static_cast<double>(bt.items.size() * plane);
    mean->assign(wdt, 0.0);
    var->assign(wdt, 0.0);
    for (std::size_t c = 0; c < wdt; ++c) {
      double s = 0.0;
      for (const Trace& t : bt.items) {
        for (std::size_t i = 0; i < plane; ++i) s += t.act[l][c * plane + i];
      }
      const double mu = s / n;
      double ss = 0.0;
      for (const Trace& t : bt.items) {
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = t.act[l][c * plane + i] - mu;
          ss += d * d;
        }
      }
      (*mean)[c] = mu;
      (*var)[c] = ss / n;
    }
  }

  void Head(Trace* t) const {
    const std::size_t wdt = cfg_.width;
    const std::size_t plane = m_.pooled_size() * m_.pooled_size();
    const std::vector<double>& top = t->norm[kLayers - 1];
    if (cfg_.head == HeadType::kGap) {
      t->head_in.assign(wdt, 0.0);
      for (std::size_t c = 0; c < wdt; ++c) {
        double acc = 0.0;
        for (std::size_t i = 0; i < plane; ++i) acc += top[c * plane + i];
        t->head_in[c] = acc / static_cast<double>(plane);
      }
    } else {
      t->head_in = top;
    }
    const std::size_t fan_in = t->head_in.size();
    const double* hw = P(head_w_);
    const double* hb = P(head_b_);
    t->embedding.resize(cfg_.embedding_dim);
    for (std::size_t d = 0; d < cfg_.embedding_dim; ++d) {
      double acc = hb[d];
      for (std::size_t i = 0; i < fan_in; ++i) {
        acc += hw[d * fan_in + i] * t->head_in[i];
      }
      t->embedding[d] = acc;
    }
  }

  void HeadBackward(const Trace& t, std::span<const double> d_embed,
                    std::vector<double>* grad,
                    std::vector<double>* d_norm) const {
    const std::size_t wdt = cfg_.width;
    const std::size_t plane = m_.pooled_size() * m_.pooled_size();
    const std::size_t fan_in = t.head_in.size();
    const double* hw = P(head_w_);
    double* g_hw = grad->data() + head_w_->offset;
    double* g_hb = grad->data() + head_b_->offset;
    std::vector<double> d_head_in(fan_in, 0.0);
    for (std::size_t d = 0; d < cfg_.embedding_dim; ++d) {
      const double gd = d_embed[d];
      if (gd == 0.0) continue;
      g_hb[d] += gd;
      for (std::size_t i = 0; i < fan_in; ++i) {
        g_hw[d * fan_in + i] += gd * t.head_in[i];
        d_head_in[i] += gd * hw[d * fan_in + i];
      }
    }
    if (cfg_.head == HeadType::kGap) {
      d_norm->assign(wdt * plane, 0.0);
      for (std::size_t c = 0; c < wdt; ++c) {
        const double v = d_head_in[c] / static_cast<double>(plane);
        std::fill(d_norm->begin() + c * plane,
                  d_norm->begin() + (c + 1) * plane, v);
      }
    } else {
      *d_norm = std::move(d_head_in);
    }
  }

  // 2x2 max pooling with stride 2; ties resolve to the first element in
  // row-major order.
  void MaxPool(const std::vector<double>& in, std::size_t side,
               std::vector<double>* out, std::vector<std::size_t>* arg) const {
    const std::size_t p = side / 2;
    const std::size_t wdt = cfg_.width;
    out->assign(wdt * p * p, 0.0);
    arg->assign(wdt * p * p, 0);
    for (std::size_t c = 0; c < wdt; ++c) {
      for (std::size_t y = 0; y < p; ++y) {
        for (std::size_t x = 0; x < p; ++x) {
          std::size_t best = c * side * side + (2 * y) * side + 2 * x;
          for (std::size_t dy = 0; dy < 2; ++dy) {
            for (std::size_t dx = 0; dx < 2; ++dx) {
              const std::size_t idx =
                  c * side * side + (2 * y + dy) * side + (2 * x + dx);
              if (in[idx] > in[best]) best = idx;
            }
          }
          const std::size_t o = (c * p + y) * p + x;
          (*out)[o] = in[best];
          (*arg)[o] = best;
        }
      }
    }
  }

  const EmbeddingModel& m_;
  const ModelConfig& cfg_;
  std::array<LayerShape, kLayers> shapes_;
  std::array<const ParamBlock*, kLayers> weight_{};
  std::array<const ParamBlock*, kLayers> bias_{};
  std::array<const ParamBlock*, kLayers> gamma_{};
  std::array<const ParamBlock*, kLayers> beta_{};
  const ParamBlock* head_w_ = nullptr;
  const ParamBlock* head_b_ = nullptr;
};

double Sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// d(loss)/d(distance), with subgradient 0 at the hinge.
double LossSlope(double d, int y, double margin) {
  if (y == 1) return 1.0;
  return d < margin ? -1.0 : 0.0;
}

struct PairPass {
  std::array<const RoiFeature*, 2> rois;
  BatchTrace bt;
  double distance = 0.0;
};

// Training-mode pass: both ROIs form one batch-norm batch.
PairPass ForwardPair(const Network& net, const PairSample& s) {
  PairPass pp;
  pp.rois = {&s.roi_i, &s.roi_j};
  pp.bt = net.Forward(pp.rois, true);
  pp.distance = L1Distance(pp.bt.items[0].embedding, pp.bt.items[1].embedding);
  return pp;
}

PairGradient BackwardFromPass(const EmbeddingModel& m, const Network& net,
                              const PairSample& s, const PairPass& pp,
                              double margin) {
  PairGradient g;
  g.distance = pp.distance;
  g.loss = ContrastiveLoss(pp.distance, s.label.y, margin);
  g.grad.assign(m.params().size(), 0.0);
  const double slope = LossSlope(pp.distance, s.label.y, margin);
  if (slope == 0.0) return g;
  const std::size_t dim = m.config().embedding_dim;
  std::vector<std::vector<double>> de(2, std::vector<double>(dim));
  bool any = false;
  for (std::size_t k = 0; k < dim; ++k) {
    const double sg =
        Sign(pp.bt.items[0].embedding[k] - pp.bt.items[1].embedding[k]);
    de[0][k] = slope * sg;
    de[1][k] = -slope * sg;
    any = any || sg != 0.0;
  }
  if (!any) return g;
  net.Backward(pp.rois, pp.bt, de, &g.grad);
  return g;
}

void ApplyStats(EmbeddingModel* m, const PairPass& pp, double momentum) {
  const std::size_t wdt = m->config().width;
  auto rm = m->mutable_running_mean();
  auto rv = m->mutable_running_var();
  for (std::size_t l = 0; l < kLayers; ++l) {
    for (std::size_t c = 0; c < wdt; ++c) {
      rm[l * wdt + c] =
          momentum * rm[l * wdt + c] + (1.0 - momentum) * pp.bt.mean[l][c];
      rv[l * wdt + c] =
          momentum * rv[l * wdt + c] + (1.0 - momentum) * pp.bt.var[l][c];
    }
  }
}

}  // namespace

void Validate(const TrainConfig& cfg) {
  if (!(cfg.learning_rate >= 0.0) || !(cfg.momentum >= 0.0) ||
      !(cfg.momentum < 1.0) || !(cfg.weight_decay >= 0.0)) {
    throw std::invalid_argument("invalid optimiser settings");
  }
  if (cfg.batch_size == 0)
    throw std::invalid_argument("batch size must be > 0");
  if (!(cfg.margin > 0.0)) throw std::invalid_argument("margin must be > 0");
  if (cfg.epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (!(cfg.bn_momentum >= 0.0 && cfg.bn_momentum <= 1.0)) {
    throw std::invalid_argument("batch-norm momentum must lie in [0, 1]");
  }
}

EmbeddingModel::EmbeddingModel(const ModelConfig& cfg, std::uint64_t seed)
    : cfg_(cfg) {
  if (cfg.in_channels == 0 || cfg.width == 0 || cfg.embedding_dim == 0 ||
      cfg.roi_size < 2) {
    throw std::invalid_argument("invalid model configuration");
  }
  const std::size_t w = cfg.width;
  const std::size_t p = pooled_size();
  const std::array<std::size_t, kLayers> cin = {cfg.in_channels, w, w, w, w, w};
  const std::array<std::size_t, kLayers> ksz = {3, 3, 3, 1, 1, 1};
  const std::array<const char*, kLayers> names = {"conv1", "conv2", "conv3",
                                                  "fc1",   "fc2",   "fc3"};
  for (std::size_t l = 0; l < kLayers; ++l) {
    AddBlock(std::string(names[l]) + ".weight", w * cin[l] * ksz[l] * ksz[l],
             true);
    AddBlock(std::string(names[l]) + ".bias", w, true);
    AddBlock("bn" + std::to_string(l + 1) + ".gamma", w, false);
    AddBlock("bn" + std::to_string(l + 1) + ".beta", w, false);
  }
  const std::size_t head_in = cfg.head == HeadType::kGap ? w : w * p * p;
  AddBlock("head.weight", cfg.embedding_dim * head_in, true);
  AddBlock("head.bias", cfg.embedding_dim, true);

  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l < kLayers; ++l) {
    const double bound =
        std::sqrt(6.0 / static_cast<double>(cin[l] * ksz[l] * ksz[l]));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (double& v : mutable_block(std::string(names[l]) + ".weight")) {
      v = u(rng);
    }
    for (double& v : mutable_block("bn" + std::to_string(l + 1) + ".gamma")) {
      v = 1.0;
    }
  }
  const double bound = std::sqrt(3.0 / static_cast<double>(head_in));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (double& v : mutable_block("head.weight")) v = u(rng);

  running_mean_.assign(kNumBatchNorm * w, 0.0);
  running_var_.assign(kNumBatchNorm * w, 1.0);
}

void EmbeddingModel::AddBlock(const std::string& name, std::size_t size,
                              bool decay) {
  blocks_.push_back({name, params_.size(), size, decay});
  params_.resize(params_.size() + size, 0.0);
}

const ParamBlock& EmbeddingModel::block(const std::string& name) const {
  for (const ParamBlock& b : blocks_) {
    if (b.name == name) return b;
  }
  throw std::out_of_range("no parameter block named " + name);
}

std::span<double> EmbeddingModel::mutable_block(const std::string& name) {
  const ParamBlock& b = block(name);
  return std::span<double>(params_).subspan(b.offset, b.size);
}

std::vector<double> EmbeddingModel::Forward(const RoiFeature& roi) const {
  return Network(*this).Embed(roi);
}

double L1Distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("embedding length mismatch");
  }
  double d = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) d += std::abs(a[k] - b[k]);
  return d;
}

double PairDistance(const EmbeddingModel& m, const RoiFeature& roi_i,
                    const RoiFeature& roi_j) {
  return L1Distance(m.Forward(roi_i), m.Forward(roi_j));
}

double ContrastiveLoss(double d, int y, double margin) {
  return y == 1 ? d : std::max(0.0, margin - d);
}

PairGradient Backward(const EmbeddingModel& m, const PairSample& sample,
                      double margin) {
  const Network net(m);
  const PairPass pp = ForwardPair(net, sample);
  return BackwardFromPass(m, net, sample, pp, margin);
}

double PairLoss(const EmbeddingModel& m, const PairSample& sample,
                double margin) {
  const Network net(m);
  return ContrastiveLoss(ForwardPair(net, sample).distance, sample.label.y,
                         margin);
}

void UpdateBatchNormStats(EmbeddingModel* m, const PairSample& sample,
                          double momentum) {
  const PairPass pp = ForwardPair(Network(*m), sample);
  ApplyStats(m, pp, momentum);
}

void CalibrateBatchNorm(EmbeddingModel* m, std::span<const PairSample> samples,
                        std::size_t count) {
  count = std::min(count, samples.size());
  if (count == 0) return;
  const std::size_t wdt = m->config().width;
  const std::size_t n = kLayers * wdt;
  std::vector<double> acc_mean(n, 0.0);
  std::vector<double> acc_sq(n, 0.0);
  const Network net(*m);
  for (std::size_t s = 0; s < count; ++s) {
    const PairPass pp = ForwardPair(net, samples[s]);
    for (std::size_t l = 0; l < kLayers; ++l) {
      for (std::size_t c = 0; c < wdt; ++c) {
        const double mu = pp.bt.mean[l][c];
        acc_mean[l * wdt + c] += mu;
        acc_sq[l * wdt + c] += pp.bt.var[l][c] + mu * mu;
      }
    }
  }
  auto rm = m->mutable_running_mean();
  auto rv = m->mutable_running_var();
  const double k = static_cast<double>(count);
  for (std::size_t i = 0; i < n; ++i) {
    rm[i] = acc_mean[i] / k;
    rv[i] = std::max(0.0, acc_sq[i] / k - rm[i] * rm[i]);
  }
}

TrainResult Train(EmbeddingModel* model, std::span<const PairSample> samples,
                  const TrainConfig& cfg, const StepCallback& on_step) {
  Validate(cfg);
  if (samples.empty()) throw std::invalid_argument("no training samples");
  if (cfg.bn_calibration_samples > 0) {
    CalibrateBatchNorm(model, samples, cfg.bn_calibration_samples);
  }

  const std::size_t n_params = model->params().size();
  std::vector<double> velocity(n_params, 0.0);
  std::vector<double> batch_grad(n_params, 0.0);
  std::vector<char> decays(n_params, 0);
  for (const ParamBlock& b : model->blocks()) {
    std::fill(decays.begin() + b.offset, decays.begin() + b.offset + b.size,
              b.weight_decay ? 1 : 0);
  }

  std::vector<std::size_t> order(samples.size());
  std::mt19937_64 rng(cfg.seed);
  TrainResult result;
  std::size_t in_batch = 0;

  auto step = [&]() {
    auto params = model->mutable_params();
    const double scale = 1.0 / static_cast<double>(in_batch);
    for (std::size_t i = 0; i < n_params; ++i) {
      double g = batch_grad[i] * scale;
      if (decays[i]) g += cfg.weight_decay * params[i];
      velocity[i] = cfg.momentum * velocity[i] + cfg.learning_rate * g;
      params[i] -= velocity[i];
    }
    std::fill(batch_grad.begin(), batch_grad.end(), 0.0);
    in_batch = 0;
  };

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (cfg.shuffle) std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t idx : order) {
      const PairSample& s = samples[idx];
      const Network net(*model);
      const PairPass pp = ForwardPair(net, s);
      const PairGradient g = BackwardFromPass(*model, net, s, pp, cfg.margin);
      if (!std::isfinite(g.loss)) {
        std::ostringstream os;
        os << "non-finite loss at epoch " << epoch << ", step " << result.steps
           << " (image " << s.image_id << ", pair " << s.index_i << "/"
           << s.index_j << ", distance " << g.distance << ")";
        throw std::runtime_error(os.str());
      }
      for (std::size_t i = 0; i < n_params; ++i) batch_grad[i] += g.grad[i];
      ++in_batch;
      ApplyStats(model, pp, cfg.bn_momentum);
      loss_sum += g.loss;
      if (on_step) on_step(result.steps, g.loss);
      ++result.steps;
      if (in_batch == cfg.batch_size) step();
    }
    if (in_batch > 0) step();
    result.epoch_loss.push_back(loss_sum / static_cast<double>(samples.size()));
  }
  return result;
}

double PairAccuracy(const EmbeddingModel& m,
                    std::span<const PairSample> samples, double threshold) {
  if (samples.empty()) return 0.0;
  std::size_t correct = 0;
  for (const PairSample& s : samples) {
    const double d = PairDistance(m, s.roi_i, s.roi_j);
    const int predicted = d < threshold ? 1 : 0;
    if (predicted == s.label.y) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

DistanceStats MeanDistances(const EmbeddingModel& m,
                            std::span<const PairSample> samples) {
  DistanceStats st;
  for (const PairSample& s : samples) {
    const double d = PairDistance(m, s.roi_i, s.roi_j);
    if (s.label.y == 1) {
      st.mean_similar += d;
      ++st.similar;
    } else {
      st.mean_dissimilar += d;
      ++st.dissimilar;
    }
  }
  if (st.similar > 0) st.mean_similar /= static_cast<double>(st.similar);
  if (st.dissimilar > 0) {
    st.mean_dissimilar /= static_cast<double>(st.dissimilar);
  }
  return st;
}

DistanceMatrix InferDistanceMatrix(const EmbeddingModel& m, const Scene& scene,
                                   double nms_thr) {
  DistanceMatrix dm(scene.image_id);
  const auto& props = scene.proposals;
  std::vector<std::vector<double>> cache(props.size());
  auto embedding = [&](std::size_t i) -> const std::vector<double>& {
    if (cache[i].empty()) {
      cache[i] = m.Forward(
          RoiAlign(scene.features, props[i].box, m.config().roi_size));
    }
    return cache[i];
  };
  for (std::size_t i = 0; i < props.size(); ++i) {
    for (std::size_t j = i + 1; j < props.size(); ++j) {
      if (Iou(props[i].box, props[j].box) < nms_thr) continue;
      dm.Set(i, j, L1Distance(embedding(i), embedding(j)));
    }
  }
  return dm;
}

}  // namespace crowdnms
