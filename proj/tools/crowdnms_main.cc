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

// crowdnms: command-line driver for the detection post-processing pipeline.
//
//   crowdnms gen --scenes 200 --out corpus
//   crowdnms gen --scenes 100 --first-index 100000 --out val
//   crowdnms train --corpus corpus --val-corpus val --out model.bin
//   crowdnms distances --corpus val --model model.bin --out dist.jsonl
//   crowdnms nms --method pairwise --nt 0.5 --dt 0.5 --distances dist.jsonl
//       --proposals val/proposals.jsonl --out dets.jsonl
//   crowdnms eval --detections dets.jsonl --gt val/gt.jsonl --out eval.json
//   crowdnms report --input greedy=a.json --input pairwise=b.json --out r

#include <cmath>
#include <cstdio>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "crowdnms/pipeline.h"
#include "crowdnms/suppress.h"

namespace crowdnms {
namespace {

struct Globals {
  std::uint64_t seed = 1;
  std::string out_dir = ".";
  std::size_t threads = 0;

  std::size_t Threads() const {
    return threads > 0 ? threads : DefaultThreads();
  }
  // Relative output paths land under --out-dir.
  fs::path Out(const std::string& p) const {
    const fs::path path(p);
    return path.is_absolute() ? path : fs::path(out_dir) / path;
  }
};

double ParseDouble(const std::string& s) {
  if (s == "inf" || s == "+inf" || s == "infinity") {
    return std::numeric_limits<double>::infinity();
  }
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw std::invalid_argument("bad number '" + s + "'");
  return v;
}

void AddRangeOption(CLI::App* app, const std::string& name, Range* r,
                    const std::string& help) {
  app->add_option_function<std::string>(
         name, [r](const std::string& s) { *r = ParseRange(s); }, help)
      ->type_name("LO:HI");
}

int Run(int argc, char** argv) {
  CLI::App app{"Pairwise-NMS detection post-processing toolkit"};
  app.require_subcommand(1);
  app.set_config("--config", "", "key=value config file; flags override");
  Globals g;
  app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
  app.add_option("--out-dir", g.out_dir, "Base directory for relative outputs")
      ->capture_default_str();
  app.add_option("--threads", g.threads,
                 "Worker threads (default: CROWDNMS_THREADS or all cores)");

  // gen
  GenOptions gen;
  std::string gen_out = "corpus";
  CLI::App* gen_cmd = app.add_subcommand("gen", "Generate a synthetic corpus");
  gen_cmd->add_option("--scenes", gen.scenes, "Number of scenes")->required();
  gen_cmd->add_option("--first-index", gen.first_index, "Index of first scene");
  gen_cmd->add_option("--out", gen_out, "Corpus directory")
      ->capture_default_str();
  AddRangeOption(gen_cmd, "--occlusion", &gen.scene.occlusion,
                 "IoU range of the occluded pair");
  gen_cmd->add_option("--width", gen.scene.image_width, "Image width");
  gen_cmd->add_option("--height", gen.scene.image_height, "Image height");
  gen_cmd->add_option("--channels", gen.scene.channels, "Feature channels");
  gen_cmd->add_option("--min-objects", gen.scene.objects_min);
  gen_cmd->add_option("--max-objects", gen.scene.objects_max);
  gen_cmd->add_option("--proposals-per-object", gen.scene.proposals_per_object);
  gen_cmd->add_option("--center-jitter", gen.scene.center_jitter);
  gen_cmd->add_option("--size-jitter", gen.scene.size_jitter);
  gen_cmd->add_option("--score-noise", gen.scene.score_noise);
  gen_cmd->add_option("--signature-strength", gen.scene.signature_strength);
  gen_cmd->add_option("--noise-strength", gen.scene.noise_strength);

  // sample-pairs
  SamplePairsOptions sp;
  std::string sp_corpus, sp_out = "pairs.jsonl";
  CLI::App* sp_cmd =
      app.add_subcommand("sample-pairs", "Sample labelled training pairs");
  sp_cmd->add_option("--corpus", sp_corpus)->required();
  sp_cmd->add_option("--out", sp_out)->capture_default_str();
  sp_cmd->add_option("--pairs-per-image", sp.sampling.pairs_per_image);

  // train
  TrainOptions tr;
  std::string tr_corpus, tr_val, tr_out = "model.bin", tr_log;
  std::string head = "gap";
  CLI::App* tr_cmd = app.add_subcommand("train", "Train the pair embedding");
  tr_cmd->add_option("--corpus", tr_corpus)->required();
  tr_cmd->add_option("--val-corpus", tr_val, "Held-out corpus for accuracy");
  tr_cmd->add_option("--out", tr_out)->capture_default_str();
  tr_cmd->add_option("--log", tr_log, "Training log (json)");
  tr_cmd->add_option("--pairs-per-image", tr.sampling.pairs_per_image);
  tr_cmd->add_option("--lr", tr.train.learning_rate)->capture_default_str();
  tr_cmd->add_option("--momentum", tr.train.momentum)->capture_default_str();
  tr_cmd->add_option("--weight-decay", tr.train.weight_decay)
      ->capture_default_str();
  tr_cmd->add_option("--margin", tr.train.margin)->capture_default_str();
  tr_cmd->add_option("--epochs", tr.train.epochs)->capture_default_str();
  tr_cmd->add_option("--width", tr.model.width)->capture_default_str();
  tr_cmd->add_option("--embedding-dim", tr.model.embedding_dim)
      ->capture_default_str();
  tr_cmd->add_option("--head", head)
      ->check(CLI::IsMember({"gap", "fc"}))
      ->capture_default_str();

  // distances
  DistancesOptions di;
  std::string di_corpus, di_model, di_out = "distances.jsonl";
  CLI::App* di_cmd =
      app.add_subcommand("distances", "Infer pairwise embedding distances");
  di_cmd->add_option("--corpus", di_corpus)->required();
  di_cmd->add_option("--model", di_model)->required();
  di_cmd->add_option("--nt", di.nms_thr, "Only pairs with IoU >= nt")
      ->capture_default_str();
  di_cmd->add_option("--out", di_out)->capture_default_str();

  // nms
  NmsOptions nm;
  std::string nm_props, nm_out = "detections.jsonl", nm_dist, method = "greedy";
  std::string dt_str, sigma_str;
  CLI::App* nm_cmd = app.add_subcommand("nms", "Suppress duplicate proposals");
  nm_cmd->add_option("--proposals", nm_props)->required();
  nm_cmd->add_option("--out", nm_out)->capture_default_str();
  nm_cmd->add_option("--method", method)
      ->check(
          CLI::IsMember({"greedy", "soft-linear", "soft-gaussian", "pairwise"}))
      ->capture_default_str();
  nm_cmd->add_option("--nt", nm.suppression.nms_thr)->capture_default_str();
  nm_cmd->add_option("--dt", dt_str, "Distance threshold (number or inf)");
  nm_cmd->add_option("--sigma", sigma_str, "Gaussian Soft-NMS sigma");
  nm_cmd->add_option("--theta", nm.suppression.theta)->capture_default_str();
  nm_cmd->add_option("--distances", nm_dist, "Distance file (pairwise)");

  // eval
  EvalOptions ev;
  std::string ev_dets, ev_gt, ev_out = "eval.json", ev_csv;
  std::string et = "0.5:0.95:0.05", buckets = "0.4:0.9:0.05";
  bool all_point = false;
  CLI::App* ev_cmd = app.add_subcommand("eval", "Evaluate detections");
  ev_cmd->add_option("--detections", ev_dets)->required();
  ev_cmd->add_option("--gt", ev_gt)->required();
  ev_cmd->add_option("--out", ev_out)->capture_default_str();
  ev_cmd->add_option("--csv-prefix", ev_csv, "Write PR/AP/F1 csv files");
  ev_cmd->add_option("--et", et, "Evaluation IoU thresholds")
      ->capture_default_str();
  ev_cmd->add_option("--buckets", buckets, "Occlusion buckets")
      ->capture_default_str();
  ev_cmd->add_option("--f1-et", ev.eval.f1_eval_thr)->capture_default_str();
  ev_cmd->add_flag("--all-point", all_point, "All-point interpolated AP");

  // report
  ReportOptions rp;
  std::vector<std::string> rp_inputs;
  std::string rp_out = "report";
  CLI::App* rp_cmd =
      app.add_subcommand("report", "Merge eval outputs into comparison CSVs");
  rp_cmd->add_option("--input", rp_inputs, "label=eval.json (first: baseline)")
      ->required();
  rp_cmd->add_option("--out", rp_out)->capture_default_str();

  CLI::App* ps_cmd =
      app.add_subcommand("presets", "Print the E_t -> (N_t, D_t) presets");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  const std::size_t threads = g.Threads();
  if (*gen_cmd) {
    gen.scene.seed = g.seed;
    gen.out_dir = g.Out(gen_out);
    gen.threads = threads;
    CmdGen(gen);
  } else if (*sp_cmd) {
    sp.corpus = sp_corpus;
    sp.sampling.seed = g.seed;
    sp.out = g.Out(sp_out);
    sp.threads = threads;
    CmdSamplePairs(sp);
  } else if (*tr_cmd) {
    tr.corpus = tr_corpus;
    if (!tr_val.empty()) tr.val_corpus = fs::path(tr_val);
    tr.out_model = g.Out(tr_out);
    if (!tr_log.empty()) tr.out_log = g.Out(tr_log);
    tr.model.head = head == "fc" ? HeadType::kFc : HeadType::kGap;
    tr.sampling.seed = g.seed;
    tr.train.seed = g.seed;
    tr.init_seed = g.seed;
    tr.threads = threads;
    tr.log = [](const std::string& m) { std::cerr << m << '\n'; };
    const TrainSummary s = CmdTrain(tr);
    if (s.val_accuracy) {
      std::cout << "val_accuracy " << *s.val_accuracy << '\n';
    }
  } else if (*di_cmd) {
    di.corpus = di_corpus;
    di.model = di_model;
    di.out = g.Out(di_out);
    di.threads = threads;
    CmdDistances(di);
  } else if (*nm_cmd) {
    nm.suppression.method = ParseNmsMethod(method);
    if (!dt_str.empty()) nm.suppression.dist_thr = ParseDouble(dt_str);
    if (!sigma_str.empty()) nm.suppression.sigma = ParseDouble(sigma_str);
    if (nm.suppression.method == NmsMethod::kPairwise) {
      if (nm_dist.empty()) {
        std::cerr << "nms: --method pairwise requires --distances FILE\n";
        return 2;
      }
      if (!nm.suppression.dist_thr) {
        std::cerr << "nms: --method pairwise requires --dt\n";
        return 2;
      }
    }
    if (nm.suppression.method == NmsMethod::kSoftGaussian &&
        !nm.suppression.sigma) {
      std::cerr << "nms: --method soft-gaussian requires --sigma\n";
      return 2;
    }
    nm.proposals = nm_props;
    if (!nm_dist.empty()) nm.distances = fs::path(nm_dist);
    nm.out = g.Out(nm_out);
    nm.threads = threads;
    CmdNms(nm);
  } else if (*ev_cmd) {
    ev.detections = ev_dets;
    ev.gt = ev_gt;
    ev.eval.eval_thrs = ParseThresholdList(et);
    ev.eval.buckets = ParseBuckets(buckets);
    if (all_point) ev.eval.interpolation = ApInterpolation::kAllPoint;
    ev.out_json = g.Out(ev_out);
    if (!ev_csv.empty()) ev.csv_prefix = g.Out(ev_csv);
    const EvalReport r = CmdEval(ev);
    for (const ThresholdResult& t : r.thresholds) {
      std::printf("AP@%.2f %s\n", t.eval_thr,
                  t.ap ? std::to_string(*t.ap).c_str() : "n/a");
    }
  } else if (*rp_cmd) {
    for (const std::string& in : rp_inputs) {
      const auto eq = in.find('=');
      if (eq == std::string::npos) {
        rp.inputs.emplace_back(fs::path(in).stem().string(), in);
      } else {
        rp.inputs.emplace_back(in.substr(0, eq), in.substr(eq + 1));
      }
    }
    rp.out_dir = g.Out(rp_out);
    CmdReport(rp);
  } else if (*ps_cmd) {
    std::printf("eval_thr,nms_thr,dist_thr\n");
    for (const Preset& p : Presets()) {
      std::printf("%g,%g,%g\n", p.eval_thr, p.nms_thr, p.dist_thr);
    }
  }
  return 0;
}

}  // namespace
}  // namespace crowdnms

int main(int argc, char** argv) {
  try {
    return crowdnms::Run(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
