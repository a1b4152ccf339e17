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

#include "crowdnms/pipeline.h"

#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "crowdnms/io.h"
#include "json.hpp"

namespace crowdnms {
namespace {

using ordered_json = nlohmann::ordered_json;

std::string Num(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::ifstream OpenIn(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + p.string());
  return is;
}

std::ofstream OpenOut(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  return os;
}

void Close(std::ofstream& os, const fs::path& p) {
  os.close();
  if (!os) throw std::runtime_error("failed writing " + p.string());
}

fs::path FeaturePath(const fs::path& corpus, ImageId id) {
  return corpus / "features" / (std::to_string(id) + ".bin");
}

std::vector<double> ParseNumberList(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    const double v = std::stod(item, &used);
    if (used != item.size()) throw std::invalid_argument("bad number " + item);
    out.push_back(v);
  }
  return out;
}

bool ParseColonTriple(const std::string& text, double* lo, double* hi,
                      double* step) {
  const auto a = text.find(':');
  if (a == std::string::npos) return false;
  const auto b = text.find(':', a + 1);
  if (b == std::string::npos) return false;
  *lo = std::stod(text.substr(0, a));
  *hi = std::stod(text.substr(a + 1, b - a - 1));
  *step = std::stod(text.substr(b + 1));
  if (!(*step > 0.0) || *hi < *lo) {
    throw std::invalid_argument("bad range '" + text + "'");
  }
  return true;
}

}  // namespace

std::size_t DefaultThreads() {
  if (const char* env = std::getenv("CROWDNMS_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<std::size_t>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void ParallelFor(std::size_t n, std::size_t threads,
                 const std::function<void(std::size_t)>& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

void CmdGen(const GenOptions& opt) {
  if (opt.scenes < 0) throw std::invalid_argument("--scenes must be >= 0");
  Validate(opt.scene);
  fs::create_directories(opt.out_dir / "features");
  std::vector<Scene> scenes(static_cast<std::size_t>(opt.scenes));
  ParallelFor(scenes.size(), opt.threads, [&](std::size_t k) {
    scenes[k] = GenerateScene(opt.scene,
                              opt.first_index + static_cast<std::int64_t>(k));
  });

  std::vector<SceneMeta> meta;
  std::vector<GtObject> gt;
  std::vector<ScoredProposal> props;
  for (const Scene& s : scenes) {
    meta.push_back({s.image_id, s.width, s.height});
    gt.insert(gt.end(), s.gt.begin(), s.gt.end());
    props.insert(props.end(), s.proposals.begin(), s.proposals.end());
    const fs::path fp = FeaturePath(opt.out_dir, s.image_id);
    std::ofstream os = OpenOut(fp);
    WriteFeatureGrid(os, s.features);
    Close(os, fp);
  }
  auto write = [&](const char* name, auto&& writer) {
    const fs::path p = opt.out_dir / name;
    std::ofstream os = OpenOut(p);
    writer(os);
    Close(os, p);
  };
  write("scenes.jsonl", [&](std::ostream& os) { WriteSceneMeta(os, meta); });
  write("gt.jsonl", [&](std::ostream& os) { WriteGt(os, gt); });
  write("proposals.jsonl",
        [&](std::ostream& os) { WriteProposals(os, props); });
}

std::vector<Scene> LoadCorpus(const fs::path& dir) {
  auto read = [&](const char* name, auto&& reader) {
    const fs::path p = dir / name;
    std::ifstream is = OpenIn(p);
    return reader(is, p.string());
  };
  const auto meta =
      read("scenes.jsonl", [](std::istream& is, const std::string& src) {
        return ReadSceneMeta(is, src);
      });
  const auto gt = read(
      "gt.jsonl",
      [](std::istream& is, const std::string& src) { return ReadGt(is, src); });
  const auto props =
      read("proposals.jsonl", [](std::istream& is, const std::string& src) {
        return ReadProposals(is, src);
      });

  std::map<ImageId, Scene> by_id;
  for (const SceneMeta& m : meta) {
    Scene s;
    s.image_id = m.image_id;
    s.width = m.width;
    s.height = m.height;
    const fs::path fp = FeaturePath(dir, m.image_id);
    std::ifstream is = OpenIn(fp);
    s.features = ReadFeatureGrid(is, fp.string());
    by_id.emplace(m.image_id, std::move(s));
  }
  for (const GtObject& g : gt) {
    auto it = by_id.find(g.image_id);
    if (it == by_id.end()) {
      throw std::runtime_error("gt references unknown image " +
                               std::to_string(g.image_id));
    }
    it->second.gt.push_back(g);
  }
  for (const ScoredProposal& p : props) {
    auto it = by_id.find(p.image_id);
    if (it == by_id.end()) {
      throw std::runtime_error("proposal references unknown image " +
                               std::to_string(p.image_id));
    }
    it->second.proposals.push_back(p);
  }
  std::vector<Scene> out;
  out.reserve(by_id.size());
  for (auto& [id, s] : by_id) out.push_back(std::move(s));
  return out;
}

std::vector<PairSample> CollectPairs(const std::vector<Scene>& scenes,
                                     const SamplingConfig& cfg,
                                     std::size_t threads) {
  std::vector<std::vector<PairSample>> per(scenes.size());
  ParallelFor(scenes.size(), threads, [&](std::size_t k) {
    per[k] = SampleTrainingPairs(scenes[k], cfg);
  });
  std::vector<PairSample> out;
  for (auto& v : per) {
    for (auto& s : v) out.push_back(std::move(s));
  }
  return out;
}

void CmdSamplePairs(const SamplePairsOptions& opt) {
  const auto scenes = LoadCorpus(opt.corpus);
  const auto pairs = CollectPairs(scenes, opt.sampling, opt.threads);
  std::vector<PairRecord> recs;
  recs.reserve(pairs.size());
  for (const PairSample& s : pairs) recs.push_back(ToRecord(s));
  std::ofstream os = OpenOut(opt.out);
  WritePairs(os, recs);
  Close(os, opt.out);
}

TrainSummary CmdTrain(const TrainOptions& opt) {
  auto log = [&](const std::string& msg) {
    if (opt.log) opt.log(msg);
  };
  const auto scenes = LoadCorpus(opt.corpus);
  const auto train_pairs = CollectPairs(scenes, opt.sampling, opt.threads);
  if (train_pairs.empty()) {
    throw std::runtime_error("corpus " + opt.corpus.string() +
                             " yields no nearby pairs to train on");
  }
  ModelConfig mc = opt.model;
  mc.in_channels = train_pairs.front().roi_i.channels;
  mc.roi_size = opt.sampling.roi_size;
  EmbeddingModel model(mc, opt.init_seed);
  log("training on " + std::to_string(train_pairs.size()) + " pairs from " +
      std::to_string(scenes.size()) + " scenes");

  TrainSummary summary;
  summary.train_pairs = train_pairs.size();
  summary.result = Train(&model, train_pairs, opt.train);
  for (std::size_t e = 0; e < summary.result.epoch_loss.size(); ++e) {
    log("epoch " + std::to_string(e + 1) + " loss " +
        Num(summary.result.epoch_loss[e]));
  }

  if (opt.val_corpus) {
    const auto val_scenes = LoadCorpus(*opt.val_corpus);
    const auto val_pairs = CollectPairs(val_scenes, opt.sampling, opt.threads);
    summary.val_pairs = val_pairs.size();
    if (!val_pairs.empty()) {
      summary.val_accuracy =
          PairAccuracy(model, val_pairs, 0.5 * opt.train.margin);
      summary.val_distances = MeanDistances(model, val_pairs);
      log("held-out pair accuracy " + Num(*summary.val_accuracy));
    }
  }

  std::ofstream os = OpenOut(opt.out_model);
  WriteCheckpoint(os, model);
  Close(os, opt.out_model);

  if (opt.out_log) {
    ordered_json j;
    j["train_pairs"] = summary.train_pairs;
    j["steps"] = summary.result.steps;
    j["epoch_loss"] = summary.result.epoch_loss;
    j["val_pairs"] = summary.val_pairs;
    j["val_accuracy"] = summary.val_accuracy
                            ? ordered_json(*summary.val_accuracy)
                            : ordered_json(nullptr);
    if (summary.val_distances) {
      j["val_mean_distance_similar"] = summary.val_distances->mean_similar;
      j["val_mean_distance_dissimilar"] =
          summary.val_distances->mean_dissimilar;
    }
    std::ofstream ls = OpenOut(*opt.out_log);
    ls << j.dump(2) << '\n';
    Close(ls, *opt.out_log);
  }
  return summary;
}

void CmdDistances(const DistancesOptions& opt) {
  const auto scenes = LoadCorpus(opt.corpus);
  std::ifstream is = OpenIn(opt.model);
  const EmbeddingModel model = ReadCheckpoint(is, opt.model.string());
  std::vector<DistanceMatrix> mats(scenes.size());
  ParallelFor(scenes.size(), opt.threads, [&](std::size_t k) {
    mats[k] = InferDistanceMatrix(model, scenes[k], opt.nms_thr);
  });
  std::ofstream os = OpenOut(opt.out);
  for (const DistanceMatrix& dm : mats) WriteDistances(os, dm);
  Close(os, opt.out);
}

std::vector<ScoredProposal> SuppressAll(
    const std::vector<ScoredProposal>& proposals, const SuppressionConfig& cfg,
    const std::map<ImageId, DistanceMatrix>* distances, std::size_t threads) {
  Validate(cfg);
  if (cfg.method == NmsMethod::kPairwise && distances == nullptr) {
    throw std::invalid_argument("pairwise NMS needs a distance file");
  }
  std::map<ImageId, std::vector<ScoredProposal>> by_image;
  for (const ScoredProposal& p : proposals) by_image[p.image_id].push_back(p);
  std::vector<std::pair<ImageId, std::vector<ScoredProposal>>> groups(
      by_image.begin(), by_image.end());
  std::vector<std::vector<Kept>> kept(groups.size());
  const DistanceMatrix empty;
  ParallelFor(groups.size(), threads, [&](std::size_t k) {
    const DistanceMatrix* dm = nullptr;
    if (distances != nullptr) {
      const auto it = distances->find(groups[k].first);
      dm = it != distances->end() ? &it->second : &empty;
    }
    kept[k] = Suppress(groups[k].second, cfg, dm);
  });
  std::vector<ScoredProposal> out;
  for (const auto& v : kept) {
    for (const Kept& k : v) out.push_back(k.proposal);
  }
  return out;
}

void CmdNms(const NmsOptions& opt) {
  std::ifstream is = OpenIn(opt.proposals);
  const auto props = ReadProposals(is, opt.proposals.string());
  std::optional<std::map<ImageId, DistanceMatrix>> dists;
  if (opt.distances) {
    std::ifstream ds = OpenIn(*opt.distances);
    dists = ReadDistances(ds, opt.distances->string());
  }
  const auto out = SuppressAll(props, opt.suppression,
                               dists ? &*dists : nullptr, opt.threads);
  std::ofstream os = OpenOut(opt.out);
  WriteProposals(os, out);
  Close(os, opt.out);
}

std::string EvalReportToJson(const EvalReport& r) {
  auto opt = [](const std::optional<double>& v) {
    return v ? ordered_json(*v) : ordered_json(nullptr);
  };
  ordered_json j;
  j["thresholds"] = ordered_json::array();
  for (const ThresholdResult& t : r.thresholds) {
    ordered_json o;
    o["eval_thr"] = t.eval_thr;
    o["tp"] = t.tp;
    o["fp"] = t.fp;
    o["num_det"] = t.num_det;
    o["num_gt"] = t.num_gt;
    o["recall"] = t.recall;
    o["precision"] = t.precision;
    o["ap"] = opt(t.ap);
    j["thresholds"].push_back(o);
  }
  j["mean_ap"] = opt(r.mean_ap);
  ordered_json occ;
  occ["eval_thr"] = r.occlusion.eval_thr;
  occ["buckets"] = ordered_json::array();
  for (const BucketResult& b : r.occlusion.buckets) {
    ordered_json o;
    o["lo"] = b.bucket.lo;
    o["hi"] = b.bucket.hi;
    o["tp"] = b.tp;
    o["fp"] = b.fp;
    o["fn"] = b.fn;
    o["f1"] = opt(b.f1);
    occ["buckets"].push_back(o);
  }
  occ["remainder_tp"] = r.occlusion.remainder_tp;
  occ["remainder_fn"] = r.occlusion.remainder_fn;
  j["occlusion"] = occ;
  return j.dump(2) + "\n";
}

EvalReport EvalReportFromJson(const std::string& text,
                              const std::string& source) {
  try {
    const auto j = nlohmann::json::parse(text);
    auto opt = [](const nlohmann::json& v) -> std::optional<double> {
      if (v.is_null()) return std::nullopt;
      return v.get<double>();
    };
    EvalReport r;
    for (const auto& o : j.at("thresholds")) {
      ThresholdResult t;
      t.eval_thr = o.at("eval_thr").get<double>();
      t.tp = o.at("tp").get<std::size_t>();
      t.fp = o.at("fp").get<std::size_t>();
      t.num_det = o.at("num_det").get<std::size_t>();
      t.num_gt = o.at("num_gt").get<std::size_t>();
      t.recall = o.at("recall").get<double>();
      t.precision = o.at("precision").get<double>();
      t.ap = opt(o.at("ap"));
      r.thresholds.push_back(t);
    }
    r.mean_ap = opt(j.at("mean_ap"));
    const auto& occ = j.at("occlusion");
    r.occlusion.eval_thr = occ.at("eval_thr").get<double>();
    for (const auto& o : occ.at("buckets")) {
      BucketResult b;
      b.bucket = {o.at("lo").get<double>(), o.at("hi").get<double>()};
      b.tp = o.at("tp").get<std::size_t>();
      b.fp = o.at("fp").get<std::size_t>();
      b.fn = o.at("fn").get<std::size_t>();
      b.f1 = opt(o.at("f1"));
      r.occlusion.buckets.push_back(b);
    }
    r.occlusion.remainder_tp = occ.at("remainder_tp").get<std::size_t>();
    r.occlusion.remainder_fn = occ.at("remainder_fn").get<std::size_t>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(source + ": " + e.what());
  }
}

EvalReport CmdEval(const EvalOptions& opt) {
  std::ifstream ds = OpenIn(opt.detections);
  const auto dets = ReadProposals(ds, opt.detections.string());
  std::ifstream gs = OpenIn(opt.gt);
  const auto gt = ReadGt(gs, opt.gt.string());
  const EvalReport rep = MapOverThresholds(dets, gt, opt.eval);

  std::ofstream os = OpenOut(opt.out_json);
  os << EvalReportToJson(rep);
  Close(os, opt.out_json);

  if (opt.csv_prefix) {
    const std::string prefix = opt.csv_prefix->string();
    {
      const fs::path p = prefix + "_pr.csv";
      std::ofstream cs = OpenOut(p);
      cs << "eval_thr,rank,score,recall,precision\n";
      for (const ThresholdResult& t : rep.thresholds) {
        for (std::size_t k = 0; k < t.curve.size(); ++k) {
          cs << Num(t.eval_thr) << ',' << k + 1 << ',' << Num(t.curve[k].score)
             << ',' << Num(t.curve[k].recall) << ','
             << Num(t.curve[k].precision) << '\n';
        }
      }
      Close(cs, p);
    }
    {
      const fs::path p = prefix + "_ap.csv";
      std::ofstream cs = OpenOut(p);
      cs << "eval_thr,ap\n";
      for (const ThresholdResult& t : rep.thresholds) {
        cs << Num(t.eval_thr) << ',' << (t.ap ? Num(*t.ap) : "") << '\n';
      }
      Close(cs, p);
    }
    {
      const fs::path p = prefix + "_f1.csv";
      std::ofstream cs = OpenOut(p);
      cs << "lo,hi,tp,fp,fn,f1\n";
      for (const BucketResult& b : rep.occlusion.buckets) {
        cs << Num(b.bucket.lo) << ',' << Num(b.bucket.hi) << ',' << b.tp << ','
           << b.fp << ',' << b.fn << ',' << (b.f1 ? Num(*b.f1) : "") << '\n';
      }
      Close(cs, p);
    }
  }
  return rep;
}

void CmdReport(const ReportOptions& opt) {
  if (opt.inputs.empty()) throw std::invalid_argument("report needs inputs");
  std::vector<std::pair<std::string, EvalReport>> reps;
  for (const auto& [label, path] : opt.inputs) {
    reps.emplace_back(label,
                      EvalReportFromJson(ReadTextFile(path), path.string()));
  }
  fs::create_directories(opt.out_dir);
  const auto opt_num = [](const std::optional<double>& v) {
    return v ? Num(*v) : std::string();
  };

  {
    const fs::path p = opt.out_dir / "ap_table.csv";
    std::ofstream os = OpenOut(p);
    os << "method";
    for (const ThresholdResult& t : reps.front().second.thresholds) {
      os << ",AP@" << Num(t.eval_thr);
    }
    os << ",mAP\n";
    for (const auto& [label, r] : reps) {
      os << label;
      for (const ThresholdResult& t : r.thresholds) os << ',' << opt_num(t.ap);
      os << ',' << opt_num(r.mean_ap) << '\n';
    }
    Close(os, p);
  }
  {
    // tp, fp, dt, gt, rec, prec, AP at the first evaluation threshold.
    const fs::path p = opt.out_dir / "summary_table.csv";
    std::ofstream os = OpenOut(p);
    os << "method,eval_thr,tp,fp,dt,gt,rec,prec,ap\n";
    for (const auto& [label, r] : reps) {
      if (r.thresholds.empty()) continue;
      const ThresholdResult& t = r.thresholds.front();
      os << label << ',' << Num(t.eval_thr) << ',' << t.tp << ',' << t.fp << ','
         << t.num_det << ',' << t.num_gt << ',' << Num(t.recall) << ','
         << Num(t.precision) << ',' << opt_num(t.ap) << '\n';
    }
    Close(os, p);
  }
  {
    const fs::path p = opt.out_dir / "f1_buckets.csv";
    std::ofstream os = OpenOut(p);
    os << "method,lo,hi,tp,fp,fn,f1\n";
    for (const auto& [label, r] : reps) {
      for (const BucketResult& b : r.occlusion.buckets) {
        os << label << ',' << Num(b.bucket.lo) << ',' << Num(b.bucket.hi) << ','
           << b.tp << ',' << b.fp << ',' << b.fn << ',' << opt_num(b.f1)
           << '\n';
      }
    }
    Close(os, p);
  }
  {
    const fs::path p = opt.out_dir / "gain_vs_occlusion.csv";
    std::ofstream os = OpenOut(p);
    os << "method,baseline,lo,hi,f1_gain\n";
    const auto& [base_label, base] = reps.front();
    for (std::size_t k = 1; k < reps.size(); ++k) {
      const auto& [label, r] = reps[k];
      const std::size_t n =
          std::min(r.occlusion.buckets.size(), base.occlusion.buckets.size());
      for (std::size_t b = 0; b < n; ++b) {
        const auto& mine = r.occlusion.buckets[b];
        const auto& theirs = base.occlusion.buckets[b];
        os << label << ',' << base_label << ',' << Num(mine.bucket.lo) << ','
           << Num(mine.bucket.hi) << ',';
        if (mine.f1 && theirs.f1) os << Num(*mine.f1 - *theirs.f1);
        os << '\n';
      }
    }
    Close(os, p);
  }
}

std::vector<double> ParseThresholdList(const std::string& text) {
  double lo = 0.0;
  double hi = 0.0;
  double step = 0.0;
  if (!ParseColonTriple(text, &lo, &hi, &step)) return ParseNumberList(text);
  std::vector<double> out;
  const auto n = static_cast<int>(std::floor((hi - lo) / step + 1e-9));
  for (int i = 0; i <= n; ++i) out.push_back(lo + step * i);
  return out;
}

std::vector<Bucket> ParseBuckets(const std::string& text) {
  double lo = 0.0;
  double hi = 0.0;
  double step = 0.0;
  std::vector<Bucket> out;
  if (ParseColonTriple(text, &lo, &hi, &step)) {
    const auto n = static_cast<int>(std::round((hi - lo) / step));
    for (int i = 0; i < n; ++i) {
      out.push_back({lo + step * i, lo + step * (i + 1)});
    }
    return out;
  }
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto dash = item.find('-');
    if (dash == std::string::npos) {
      throw std::invalid_argument("bucket '" + item + "' is not lo-hi");
    }
    out.push_back(
        {std::stod(item.substr(0, dash)), std::stod(item.substr(dash + 1))});
  }
  return out;
}

Range ParseRange(const std::string& text) {
  const auto c = text.find(':');
  if (c == std::string::npos) {
    throw std::invalid_argument("range '" + text + "' is not lo:hi");
  }
  return {std::stod(text.substr(0, c)), std::stod(text.substr(c + 1))};
}

}  // namespace crowdnms
