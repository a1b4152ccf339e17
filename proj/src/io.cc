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

#include "crowdnms/io.h"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace crowdnms {
namespace {

using nlohmann::json;

[[noreturn]] void Fail(const std::string& source, std::size_t line,
                       const std::string& what) {
  throw FormatError(source + ":" + std::to_string(line) + ": " + what);
}

// Calls `fn(obj, line_no)` for each non-blank line parsed as a JSON object.
template <typename Fn>
void ForEachJsonLine(std::istream& is, const std::string& source, Fn fn) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      Fail(source, line_no, std::string("malformed JSON: ") + e.what());
    }
    if (!obj.is_object()) Fail(source, line_no, "expected a JSON object");
    try {
      fn(obj, line_no);
    } catch (const json::exception& e) {
      Fail(source, line_no, e.what());
    } catch (const std::invalid_argument& e) {
      Fail(source, line_no, e.what());
    }
  }
}

double Number(const json& obj, const char* key) {
  const auto it = obj.find(key);
  if (it == obj.end() || !it->is_number()) {
    throw std::invalid_argument(std::string("missing numeric field '") + key +
                                "'");
  }
  return it->get<double>();
}

std::int64_t Integer(const json& obj, const char* key) {
  const auto it = obj.find(key);
  if (it == obj.end() || !it->is_number_integer()) {
    throw std::invalid_argument(std::string("missing integer field '") + key +
                                "'");
  }
  return it->get<std::int64_t>();
}

std::size_t Index(const json& obj, const char* key) {
  const std::int64_t v = Integer(obj, key);
  if (v < 0) {
    throw std::invalid_argument(std::string("negative index '") + key + "'");
  }
  return static_cast<std::size_t>(v);
}

Box ReadBox(const json& obj) {
  Box b{Number(obj, "x"), Number(obj, "y"), Number(obj, "w"), Number(obj, "h")};
  CheckValid(b);
  return b;
}

void PutU32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 4);
}

void PutF64(std::ostream& os, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  char b[8];
  for (int i = 0; i < 8; ++i)
    b[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  os.write(b, 8);
}

class BinaryReader {
 public:
  BinaryReader(std::istream& is, std::string source)
      : is_(is), source_(std::move(source)) {}

  void Magic(const char* magic) {
    char b[4];
    Bytes(b, 4);
    if (std::memcmp(b, magic, 4) != 0) {
      throw FormatError(source_ + ": bad magic, expected " + magic);
    }
  }

  std::uint32_t U32() {
    unsigned char b[4];
    Bytes(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
  }

  double F64() {
    unsigned char b[8];
    Bytes(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return std::bit_cast<double>(v);
  }

  void ExpectEnd() {
    if (is_.peek() != std::char_traits<char>::eof()) {
      throw FormatError(source_ + ": trailing bytes");
    }
  }

  const std::string& source() const { return source_; }

 private:
  void Bytes(char* out, std::size_t n) {
    is_.read(out, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n) {
      throw FormatError(source_ + ": truncated file");
    }
  }

  std::istream& is_;
  std::string source_;
};

void Line(std::ostream& os, const json& obj) { os << obj.dump() << '\n'; }

}  // namespace

void WriteProposals(std::ostream& os, std::span<const ScoredProposal> props) {
  for (const ScoredProposal& p : props) {
    json o;
    o["image_id"] = p.image_id;
    o["x"] = p.box.x;
    o["y"] = p.box.y;
    o["w"] = p.box.w;
    o["h"] = p.box.h;
    o["score"] = p.score;
    Line(os, o);
  }
}

std::vector<ScoredProposal> ReadProposals(std::istream& is,
                                          const std::string& source) {
  std::vector<ScoredProposal> out;
  ForEachJsonLine(is, source, [&](const json& o, std::size_t) {
    ScoredProposal p;
    p.image_id = Integer(o, "image_id");
    p.box = ReadBox(o);
    p.score = Number(o, "score");
    if (!std::isfinite(p.score))
      throw std::invalid_argument("score not finite");
    out.push_back(p);
  });
  return out;
}

void WriteGt(std::ostream& os, std::span<const GtObject> gt) {
  for (const GtObject& g : gt) {
    json o;
    o["image_id"] = g.image_id;
    o["object_id"] = g.object_id;
    o["x"] = g.box.x;
    o["y"] = g.box.y;
    o["w"] = g.box.w;
    o["h"] = g.box.h;
    Line(os, o);
  }
}

std::vector<GtObject> ReadGt(std::istream& is, const std::string& source) {
  std::vector<GtObject> out;
  ForEachJsonLine(is, source, [&](const json& o, std::size_t) {
    out.push_back(
        {Integer(o, "image_id"), Integer(o, "object_id"), ReadBox(o)});
  });
  return out;
}

void WriteSceneMeta(std::ostream& os, std::span<const SceneMeta> scenes) {
  for (const SceneMeta& s : scenes) {
    json o;
    o["image_id"] = s.image_id;
    o["width"] = s.width;
    o["height"] = s.height;
    Line(os, o);
  }
}

std::vector<SceneMeta> ReadSceneMeta(std::istream& is,
                                     const std::string& source) {
  std::vector<SceneMeta> out;
  ForEachJsonLine(is, source, [&](const json& o, std::size_t) {
    out.push_back(
        {Integer(o, "image_id"), Number(o, "width"), Number(o, "height")});
  });
  return out;
}

PairRecord ToRecord(const PairSample& s) {
  return {s.image_id, s.index_i, s.index_j, s.label.case_id, s.label.y};
}

void WritePairs(std::ostream& os, std::span<const PairRecord> pairs) {
  for (const PairRecord& p : pairs) {
    json o;
    o["image_id"] = p.image_id;
    o["i"] = p.i;
    o["j"] = p.j;
    o["case_id"] = p.case_id;
    o["y"] = p.y;
    Line(os, o);
  }
}

std::vector<PairRecord> ReadPairs(std::istream& is, const std::string& source) {
  std::vector<PairRecord> out;
  ForEachJsonLine(is, source, [&](const json& o, std::size_t) {
    PairRecord r{Integer(o, "image_id"), Index(o, "i"), Index(o, "j"),
                 static_cast<int>(Integer(o, "case_id")),
                 static_cast<int>(Integer(o, "y"))};
    if (r.case_id < 1 || r.case_id > 6) {
      throw std::invalid_argument("case_id out of range");
    }
    if (r.y != 0 && r.y != 1) throw std::invalid_argument("y must be 0 or 1");
    out.push_back(r);
  });
  return out;
}

void WriteDistances(std::ostream& os, const DistanceMatrix& dm) {
  for (const auto& [key, dist] : dm.entries()) {
    json o;
    o["image_id"] = dm.image_id();
    o["i"] = key.first;
    o["j"] = key.second;
    o["dist"] = dist;
    Line(os, o);
  }
}

std::map<ImageId, DistanceMatrix> ReadDistances(std::istream& is,
                                                const std::string& source) {
  std::map<ImageId, DistanceMatrix> out;
  ForEachJsonLine(is, source, [&](const json& o, std::size_t) {
    const ImageId id = Integer(o, "image_id");
    auto it = out.try_emplace(id, DistanceMatrix(id)).first;
    it->second.Set(Index(o, "i"), Index(o, "j"), Number(o, "dist"));
  });
  return out;
}

void WriteFeatureGrid(std::ostream& os, const FeatureGrid& fg) {
  os.write("PWFG", 4);
  PutU32(os, kFeatureGridVersion);
  PutU32(os, static_cast<std::uint32_t>(fg.channels()));
  PutU32(os, static_cast<std::uint32_t>(fg.height()));
  PutU32(os, static_cast<std::uint32_t>(fg.width()));
  PutF64(os, fg.stride());
  for (double v : fg.values()) PutF64(os, v);
}

FeatureGrid ReadFeatureGrid(std::istream& is, const std::string& source) {
  BinaryReader r(is, source);
  r.Magic("PWFG");
  const std::uint32_t version = r.U32();
  if (version != kFeatureGridVersion) {
    throw FormatError(source + ": unsupported feature grid version " +
                      std::to_string(version));
  }
  const std::size_t c = r.U32();
  const std::size_t h = r.U32();
  const std::size_t w = r.U32();
  const double stride = r.F64();
  std::vector<double> values(c * h * w);
  for (double& v : values) v = r.F64();
  r.ExpectEnd();
  try {
    return FeatureGrid(c, h, w, stride, std::move(values));
  } catch (const std::invalid_argument& e) {
    throw FormatError(source + ": " + e.what());
  }
}

void WriteCheckpoint(std::ostream& os, const EmbeddingModel& m) {
  const ModelConfig& c = m.config();
  os.write("PWRN", 4);
  PutU32(os, kCheckpointVersion);
  PutU32(os, static_cast<std::uint32_t>(c.in_channels));
  PutU32(os, static_cast<std::uint32_t>(c.roi_size));
  PutU32(os, static_cast<std::uint32_t>(c.width));
  PutU32(os, static_cast<std::uint32_t>(c.embedding_dim));
  PutU32(os, static_cast<std::uint32_t>(c.head));
  for (double v : m.params()) PutF64(os, v);
  for (double v : m.running_mean()) PutF64(os, v);
  for (double v : m.running_var()) PutF64(os, v);
}

EmbeddingModel ReadCheckpoint(std::istream& is, const std::string& source) {
  BinaryReader r(is, source);
  r.Magic("PWRN");
  const std::uint32_t version = r.U32();
  if (version != kCheckpointVersion) {
    throw FormatError(source + ": unsupported checkpoint version " +
                      std::to_string(version));
  }
  ModelConfig c;
  c.in_channels = r.U32();
  c.roi_size = r.U32();
  c.width = r.U32();
  c.embedding_dim = r.U32();
  const std::uint32_t head = r.U32();
  if (head > 1) throw FormatError(source + ": unknown head type");
  c.head = static_cast<HeadType>(head);
  EmbeddingModel m;
  try {
    m = EmbeddingModel(c, 0);
  } catch (const std::invalid_argument& e) {
    throw FormatError(source + ": " + e.what());
  }
  for (double& v : m.mutable_params()) v = r.F64();
  for (double& v : m.mutable_running_mean()) v = r.F64();
  for (double& v : m.mutable_running_var()) v = r.F64();
  r.ExpectEnd();
  return m;
}

void WriteTextFile(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

std::string ReadTextFile(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace crowdnms
