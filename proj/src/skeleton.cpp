// Copyright 2026 The KGS-GCN Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "kgs/skeleton.hpp"

#include <cmath>
#include <fstream>
#include <regex>
#include <sstream>

#include <json.hpp>

#include "kgs/errors.hpp"

namespace kgs {

using nlohmann::json;

void SkeletonSequence::validate() const {
  if (channels != 2 && channels != 3) {
    throw DimensionError("skeleton: C must be 2 or 3, got " + std::to_string(channels));
  }
  if (frames < 2) {
    throw DimensionError("skeleton: need T >= 2 frames, got " + std::to_string(frames));
  }
  if (joints == 0) throw DimensionError("skeleton: V must be positive");
  if (positions.size() != frames * joints * channels) {
    throw DimensionError("skeleton: payload has " + std::to_string(positions.size()) +
                         " values, expected T*V*C = " +
                         std::to_string(frames * joints * channels));
  }
  for (std::size_t i = 0; i < positions.size(); ++i) {
    if (!std::isfinite(positions[i])) {
      const std::size_t c = i % channels, v = (i / channels) % joints,
                        t = i / (channels * joints);
      throw DataError("skeleton: non-finite coordinate at frames[" + std::to_string(t) +
                      "][" + std::to_string(v) + "][" + std::to_string(c) + "]");
    }
  }
}

namespace {

std::size_t read_count(const json& doc, const char* key, std::string_view source) {
  if (!doc.contains(key)) {
    throw ParseError(std::string(source) + ": missing field '" + key + "'");
  }
  const json& v = doc[key];
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ParseError(std::string(source) + ": field '" + key +
                     "' must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

// Accepts JSON numbers plus the strings "NaN"/"Infinity" so that such files
// are rejected as data errors instead of parse errors.
double read_coordinate(const json& v, const std::string& where) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const auto& s = v.get_ref<const std::string&>();
    if (s == "NaN" || s == "nan") return std::nan("");
    if (s == "Infinity" || s == "inf") return INFINITY;
    if (s == "-Infinity" || s == "-inf") return -INFINITY;
  }
  throw ParseError(where + ": expected a number");
}

}  // namespace

SkeletonSequence parse_sequence(std::string_view text, std::string_view source) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    // Writers such as Python's json module emit bare NaN / Infinity tokens;
    // quote them so the coordinate check reports a data error.
    static const std::regex bare(R"(([\[,:]\s*)(-?(?:NaN|Infinity))(?=\s*[,\]}]))");
    const std::string quoted = std::regex_replace(std::string(text), bare, "$1\"$2\"");
    try {
      doc = json::parse(quoted);
    } catch (const json::parse_error&) {
      throw ParseError(std::string(source) + ": " + e.what());
    }
  }
  if (!doc.is_object()) throw ParseError(std::string(source) + ": top level must be an object");

  SkeletonSequence seq;
  seq.source = std::string(source);
  seq.frames = read_count(doc, "T", source);
  seq.joints = read_count(doc, "V", source);
  seq.channels = read_count(doc, "C", source);
  if (doc.contains("label") && !doc["label"].is_null()) {
    if (!doc["label"].is_number_integer()) {
      throw ParseError(std::string(source) + ": field 'label' must be an integer");
    }
    seq.label = doc["label"].get<int>();
    if (*seq.label < 0) throw DataError(std::string(source) + ": negative label");
  }
  if (!doc.contains("frames") || !doc["frames"].is_array()) {
    throw ParseError(std::string(source) + ": missing array field 'frames'");
  }
  const json& frames = doc["frames"];
  if (frames.size() != seq.frames) {
    throw DimensionError(std::string(source) + ": T = " + std::to_string(seq.frames) +
                         " but 'frames' holds " + std::to_string(frames.size()));
  }
  seq.positions.reserve(seq.frames * seq.joints * seq.channels);
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const std::string ft = std::string(source) + ": frames[" + std::to_string(t) + "]";
    if (!frames[t].is_array()) throw ParseError(ft + ": expected an array of joints");
    if (frames[t].size() != seq.joints) {
      throw DimensionError(ft + " holds " + std::to_string(frames[t].size()) +
                           " joints, V = " + std::to_string(seq.joints));
    }
    for (std::size_t v = 0; v < seq.joints; ++v) {
      const json& joint = frames[t][v];
      const std::string fv = ft + "[" + std::to_string(v) + "]";
      if (!joint.is_array()) throw ParseError(fv + ": expected an array of coordinates");
      if (joint.size() != seq.channels) {
        throw DimensionError(fv + " holds " + std::to_string(joint.size()) +
                             " coordinates, C = " + std::to_string(seq.channels));
      }
      for (std::size_t c = 0; c < seq.channels; ++c) {
        seq.positions.push_back(read_coordinate(joint[c], fv + "[" + std::to_string(c) + "]"));
      }
    }
  }
  try {
    seq.validate();
  } catch (const Error& e) {
    if (dynamic_cast<const DataError*>(&e)) throw DataError(std::string(source) + ": " + e.what());
    throw DimensionError(std::string(source) + ": " + e.what());
  }
  return seq;
}

SkeletonSequence load_sequence(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string() + ": cannot open file");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_sequence(buf.str(), path.string());
}

std::string serialize_sequence(const SkeletonSequence& seq) {
  seq.validate();
  json doc;
  doc["T"] = seq.frames;
  doc["V"] = seq.joints;
  doc["C"] = seq.channels;
  if (seq.label) doc["label"] = *seq.label;
  json frames = json::array();
  for (std::size_t t = 0; t < seq.frames; ++t) {
    json frame = json::array();
    for (std::size_t v = 0; v < seq.joints; ++v) {
      json joint = json::array();
      for (std::size_t c = 0; c < seq.channels; ++c) joint.push_back(seq.at(t, v, c));
      frame.push_back(std::move(joint));
    }
    frames.push_back(std::move(frame));
  }
  doc["frames"] = std::move(frames);
  return doc.dump() + "\n";
}

void save_sequence(const SkeletonSequence& seq, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError(path.string() + ": cannot write file");
  out << serialize_sequence(seq);
}

SkeletonSequence normalize_sequence(const SkeletonSequence& seq,
                                    const NormalizationParams& params) {
  seq.validate();
  if (!(params.target_half_extent > 0.0 && params.target_half_extent <= 1.0)) {
    throw ConfigError("normalization: target half extent must lie in (0, 1]");
  }
  SkeletonSequence out = seq;
  const std::size_t nv = seq.joints, nc = seq.channels;
  for (std::size_t t = 0; t < seq.frames; ++t) {
    double center[3] = {0.0, 0.0, 0.0};
    for (std::size_t v = 0; v < nv; ++v)
      for (std::size_t c = 0; c < nc; ++c) center[c] += seq.at(t, v, c);
    for (std::size_t c = 0; c < nc; ++c) center[c] /= static_cast<double>(nv);

    double radius = 0.0;
    for (std::size_t v = 0; v < nv; ++v) {
      double r2 = 0.0;
      for (std::size_t c = 0; c < nc; ++c) {
        const double d = seq.at(t, v, c) - center[c];
        out.at(t, v, c) = d;
        r2 += d * d;
      }
      radius = std::max(radius, std::sqrt(r2));
    }
    if (radius < params.epsilon_radius) {
      for (std::size_t v = 0; v < nv; ++v)
        for (std::size_t c = 0; c < nc; ++c) out.at(t, v, c) = 0.0;
      continue;
    }
    const double factor = params.target_half_extent / radius;
    for (std::size_t v = 0; v < nv; ++v)
      for (std::size_t c = 0; c < nc; ++c) out.at(t, v, c) *= factor;
  }
  return out;
}

KinematicSequence compute_velocity(const SkeletonSequence& seq) {
  if (seq.frames < 2) {
    throw DimensionError("velocity: need T >= 2 frames, got " + std::to_string(seq.frames));
  }
  seq.validate();
  KinematicSequence kin;
  kin.frames = seq.frames;
  kin.joints = seq.joints;
  kin.channels = seq.channels;
  kin.positions = seq.positions;
  kin.velocities.assign(seq.positions.size(), 0.0);
  kin.label = seq.label;
  kin.source = seq.source;
  const std::size_t stride = seq.joints * seq.channels;
  for (std::size_t t = 0; t + 1 < seq.frames; ++t)
    for (std::size_t k = 0; k < stride; ++k) {
      kin.velocities[t * stride + k] =
          seq.positions[(t + 1) * stride + k] - seq.positions[t * stride + k];
    }
  const std::size_t last = seq.frames - 1;
  for (std::size_t k = 0; k < stride; ++k) {
    kin.velocities[last * stride + k] = kin.velocities[(last - 1) * stride + k];
  }
  return kin;
}

KinematicSequence prepare_kinematics(const SkeletonSequence& seq,
                                     const NormalizationParams& params) {
  return compute_velocity(normalize_sequence(seq, params));
}

}  // namespace kgs
