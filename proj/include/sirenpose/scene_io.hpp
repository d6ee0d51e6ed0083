#pragma once

// JSON Lines persistence for tracks and signal targets, and the JSON scene
// spec. Line numbers in error messages are 1-based.
//
// track.jsonl    header {"m": M, "edges": [[i,j],...], "rest_lengths": [...]}
//                frames {"t": t, "pos": [[x,y,z] x M], "vis": [bool x M]}
// targets.jsonl  header {"s": S, "samples_per_bone": n}
//                frames {"t": t, "samples": [[x,y,z] x S]}

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sirenpose/errors.hpp"
#include "sirenpose/scene.hpp"

namespace sirenpose {

using json = nlohmann::json;

namespace detail {

inline std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return in;
}

/// Writes to a sibling temp file, then renames over the destination.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp + "' for writing");
    out << content;
    if (!out) throw IoError("write failed for '" + tmp + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename '" + tmp + "' to '" + path.string() + "': " + ec.message());
}

inline ValidationError line_error(std::size_t line, const std::string& what) {
  return ValidationError("line " + std::to_string(line) + ": " + what);
}

inline const json& require(const json& obj, const char* key, std::size_t line) {
  if (!obj.is_object() || !obj.contains(key)) {
    throw line_error(line, std::string("missing field '") + key + "'");
  }
  return obj.at(key);
}

inline Vec3 to_vec3(const json& j, std::size_t line) {
  if (!j.is_array() || j.size() != 3) throw line_error(line, "expected [x, y, z]");
  Vec3 v;
  for (int c = 0; c < 3; ++c) {
    if (!j[c].is_number()) throw line_error(line, "coordinate is not a number");
    v[c] = j[c].get<double>();
  }
  return v;
}

inline json from_vec3(const Vec3& v) { return json::array({v[0], v[1], v[2]}); }

template <typename Fn>
void for_each_line(std::istream& in, Fn fn) {
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(text);
    } catch (const json::parse_error& e) {
      throw line_error(line, std::string("malformed JSON: ") + e.what());
    }
    fn(j, line);
  }
}

}  // namespace detail

inline std::string track_to_jsonl(const KeypointTrack& track) {
  std::ostringstream os;
  json header;
  header["m"] = track.skeleton.num_keypoints;
  header["edges"] = json::array();
  for (const auto& e : track.skeleton.edges) header["edges"].push_back({e.i, e.j});
  header["rest_lengths"] = track.skeleton.rest_lengths;
  os << header.dump() << '\n';
  for (const auto& fr : track.frames) {
    json j;
    j["t"] = fr.time;
    j["pos"] = json::array();
    for (const auto& p : fr.positions) j["pos"].push_back(detail::from_vec3(p));
    j["vis"] = json::array();
    for (bool v : fr.visible) j["vis"].push_back(v);
    os << j.dump() << '\n';
  }
  return os.str();
}

inline KeypointTrack track_from_jsonl(std::istream& in) {
  KeypointTrack track;
  bool have_header = false;
  detail::for_each_line(in, [&](const json& j, std::size_t line) {
    if (!have_header) {
      const json& m = detail::require(j, "m", line);
      if (!m.is_number_unsigned() || m.get<std::size_t>() == 0) {
        throw detail::line_error(line, "'m' must be a positive integer");
      }
      track.skeleton.num_keypoints = m.get<std::size_t>();
      const json& edges = detail::require(j, "edges", line);
      const json& rest = detail::require(j, "rest_lengths", line);
      if (!edges.is_array() || !rest.is_array() || edges.size() != rest.size()) {
        throw detail::line_error(line, "'edges' and 'rest_lengths' must be arrays of equal length");
      }
      for (std::size_t e = 0; e < edges.size(); ++e) {
        const json& pair = edges[e];
        if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number_unsigned() ||
            !pair[1].is_number_unsigned()) {
          throw detail::line_error(line, "edge " + std::to_string(e) + " is not a pair of indices");
        }
        track.skeleton.edges.push_back({pair[0].get<std::size_t>(), pair[1].get<std::size_t>()});
        if (!rest[e].is_number()) throw detail::line_error(line, "rest length is not a number");
        track.skeleton.rest_lengths.push_back(rest[e].get<double>());
      }
      try {
        track.skeleton.validate();
      } catch (const ValidationError& e) {
        throw detail::line_error(line, e.what());
      }
      have_header = true;
      return;
    }
    const std::size_t m = track.skeleton.num_keypoints;
    KeypointFrame fr;
    const json& t = detail::require(j, "t", line);
    if (!t.is_number()) throw detail::line_error(line, "'t' is not a number");
    fr.time = t.get<double>();
    const json& pos = detail::require(j, "pos", line);
    const json& vis = detail::require(j, "vis", line);
    if (!pos.is_array() || pos.size() != m) {
      throw detail::line_error(line, "'pos' must hold " + std::to_string(m) + " points");
    }
    if (!vis.is_array() || vis.size() != m) {
      throw detail::line_error(line, "'vis' must hold " + std::to_string(m) + " flags");
    }
    for (const auto& p : pos) fr.positions.push_back(detail::to_vec3(p, line));
    for (const auto& v : vis) {
      if (!v.is_boolean()) throw detail::line_error(line, "visibility flag is not a boolean");
      fr.visible.push_back(v.get<bool>());
    }
    if (!track.frames.empty() && !(fr.time > track.frames.back().time)) {
      throw detail::line_error(line, "frame " + std::to_string(track.frames.size()) + " time " +
                                         std::to_string(fr.time) + " does not increase");
    }
    track.frames.push_back(std::move(fr));
  });
  if (!have_header) throw ValidationError("line 1: missing track header");
  track.validate();
  return track;
}

inline void save_track(const KeypointTrack& track, const std::filesystem::path& path) {
  track.validate();
  detail::write_atomic(path, track_to_jsonl(track));
}

inline KeypointTrack load_track(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  return track_from_jsonl(in);
}

inline std::string targets_to_jsonl(const SignalTargets& targets) {
  std::ostringstream os;
  json header;
  header["s"] = targets.num_samples();
  header["samples_per_bone"] = targets.samples_per_bone;
  os << header.dump() << '\n';
  for (std::size_t f = 0; f < targets.num_frames(); ++f) {
    json j;
    j["t"] = targets.times[f];
    j["samples"] = json::array();
    for (const auto& p : targets.samples[f]) j["samples"].push_back(detail::from_vec3(p));
    os << j.dump() << '\n';
  }
  return os.str();
}

inline SignalTargets targets_from_jsonl(std::istream& in) {
  SignalTargets targets;
  bool have_header = false;
  std::size_t s = 0;
  detail::for_each_line(in, [&](const json& j, std::size_t line) {
    if (!have_header) {
      const json& sj = detail::require(j, "s", line);
      const json& nj = detail::require(j, "samples_per_bone", line);
      if (!sj.is_number_unsigned() || !nj.is_number_unsigned() || nj.get<std::size_t>() == 0) {
        throw detail::line_error(line, "'s' and 'samples_per_bone' must be positive integers");
      }
      s = sj.get<std::size_t>();
      targets.samples_per_bone = nj.get<std::size_t>();
      have_header = true;
      return;
    }
    const json& t = detail::require(j, "t", line);
    if (!t.is_number()) throw detail::line_error(line, "'t' is not a number");
    const json& samples = detail::require(j, "samples", line);
    if (!samples.is_array() || samples.size() != s) {
      throw detail::line_error(line, "'samples' must hold " + std::to_string(s) + " points");
    }
    const double time = t.get<double>();
    if (!targets.times.empty() && !(time > targets.times.back())) {
      throw detail::line_error(line, "frame " + std::to_string(targets.times.size()) +
                                         " time does not increase");
    }
    targets.times.push_back(time);
    std::vector<Vec3> pts;
    for (const auto& p : samples) pts.push_back(detail::to_vec3(p, line));
    targets.samples.push_back(std::move(pts));
  });
  if (!have_header) throw ValidationError("line 1: missing targets header");
  return targets;
}

inline void save_targets(const SignalTargets& targets, const std::filesystem::path& path) {
  detail::write_atomic(path, targets_to_jsonl(targets));
}

inline SignalTargets load_targets(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  return targets_from_jsonl(in);
}

inline json to_json(const SceneSpec& spec) {
  json j;
  j["template"] = to_string(spec.scene_template);
  j["frequencies"] = spec.frequencies;
  j["amplitudes"] = spec.amplitudes;
  j["bone_lengths"] = spec.bone_lengths;
  j["duration"] = spec.duration;
  j["frame_rate"] = spec.frame_rate;
  j["occlusions"] = json::array();
  for (const auto& w : spec.occlusions) {
    j["occlusions"].push_back({{"keypoint", w.keypoint}, {"start", w.start}, {"end", w.end}});
  }
  j["noise_sigma"] = spec.noise_sigma;
  j["seed"] = spec.seed;
  j["samples_per_bone"] = spec.samples_per_bone;
  return j;
}

inline SceneSpec scene_spec_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("scene spec must be a JSON object");
  static const std::set<std::string> known{"template",    "frequencies", "amplitudes",
                                           "bone_lengths", "duration",   "frame_rate",
                                           "occlusions",  "noise_sigma", "seed",
                                           "samples_per_bone"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw ValidationError("scene spec: unknown field '" + key + "'");
  }
  for (const char* key : {"template", "duration", "frame_rate", "seed"}) {
    if (!j.contains(key)) throw ValidationError(std::string("scene spec: missing field '") + key + "'");
  }
  SceneSpec spec;
  try {
    spec.scene_template = parse_template(j.at("template").get<std::string>());
    if (j.contains("frequencies")) spec.frequencies = j.at("frequencies").get<std::vector<double>>();
    if (j.contains("amplitudes")) spec.amplitudes = j.at("amplitudes").get<std::vector<double>>();
    if (j.contains("bone_lengths")) spec.bone_lengths = j.at("bone_lengths").get<std::vector<double>>();
    spec.duration = j.at("duration").get<double>();
    spec.frame_rate = j.at("frame_rate").get<double>();
    if (j.contains("occlusions")) {
      for (const auto& w : j.at("occlusions")) {
        spec.occlusions.push_back({w.at("keypoint").get<std::size_t>(), w.at("start").get<double>(),
                                   w.at("end").get<double>()});
      }
    }
    if (j.contains("noise_sigma")) spec.noise_sigma = j.at("noise_sigma").get<double>();
    spec.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("samples_per_bone")) spec.samples_per_bone = j.at("samples_per_bone").get<std::size_t>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("scene spec: ") + e.what());
  }
  validate(spec);
  return spec;
}

/// Parses a JSON file; syntax errors carry nlohmann's line/column position.
inline json read_json_file(const std::filesystem::path& path) {
  auto in = detail::open_in(path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

inline SceneSpec load_scene_spec(const std::filesystem::path& path) {
  return scene_spec_from_json(read_json_file(path));
}

}  // namespace sirenpose
