#pragma once

// Keypoint data model and a synthetic articulated-scene generator.
//
// Every template is a kinematic chain: child = parent + length * unit(angle),
// so bone lengths are exact by construction. Angles are sinusoids in time,
// which gives a closed form for every keypoint.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "sirenpose/errors.hpp"
#include "sirenpose/random.hpp"

namespace sirenpose {

using Vec3 = std::array<double, 3>;

inline Vec3 operator+(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Vec3 operator-(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Vec3 operator*(double s, const Vec3& a) { return {s * a[0], s * a[1], s * a[2]}; }
inline double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

struct KeypointFrame {
  double time = 0.0;
  std::vector<Vec3> positions;
  std::vector<bool> visible;

  std::size_t size() const { return positions.size(); }
  friend bool operator==(const KeypointFrame&, const KeypointFrame&) = default;
};

struct Edge {
  std::size_t i = 0;
  std::size_t j = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
};

struct SkeletonGraph {
  std::size_t num_keypoints = 0;
  std::vector<Edge> edges;
  std::vector<double> rest_lengths;

  friend bool operator==(const SkeletonGraph&, const SkeletonGraph&) = default;

  void validate() const {
    if (num_keypoints == 0) throw ValidationError("skeleton: needs at least one keypoint");
    if (rest_lengths.size() != edges.size()) {
      throw ValidationError("skeleton: " + std::to_string(edges.size()) + " edges but " +
                            std::to_string(rest_lengths.size()) + " rest lengths");
    }
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (std::size_t e = 0; e < edges.size(); ++e) {
      const auto [i, j] = edges[e];
      const std::string name = "edge " + std::to_string(e) + " (" + std::to_string(i) + ", " +
                               std::to_string(j) + ")";
      if (i >= num_keypoints || j >= num_keypoints) {
        throw ValidationError("skeleton: " + name + " out of range for m = " +
                              std::to_string(num_keypoints));
      }
      if (i == j) throw ValidationError("skeleton: " + name + " is a self loop");
      if (!seen.insert({std::min(i, j), std::max(i, j)}).second) {
        throw ValidationError("skeleton: " + name + " duplicates an earlier edge");
      }
      if (!(rest_lengths[e] > 0.0) || !std::isfinite(rest_lengths[e])) {
        throw ValidationError("skeleton: " + name + " rest length must be positive");
      }
    }
    // connectivity by union-find
    std::vector<std::size_t> parent(num_keypoints);
    for (std::size_t k = 0; k < num_keypoints; ++k) parent[k] = k;
    auto find = [&](std::size_t x) {
      while (parent[x] != x) x = parent[x] = parent[parent[x]];
      return x;
    };
    std::size_t components = num_keypoints;
    for (const auto& e : edges) {
      const auto a = find(e.i), b = find(e.j);
      if (a != b) {
        parent[a] = b;
        --components;
      }
    }
    if (components != 1) {
      throw ValidationError("skeleton: graph has " + std::to_string(components) +
                            " connected components, expected 1");
    }
  }
};

struct KeypointTrack {
  SkeletonGraph skeleton;
  std::vector<KeypointFrame> frames;

  std::size_t num_keypoints() const { return skeleton.num_keypoints; }
  std::size_t num_frames() const { return frames.size(); }
  friend bool operator==(const KeypointTrack&, const KeypointTrack&) = default;

  void validate() const {
    skeleton.validate();
    for (std::size_t f = 0; f < frames.size(); ++f) {
      const auto& fr = frames[f];
      if (fr.positions.size() != skeleton.num_keypoints ||
          fr.visible.size() != skeleton.num_keypoints) {
        throw ValidationError("track: frame " + std::to_string(f) + " has " +
                              std::to_string(fr.positions.size()) + " positions and " +
                              std::to_string(fr.visible.size()) + " visibility flags, expected " +
                              std::to_string(skeleton.num_keypoints));
      }
      if (!std::isfinite(fr.time)) {
        throw ValidationError("track: frame " + std::to_string(f) + " has a non-finite time");
      }
      for (const auto& p : fr.positions) {
        for (double c : p) {
          if (!std::isfinite(c)) {
            throw ValidationError("track: frame " + std::to_string(f) + " has a non-finite position");
          }
        }
      }
      if (f > 0 && !(fr.time > frames[f - 1].time)) {
        throw ValidationError("track: frame " + std::to_string(f) + " time " +
                              std::to_string(fr.time) + " does not increase");
      }
    }
  }
};

/// Dense points along every bone, per frame (the regression target of the
/// reconstruction term).
struct SignalTargets {
  std::size_t samples_per_bone = 8;
  std::vector<double> times;
  std::vector<std::vector<Vec3>> samples;  // [frame][sample]

  std::size_t num_samples() const { return samples.empty() ? 0 : samples.front().size(); }
  std::size_t num_frames() const { return samples.size(); }
  friend bool operator==(const SignalTargets&, const SignalTargets&) = default;
};

enum class SceneTemplate { kPendulum, kBiped, kMultiObject };

inline std::string to_string(SceneTemplate t) {
  switch (t) {
    case SceneTemplate::kPendulum: return "pendulum";
    case SceneTemplate::kBiped: return "biped";
    case SceneTemplate::kMultiObject: return "multi-object";
  }
  return "unknown";
}

inline SceneTemplate parse_template(const std::string& name) {
  if (name == "pendulum") return SceneTemplate::kPendulum;
  if (name == "biped") return SceneTemplate::kBiped;
  if (name == "multi-object") return SceneTemplate::kMultiObject;
  throw ValidationError("scene: unknown template '" + name + "'");
}

struct OcclusionWindow {
  std::size_t keypoint = 0;
  double start = 0.0;  // seconds, inclusive
  double end = 0.0;    // seconds, exclusive
  friend bool operator==(const OcclusionWindow&, const OcclusionWindow&) = default;
};

struct SceneSpec {
  SceneTemplate scene_template = SceneTemplate::kPendulum;
  std::vector<double> frequencies;   // Hz; empty selects template defaults
  std::vector<double> amplitudes;    // radians (angles) or scene units (sway)
  std::vector<double> bone_lengths;  // empty selects template defaults
  double duration = 2.0;
  double frame_rate = 30.0;
  std::vector<OcclusionWindow> occlusions;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  std::size_t samples_per_bone = 8;

  friend bool operator==(const SceneSpec&, const SceneSpec&) = default;
};

struct TemplateInfo {
  std::size_t num_keypoints;
  std::vector<Edge> edges;
  std::vector<double> default_bones;  // one per independent link
  std::vector<double> default_frequencies;
  std::vector<double> default_amplitudes;
};

inline TemplateInfo template_info(SceneTemplate t) {
  switch (t) {
    case SceneTemplate::kPendulum:
      // pivot, elbow, tip
      return {3, {{0, 1}, {1, 2}}, {1.0, 0.8}, {1.0, 1.5}, {0.6, 0.4}};
    case SceneTemplate::kBiped:
      // pelvis, chest, head, l-knee, l-foot, r-knee, r-foot, l-hand, r-hand
      return {9,
              {{0, 1}, {1, 2}, {0, 3}, {3, 4}, {0, 5}, {5, 6}, {1, 7}, {1, 8}},
              {0.4, 0.2, 0.4, 0.4, 0.5},
              {0.5, 1.0},
              {0.1, 0.5}};
    case SceneTemplate::kMultiObject:
      // two double pendulums whose pivots are joined by a rigid bar
      return {6,
              {{0, 1}, {1, 2}, {3, 4}, {4, 5}, {0, 3}},
              {0.5, 0.4, 0.5, 0.4},
              {1.0, 1.5, 1.2, 2.0},
              {0.6, 0.4, 0.5, 0.3}};
  }
  throw ValidationError("scene: unknown template");
}

inline void validate(const SceneSpec& spec) {
  const TemplateInfo info = template_info(spec.scene_template);
  if (!(spec.duration > 0.0) || !std::isfinite(spec.duration)) {
    throw ValidationError("scene: duration must be > 0");
  }
  if (!(spec.frame_rate > 0.0) || !std::isfinite(spec.frame_rate)) {
    throw ValidationError("scene: frame_rate must be > 0");
  }
  if (!(spec.noise_sigma >= 0.0) || !std::isfinite(spec.noise_sigma)) {
    throw ValidationError("scene: noise_sigma must be >= 0");
  }
  if (spec.samples_per_bone == 0) throw ValidationError("scene: samples_per_bone must be >= 1");
  auto check_len = [](const std::vector<double>& v, std::size_t n, const char* what) {
    if (!v.empty() && v.size() != n) {
      throw ValidationError(std::string("scene: expected ") + std::to_string(n) + " " + what +
                            ", got " + std::to_string(v.size()));
    }
  };
  check_len(spec.frequencies, info.default_frequencies.size(), "frequencies");
  check_len(spec.amplitudes, info.default_amplitudes.size(), "amplitudes");
  check_len(spec.bone_lengths, info.default_bones.size(), "bone_lengths");
  for (double b : spec.bone_lengths) {
    if (!(b > 0.0)) throw ValidationError("scene: bone lengths must be > 0");
  }
  for (const auto& w : spec.occlusions) {
    if (w.keypoint >= info.num_keypoints) {
      throw ValidationError("scene: occlusion keypoint " + std::to_string(w.keypoint) +
                            " out of range for m = " + std::to_string(info.num_keypoints));
    }
    if (!(w.end > w.start)) throw ValidationError("scene: occlusion window must have end > start");
  }
}

namespace detail {

inline const std::vector<double>& or_default(const std::vector<double>& v,
                                             const std::vector<double>& d) {
  return v.empty() ? d : v;
}

// Unit vector in the x-y plane at angle a from straight down, tilted out of
// plane by `tilt` radians.
inline Vec3 limb_direction(double a, double tilt = 0.0) {
  const double c = std::cos(tilt);
  return {std::sin(a) * c, -std::cos(a) * c, std::sin(tilt)};
}

inline double wave(double amplitude, double freq, double t, double phase = 0.0) {
  return amplitude * std::sin(2.0 * std::numbers::pi * freq * t + phase);
}

inline std::vector<Vec3> double_pendulum(const Vec3& pivot, double l1, double l2, double a1,
                                         double a2, double f1, double f2, double t) {
  const double th1 = wave(a1, f1, t);
  const double th2 = wave(a2, f2, t, std::numbers::pi / 3.0);
  const Vec3 elbow = pivot + l1 * limb_direction(th1);
  const Vec3 tip = elbow + l2 * limb_direction(th1 + th2);
  return {pivot, elbow, tip};
}

}  // namespace detail

/// Closed-form keypoint positions of a template at time t.
inline std::vector<Vec3> template_pose(const SceneSpec& spec, double t) {
  const TemplateInfo info = template_info(spec.scene_template);
  const auto& f = detail::or_default(spec.frequencies, info.default_frequencies);
  const auto& a = detail::or_default(spec.amplitudes, info.default_amplitudes);
  const auto& b = detail::or_default(spec.bone_lengths, info.default_bones);
  switch (spec.scene_template) {
    case SceneTemplate::kPendulum:
      return detail::double_pendulum({0.0, 0.9, 0.0}, b[0], b[1], a[0], a[1], f[0], f[1], t);
    case SceneTemplate::kBiped: {
      using detail::limb_direction;
      using detail::wave;
      // b = torso, neck, thigh, shin, arm; f/a = (body sway, limb swing)
      const Vec3 pelvis{wave(a[0], f[0], t), wave(0.5 * a[0], 2.0 * f[0], t), 0.0};
      const double swing = wave(a[1], f[1], t);
      const double bend = 0.5 * a[1] * (1.0 + std::sin(2.0 * std::numbers::pi * f[1] * t));
      const Vec3 chest = pelvis + b[0] * Vec3{0.0, 1.0, 0.0};
      const Vec3 head = chest + b[1] * limb_direction(std::numbers::pi + 0.5 * swing * 0.2);
      const double tilt = 0.2;
      const Vec3 lknee = pelvis + b[2] * limb_direction(swing, tilt);
      const Vec3 lfoot = lknee + b[3] * limb_direction(swing - bend, tilt);
      const Vec3 rknee = pelvis + b[2] * limb_direction(-swing, -tilt);
      const Vec3 rfoot = rknee + b[3] * limb_direction(-swing - bend, -tilt);
      const Vec3 lhand = chest + b[4] * limb_direction(-0.8 * swing, 2.0 * tilt);
      const Vec3 rhand = chest + b[4] * limb_direction(0.8 * swing, -2.0 * tilt);
      return {pelvis, chest, head, lknee, lfoot, rknee, rfoot, lhand, rhand};
    }
    case SceneTemplate::kMultiObject: {
      auto left = detail::double_pendulum({-0.5, 0.6, 0.0}, b[0], b[1], a[0], a[1], f[0], f[1], t);
      auto right = detail::double_pendulum({0.5, 0.6, 0.0}, b[2], b[3], a[2], a[3], f[2], f[3], t);
      left.insert(left.end(), right.begin(), right.end());
      return left;
    }
  }
  throw ValidationError("scene: unknown template");
}

/// Skeleton of a template; rest lengths are measured on the generated pose.
inline SkeletonGraph template_skeleton(const SceneSpec& spec) {
  const TemplateInfo info = template_info(spec.scene_template);
  SkeletonGraph g;
  g.num_keypoints = info.num_keypoints;
  g.edges = info.edges;
  const auto pose = template_pose(spec, 0.0);
  for (const auto& e : g.edges) g.rest_lengths.push_back(norm(pose[e.i] - pose[e.j]));
  return g;
}

inline std::size_t frame_count(const SceneSpec& spec) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(spec.duration * spec.frame_rate)));
}

/// Points at fractions (s + 1) / (n + 1) along each bone.
inline std::vector<Vec3> bone_samples(const SkeletonGraph& g, const std::vector<Vec3>& pos,
                                      std::size_t per_bone) {
  std::vector<Vec3> out;
  out.reserve(g.edges.size() * per_bone);
  for (const auto& e : g.edges) {
    for (std::size_t s = 0; s < per_bone; ++s) {
      const double u = static_cast<double>(s + 1) / static_cast<double>(per_bone + 1);
      out.push_back(pos[e.i] + u * (pos[e.j] - pos[e.i]));
    }
  }
  return out;
}

struct GeneratedScene {
  KeypointTrack ground_truth;  // clean positions, visibility per occlusion schedule
  KeypointTrack observed;      // ground truth plus Gaussian annotation noise
  SignalTargets targets;       // dense bone samples from clean positions
};

inline GeneratedScene generate_scene(const SceneSpec& spec) {
  validate(spec);
  GeneratedScene out;
  out.ground_truth.skeleton = template_skeleton(spec);
  out.targets.samples_per_bone = spec.samples_per_bone;
  const std::size_t n = frame_count(spec);
  const std::size_t m = out.ground_truth.skeleton.num_keypoints;

  for (std::size_t k = 0; k < n; ++k) {
    KeypointFrame fr;
    fr.time = static_cast<double>(k) / spec.frame_rate;
    fr.positions = template_pose(spec, fr.time);
    fr.visible.assign(m, true);
    for (const auto& w : spec.occlusions) {
      if (fr.time >= w.start && fr.time < w.end) fr.visible[w.keypoint] = false;
    }
    out.targets.times.push_back(fr.time);
    out.targets.samples.push_back(
        bone_samples(out.ground_truth.skeleton, fr.positions, spec.samples_per_bone));
    out.ground_truth.frames.push_back(std::move(fr));
  }

  out.observed = out.ground_truth;
  if (spec.noise_sigma > 0.0) {
    std::mt19937_64 rng(derive_seed(spec.seed, "annotation-noise"));
    std::normal_distribution<double> noise(0.0, spec.noise_sigma);
    for (auto& fr : out.observed.frames) {
      for (auto& p : fr.positions) {
        for (double& c : p) c += noise(rng);
      }
    }
  }
  return out;
}

/// Marks the given keypoints invisible in every frame. Positions are kept.
inline KeypointTrack corrupt_keypoints(const KeypointTrack& track,
                                       const std::vector<std::size_t>& remove) {
  const std::size_t m = track.num_keypoints();
  std::set<std::size_t> unique(remove.begin(), remove.end());
  for (auto k : unique) {
    if (k >= m) {
      throw ValidationError("corrupt_keypoints: keypoint " + std::to_string(k) +
                            " out of range for m = " + std::to_string(m));
    }
  }
  if (unique.size() >= m) {
    throw ValidationError("corrupt_keypoints: cannot remove all " + std::to_string(m) + " keypoints");
  }
  KeypointTrack out = track;
  for (auto& fr : out.frames) {
    for (auto k : unique) fr.visible[k] = false;
  }
  return out;
}

/// Frame indices split into (train, held-out); every `stride`-th frame,
/// starting at stride - 1, is held out. The first and last frames always
/// train, so held-out frames are interpolated, never extrapolated. stride 0
/// or 1 keeps everything for training.
inline std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_frames(
    std::size_t num_frames, std::size_t stride) {
  std::vector<std::size_t> train, held;
  for (std::size_t k = 0; k < num_frames; ++k) {
    if (stride >= 2 && k % stride == stride - 1 && k + 1 < num_frames) {
      held.push_back(k);
    } else {
      train.push_back(k);
    }
  }
  return {train, held};
}

inline KeypointTrack subset(const KeypointTrack& track, const std::vector<std::size_t>& idx) {
  KeypointTrack out;
  out.skeleton = track.skeleton;
  for (auto k : idx) out.frames.push_back(track.frames.at(k));
  return out;
}

inline SignalTargets subset(const SignalTargets& targets, const std::vector<std::size_t>& idx) {
  SignalTargets out;
  out.samples_per_bone = targets.samples_per_bone;
  for (auto k : idx) {
    out.times.push_back(targets.times.at(k));
    out.samples.push_back(targets.samples.at(k));
  }
  return out;
}

/// Affine map x -> (x - center) / scale that brings a track into [-1, 1].
struct CoordinateNormalizer {
  Vec3 center{0.0, 0.0, 0.0};
  double scale = 1.0;

  Vec3 apply(const Vec3& p) const { return (1.0 / scale) * (p - center); }
  Vec3 invert(const Vec3& p) const { return scale * p + center; }

  static CoordinateNormalizer fit(const KeypointTrack& track) {
    Vec3 lo{1e300, 1e300, 1e300}, hi{-1e300, -1e300, -1e300};
    for (const auto& fr : track.frames) {
      for (const auto& p : fr.positions) {
        for (int c = 0; c < 3; ++c) {
          lo[c] = std::min(lo[c], p[c]);
          hi[c] = std::max(hi[c], p[c]);
        }
      }
    }
    CoordinateNormalizer n;
    double half = 0.0;
    for (int c = 0; c < 3; ++c) {
      n.center[c] = 0.5 * (lo[c] + hi[c]);
      half = std::max(half, 0.5 * (hi[c] - lo[c]));
    }
    n.scale = half > 0.0 ? half : 1.0;
    return n;
  }

  KeypointTrack apply(const KeypointTrack& track) const {
    KeypointTrack out = track;
    for (auto& fr : out.frames) {
      for (auto& p : fr.positions) p = apply(p);
    }
    for (auto& r : out.skeleton.rest_lengths) r /= scale;
    return out;
  }
};

}  // namespace sirenpose
