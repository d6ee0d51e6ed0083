#pragma once

// Trajectory and keypoint metrics.
//
// Alignment is Horn's closed-form absolute orientation: the optimal rotation
// is the unit quaternion given by the dominant eigenvector of a symmetric
// 4x4 matrix built from the cross-covariance of the centered point sets.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sirenpose/errors.hpp"
#include "sirenpose/scene.hpp"

namespace sirenpose {

struct Pose {
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Pose inverse() const {
    const Eigen::Quaterniond qi = rotation.conjugate();
    return {qi, -(qi * translation)};
  }
  Pose operator*(const Pose& o) const {
    return {(rotation * o.rotation).normalized(), rotation * o.translation + translation};
  }
};

struct PoseTrajectory {
  std::vector<double> timestamps;
  std::vector<Pose> poses;

  std::size_t size() const { return poses.size(); }

  void validate() const {
    if (timestamps.size() != poses.size()) {
      throw ValidationError("trajectory: " + std::to_string(timestamps.size()) + " timestamps but " +
                            std::to_string(poses.size()) + " poses");
    }
    for (std::size_t i = 0; i < poses.size(); ++i) {
      if (std::abs(poses[i].rotation.norm() - 1.0) > 1e-9) {
        throw ValidationError("trajectory: pose " + std::to_string(i) + " quaternion is not unit");
      }
      if (i > 0 && !(timestamps[i] > timestamps[i - 1])) {
        throw ValidationError("trajectory: timestamp " + std::to_string(i) + " does not increase");
      }
    }
  }
};

/// x -> scale * R x + t
struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  double scale = 1.0;

  Eigen::Vector3d apply(const Eigen::Vector3d& x) const { return scale * (rotation * x) + translation; }
};

struct PointAlignment {
  RigidTransform transform;
  double rmse = 0.0;
  double eigen_gap = 0.0;             // (l1 - l2) / |l1|; near 0 when the rotation is ambiguous
  bool reflection_suspected = false;  // cross-covariance determinant < 0
};

namespace detail {

inline Eigen::Vector3d centroid(const std::vector<Eigen::Vector3d>& pts) {
  Eigen::Vector3d c = Eigen::Vector3d::Zero();
  for (const auto& p : pts) c += p;
  return c / static_cast<double>(pts.size());
}

}  // namespace detail

/// Least-squares transform mapping `src` onto `dst` (no degeneracy checks).
inline PointAlignment horn_point_alignment(const std::vector<Eigen::Vector3d>& src,
                                           const std::vector<Eigen::Vector3d>& dst,
                                           bool with_scale = false) {
  if (src.size() != dst.size() || src.empty()) {
    throw ValidationError("horn: point sets must be non-empty and of equal size");
  }
  const Eigen::Vector3d cs = detail::centroid(src);
  const Eigen::Vector3d cd = detail::centroid(dst);
  Eigen::Matrix3d s = Eigen::Matrix3d::Zero();  // s(a, b) = sum src_a dst_b
  double src_sq = 0.0;
  for (std::size_t k = 0; k < src.size(); ++k) {
    const Eigen::Vector3d a = src[k] - cs;
    const Eigen::Vector3d b = dst[k] - cd;
    s += a * b.transpose();
    src_sq += a.squaredNorm();
  }
  const double sxx = s(0, 0), sxy = s(0, 1), sxz = s(0, 2);
  const double syx = s(1, 0), syy = s(1, 1), syz = s(1, 2);
  const double szx = s(2, 0), szy = s(2, 1), szz = s(2, 2);
  Eigen::Matrix4d n;
  n << sxx + syy + szz, syz - szy, szx - sxz, sxy - syx,
       syz - szy, sxx - syy - szz, sxy + syx, szx + sxz,
       szx - sxz, sxy + syx, -sxx + syy - szz, syz + szy,
       sxy - syx, szx + sxz, syz + szy, -sxx - syy + szz;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> eig(n);
  const Eigen::Vector4d v = eig.eigenvectors().col(3);  // eigenvalues ascend
  Eigen::Quaterniond q(v(0), v(1), v(2), v(3));
  q.normalize();

  PointAlignment out;
  out.transform.rotation = q.toRotationMatrix();
  if (with_scale && src_sq > 0.0) {
    double num = 0.0;
    for (std::size_t k = 0; k < src.size(); ++k) {
      num += (dst[k] - cd).dot(out.transform.rotation * (src[k] - cs));
    }
    out.transform.scale = num / src_sq;
  }
  out.transform.translation = cd - out.transform.scale * (out.transform.rotation * cs);

  const Eigen::Vector4d ev = eig.eigenvalues();
  const double top = std::abs(ev(3));
  out.eigen_gap = top > 0.0 ? (ev(3) - ev(2)) / top : 0.0;
  const double mag = s.norm();
  out.reflection_suspected = mag > 0.0 && s.determinant() < -1e-9 * mag * mag * mag;

  double sq = 0.0;
  for (std::size_t k = 0; k < src.size(); ++k) {
    sq += (out.transform.apply(src[k]) - dst[k]).squaredNorm();
  }
  out.rmse = std::sqrt(sq / static_cast<double>(src.size()));
  return out;
}

/// True when the centered points span fewer than two dimensions.
inline bool is_degenerate_point_set(const std::vector<Eigen::Vector3d>& pts, double rel_tol = 1e-10) {
  if (pts.size() < 3) return true;
  const Eigen::Vector3d c = detail::centroid(pts);
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& p : pts) cov += (p - c) * (p - c).transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
  const double l1 = eig.eigenvalues()(2);
  const double l2 = eig.eigenvalues()(1);
  return !(l1 > 0.0) || l2 <= rel_tol * l1;
}

struct TrajectoryAlignment {
  RigidTransform transform;
  PoseTrajectory aligned;
  double rmse = 0.0;
  bool reflection_suspected = false;
};

inline std::vector<Eigen::Vector3d> translations(const PoseTrajectory& traj) {
  std::vector<Eigen::Vector3d> out;
  out.reserve(traj.size());
  for (const auto& p : traj.poses) out.push_back(p.translation);
  return out;
}

inline PoseTrajectory apply(const RigidTransform& tf, const PoseTrajectory& traj) {
  PoseTrajectory out = traj;
  const Eigen::Quaterniond qr(tf.rotation);
  for (auto& p : out.poses) {
    p.translation = tf.apply(p.translation);
    p.rotation = (qr * p.rotation).normalized();
  }
  return out;
}

/// Aligns `est` onto `gt` using their translation point sets.
inline TrajectoryAlignment horn_align(const PoseTrajectory& est, const PoseTrajectory& gt,
                                      bool with_scale = false) {
  est.validate();
  gt.validate();
  if (est.size() != gt.size() || est.size() < 3) {
    throw ValidationError("horn_align: need two trajectories of equal length >= 3 (got " +
                          std::to_string(est.size()) + " and " + std::to_string(gt.size()) + ")");
  }
  for (std::size_t i = 0; i < est.size(); ++i) {
    if (std::abs(est.timestamps[i] - gt.timestamps[i]) > 1e-9) {
      throw ValidationError("horn_align: timestamps differ at frame " + std::to_string(i));
    }
  }
  const auto src = translations(est);
  const auto dst = translations(gt);
  if (is_degenerate_point_set(src) || is_degenerate_point_set(dst)) {
    throw ValidationError("horn_align: degenerate (collinear or coincident) point set");
  }
  const auto pa = horn_point_alignment(src, dst, with_scale);
  return {pa.transform, apply(pa.transform, est), pa.rmse, pa.reflection_suspected};
}

inline std::vector<double> ate_series(const PoseTrajectory& aligned_est, const PoseTrajectory& gt) {
  if (aligned_est.size() != gt.size()) {
    throw ValidationError("ate: trajectory lengths differ (" + std::to_string(aligned_est.size()) +
                          " vs " + std::to_string(gt.size()) + ")");
  }
  std::vector<double> out;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    out.push_back((aligned_est.poses[i].translation - gt.poses[i].translation).norm());
  }
  return out;
}

/// Root mean square translation error.
inline double ate(const PoseTrajectory& aligned_est, const PoseTrajectory& gt) {
  const auto e = ate_series(aligned_est, gt);
  if (e.empty()) throw ValidationError("ate: empty trajectories");
  double sq = 0.0;
  for (double v : e) sq += v * v;
  return std::sqrt(sq / static_cast<double>(e.size()));
}

/// Rotation angle of a unit quaternion in degrees, in [0, 180].
inline double rotation_angle_deg(const Eigen::Quaterniond& q) {
  const double s = q.vec().norm();
  const double c = std::abs(q.w());
  return 2.0 * std::atan2(s, c) * 180.0 / std::numbers::pi;
}

struct RpeResult {
  double trans_rmse = 0.0;
  double rot_rmse_deg = 0.0;
  std::vector<double> trans;  // per pair
  std::vector<double> rot_deg;
};

inline RpeResult rpe(const PoseTrajectory& est, const PoseTrajectory& gt, std::size_t delta = 1) {
  if (est.size() != gt.size()) throw ValidationError("rpe: trajectory lengths differ");
  if (delta < 1 || delta >= est.size()) {
    throw ValidationError("rpe: delta " + std::to_string(delta) + " must be in [1, " +
                          std::to_string(est.size()) + ")");
  }
  RpeResult r;
  double st = 0.0, sr = 0.0;
  for (std::size_t i = 0; i + delta < est.size(); ++i) {
    const Pose rel_gt = gt.poses[i].inverse() * gt.poses[i + delta];
    const Pose rel_est = est.poses[i].inverse() * est.poses[i + delta];
    const Pose err = rel_gt.inverse() * rel_est;
    const double t = err.translation.norm();
    const double a = rotation_angle_deg(err.rotation);
    r.trans.push_back(t);
    r.rot_deg.push_back(a);
    st += t * t;
    sr += a * a;
  }
  const double n = static_cast<double>(r.trans.size());
  r.trans_rmse = std::sqrt(st / n);
  r.rot_rmse_deg = std::sqrt(sr / n);
  return r;
}

inline std::vector<Eigen::Vector3d> to_eigen(const std::vector<Vec3>& pts) {
  std::vector<Eigen::Vector3d> out;
  for (const auto& p : pts) out.emplace_back(p[0], p[1], p[2]);
  return out;
}

/// Per-frame rigid pose of a keypoint set: translation is the centroid,
/// rotation is the Horn fit from `reference` (usually ground-truth frame 0).
inline PoseTrajectory trajectory_from_track(const KeypointTrack& track,
                                            const std::vector<Vec3>& reference) {
  if (reference.size() != track.num_keypoints()) {
    throw ValidationError("trajectory_from_track: reference has wrong keypoint count");
  }
  const auto ref = to_eigen(reference);
  PoseTrajectory out;
  for (const auto& fr : track.frames) {
    const auto pts = to_eigen(fr.positions);
    const auto pa = horn_point_alignment(ref, pts);
    Pose p;
    p.rotation = Eigen::Quaterniond(pa.transform.rotation).normalized();
    p.translation = detail::centroid(pts);
    out.timestamps.push_back(fr.time);
    out.poses.push_back(p);
  }
  return out;
}

struct KeypointMetrics {
  double mse = 0.0;  // mean over visible keypoints of squared error
  double epe = 0.0;  // mean Euclidean error
  double geometric_accuracy = 1.0;
  double temporal_consistency = 1.0;
  double motion_smoothness = 1.0;

  double mse_score() const { return 100.0 / (1.0 + mse); }
  double epe_score() const { return 100.0 / (1.0 + epe); }
};

namespace detail {

inline void check_matched(const KeypointTrack& pred, const KeypointTrack& gt) {
  if (pred.num_keypoints() != gt.num_keypoints()) {
    throw ValidationError("metrics: keypoint counts differ (" + std::to_string(pred.num_keypoints()) +
                          " vs " + std::to_string(gt.num_keypoints()) + ")");
  }
  if (pred.num_frames() != gt.num_frames() || gt.frames.empty()) {
    throw ValidationError("metrics: frame counts differ (" + std::to_string(pred.num_frames()) +
                          " vs " + std::to_string(gt.num_frames()) + ")");
  }
}

inline double mean_rest_length(const SkeletonGraph& g) {
  if (g.rest_lengths.empty()) return 1.0;
  double s = 0.0;
  for (double r : g.rest_lengths) s += r;
  return s / static_cast<double>(g.rest_lengths.size());
}

// Per-frame geometric accuracy: mean over visible edges of
// 1 - min(1, | |k^_i - k^_j| - |k_i - k_j| | / |k_i - k_j|). NaN when no edge counts.
inline double frame_geometric_accuracy(const KeypointFrame& p, const KeypointFrame& g,
                                       const SkeletonGraph& skeleton) {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& e : skeleton.edges) {
    if (!g.visible[e.i] || !g.visible[e.j]) continue;
    const double lg = norm(g.positions[e.i] - g.positions[e.j]);
    const double lp = norm(p.positions[e.i] - p.positions[e.j]);
    if (!(lg > 0.0)) continue;
    s += 1.0 - std::min(1.0, std::abs(lp - lg) / lg);
    ++n;
  }
  return n ? s / static_cast<double>(n) : std::nan("");
}

}  // namespace detail

/// Motion smoothness counts frame t (1 <= t < T-1) as smooth when every
/// predicted keypoint's second difference stays within
/// 1.5 * (largest ground-truth second difference) + 1e-3 * mean bone length.
/// Temporal consistency is 1 - min(1, v / mean bone length), v being the mean
/// change of the per-keypoint error vector between consecutive frames.
inline KeypointMetrics keypoint_metrics(const KeypointTrack& pred, const KeypointTrack& gt,
                                        const SkeletonGraph& skeleton) {
  detail::check_matched(pred, gt);
  KeypointMetrics m;
  const std::size_t nf = gt.num_frames(), nk = gt.num_keypoints();
  const double scale = detail::mean_rest_length(skeleton);

  double sq = 0.0, eu = 0.0;
  std::size_t count = 0;
  double geo = 0.0;
  std::size_t geo_frames = 0;
  for (std::size_t f = 0; f < nf; ++f) {
    const auto& p = pred.frames[f];
    const auto& g = gt.frames[f];
    for (std::size_t i = 0; i < nk; ++i) {
      if (!g.visible[i]) continue;
      const double d = norm(p.positions[i] - g.positions[i]);
      sq += d * d;
      eu += d;
      ++count;
    }
    const double ga = detail::frame_geometric_accuracy(p, g, skeleton);
    if (!std::isnan(ga)) {
      geo += ga;
      ++geo_frames;
    }
  }
  m.mse = count ? sq / static_cast<double>(count) : 0.0;
  m.epe = count ? eu / static_cast<double>(count) : 0.0;
  m.geometric_accuracy = geo_frames ? geo / static_cast<double>(geo_frames) : 1.0;

  double variation = 0.0;
  std::size_t vcount = 0;
  for (std::size_t f = 1; f < nf; ++f) {
    for (std::size_t i = 0; i < nk; ++i) {
      if (!gt.frames[f].visible[i] || !gt.frames[f - 1].visible[i]) continue;
      const Vec3 e1 = pred.frames[f].positions[i] - gt.frames[f].positions[i];
      const Vec3 e0 = pred.frames[f - 1].positions[i] - gt.frames[f - 1].positions[i];
      variation += norm(e1 - e0);
      ++vcount;
    }
  }
  if (vcount) {
    m.temporal_consistency = 1.0 - std::min(1.0, (variation / static_cast<double>(vcount)) / scale);
  }

  if (nf >= 3) {
    auto second_diff = [](const KeypointTrack& t, std::size_t f, std::size_t i) {
      const auto& a = t.frames[f - 1].positions[i];
      const auto& b = t.frames[f].positions[i];
      const auto& c = t.frames[f + 1].positions[i];
      return norm(a - 2.0 * b + c);
    };
    double gt_max = 0.0;
    for (std::size_t f = 1; f + 1 < nf; ++f) {
      for (std::size_t i = 0; i < nk; ++i) gt_max = std::max(gt_max, second_diff(gt, f, i));
    }
    const double threshold = 1.5 * gt_max + 1e-3 * scale;
    std::size_t smooth = 0;
    for (std::size_t f = 1; f + 1 < nf; ++f) {
      bool ok = true;
      for (std::size_t i = 0; i < nk && ok; ++i) ok = second_diff(pred, f, i) <= threshold;
      smooth += ok ? 1 : 0;
    }
    m.motion_smoothness = static_cast<double>(smooth) / static_cast<double>(nf - 2);
  }
  return m;
}

/// Per-frame values of "epe", "mse" or "geometric_accuracy".
inline std::vector<double> frame_error_series(const KeypointTrack& pred, const KeypointTrack& gt,
                                              const std::string& metric) {
  detail::check_matched(pred, gt);
  enum class Kind { kEpe, kMse, kGeo } kind;
  if (metric == "epe") {
    kind = Kind::kEpe;
  } else if (metric == "mse") {
    kind = Kind::kMse;
  } else if (metric == "geometric_accuracy") {
    kind = Kind::kGeo;
  } else {
    throw ValidationError("frame_error_series: unknown metric '" + metric + "'");
  }
  std::vector<double> out;
  for (std::size_t f = 0; f < gt.num_frames(); ++f) {
    const auto& p = pred.frames[f];
    const auto& g = gt.frames[f];
    if (kind == Kind::kGeo) {
      const double ga = detail::frame_geometric_accuracy(p, g, gt.skeleton);
      out.push_back(std::isnan(ga) ? 1.0 : ga);
      continue;
    }
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < gt.num_keypoints(); ++i) {
      if (!g.visible[i]) continue;
      const double d = norm(p.positions[i] - g.positions[i]);
      s += kind == Kind::kEpe ? d : d * d;
      ++n;
    }
    out.push_back(n ? s / static_cast<double>(n) : 0.0);
  }
  return out;
}

struct MetricReport {
  double ate_rmse = 0.0;
  double rpe_trans_rmse = 0.0;
  double rpe_rot_rmse_deg = 0.0;
  bool trajectory_aligned = false;  // false when the gt path was degenerate
  KeypointMetrics keypoints;
  std::vector<double> times;
  std::vector<double> ate_per_frame;
  std::vector<double> epe_per_frame;
  std::vector<double> mse_per_frame;
  std::vector<double> geo_per_frame;
};

struct EvalOptions {
  std::size_t rpe_delta = 1;
  bool align_scale = false;
};

/// Full metric set for a predicted track against ground truth. Poses are
/// derived from the keypoints (see trajectory_from_track).
inline MetricReport evaluate_tracks(const KeypointTrack& pred, const KeypointTrack& gt,
                                    const EvalOptions& opts = {}) {
  detail::check_matched(pred, gt);
  MetricReport r;
  r.keypoints = keypoint_metrics(pred, gt, gt.skeleton);
  for (const auto& f : gt.frames) r.times.push_back(f.time);
  r.epe_per_frame = frame_error_series(pred, gt, "epe");
  r.mse_per_frame = frame_error_series(pred, gt, "mse");
  r.geo_per_frame = frame_error_series(pred, gt, "geometric_accuracy");

  const auto& reference = gt.frames.front().positions;
  const PoseTrajectory gt_traj = trajectory_from_track(gt, reference);
  const PoseTrajectory est_traj = trajectory_from_track(pred, reference);
  PoseTrajectory aligned = est_traj;
  if (gt_traj.size() >= 3 && !is_degenerate_point_set(translations(gt_traj)) &&
      !is_degenerate_point_set(translations(est_traj))) {
    aligned = horn_align(est_traj, gt_traj, opts.align_scale).aligned;
    r.trajectory_aligned = true;
  }
  r.ate_per_frame = ate_series(aligned, gt_traj);
  r.ate_rmse = ate(aligned, gt_traj);
  if (gt_traj.size() > opts.rpe_delta) {
    const auto rp = rpe(est_traj, gt_traj, opts.rpe_delta);
    r.rpe_trans_rmse = rp.trans_rmse;
    r.rpe_rot_rmse_deg = rp.rot_rmse_deg;
  }
  return r;
}

inline std::string trajectory_to_csv(const PoseTrajectory& traj) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "t,tx,ty,tz,qw,qx,qy,qz\n";
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const auto& p = traj.poses[i];
    os << traj.timestamps[i] << ',' << p.translation.x() << ',' << p.translation.y() << ','
       << p.translation.z() << ',' << p.rotation.w() << ',' << p.rotation.x() << ','
       << p.rotation.y() << ',' << p.rotation.z() << '\n';
  }
  return os.str();
}

inline PoseTrajectory trajectory_from_csv(std::istream& in) {
  PoseTrajectory traj;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line.rfind("t,", 0) == 0) continue;
    std::vector<double> v;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        v.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        throw ValidationError("trajectory csv line " + std::to_string(lineno) + ": bad number '" +
                              cell + "'");
      }
    }
    if (v.size() != 8) {
      throw ValidationError("trajectory csv line " + std::to_string(lineno) + ": expected 8 columns");
    }
    Pose p;
    p.translation = {v[1], v[2], v[3]};
    p.rotation = Eigen::Quaterniond(v[4], v[5], v[6], v[7]);
    traj.timestamps.push_back(v[0]);
    traj.poses.push_back(p);
  }
  traj.validate();
  return traj;
}

}  // namespace sirenpose
