#pragma once

// Keypoint and reconstruction losses.
//
//   L_pos       = sum_i ||k^_i - k_i||^2
//   L_geo       = sum_(i,j) in E ||sin(w (k^_i - k^_j)) - sin(w (k_i - k_j))||^2
//   L_sirenpose = L_pos + lambda_geo * L_geo
//   L_recon     = ||f_pred - f_target||^2
//   L_total     = L_recon + lambda_sp * L_sirenpose
//
// Keypoints are batched as rows of [B x 3M] (x0 y0 z0 x1 ...); visibility is
// a [B x M] 0/1 matrix. Hidden keypoints contribute nothing to L_pos, and an
// edge contributes to L_geo only when both endpoints are visible. All sums
// run over the batch as well.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "sirenpose/autodiff.hpp"
#include "sirenpose/errors.hpp"
#include "sirenpose/scene.hpp"
#include "sirenpose/tensor.hpp"

namespace sirenpose {

struct LossWeights {
  double lambda_geo = 0.1;
  double lambda_sp = 1.0;
  double omega0_loss = 30.0;
  // Coordinates are multiplied by this before the sine term. 0 picks the
  // largest scale that keeps every rest-length bone on the principal branch
  // (see geo_scale_for); 1 evaluates raw coordinates.
  double geo_scale = 0.0;

  void validate() const {
    if (!(lambda_geo >= 0.0) || !(lambda_sp >= 0.0) || !std::isfinite(lambda_geo) ||
        !std::isfinite(lambda_sp)) {
      throw ValidationError("loss weights must be finite and >= 0");
    }
    if (!(omega0_loss > 0.0) || !std::isfinite(omega0_loss)) {
      throw ValidationError("omega0_loss must be > 0");
    }
    if (!(geo_scale >= 0.0) || !std::isfinite(geo_scale)) {
      throw ValidationError("geo_scale must be finite and >= 0");
    }
  }
  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

struct LossBreakdown {
  double l_pos = 0.0;
  double l_geo = 0.0;
  double l_sirenpose = 0.0;
  double l_recon = 0.0;
  double l_total = 0.0;
  friend bool operator==(const LossBreakdown&, const LossBreakdown&) = default;
};

/// Rows of [B x 3M] from frames.
inline Tensor keypoint_matrix(std::span<const KeypointFrame> frames) {
  if (frames.empty()) throw ValidationError("keypoint_matrix: no frames");
  const std::size_t m = frames.front().size();
  Tensor out({frames.size(), 3 * m});
  for (std::size_t b = 0; b < frames.size(); ++b) {
    if (frames[b].size() != m) throw ValidationError("keypoint_matrix: keypoint count varies");
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t c = 0; c < 3; ++c) out.at(b, 3 * i + c) = frames[b].positions[i][c];
    }
  }
  return out;
}

inline Tensor visibility_matrix(std::span<const KeypointFrame> frames) {
  if (frames.empty()) throw ValidationError("visibility_matrix: no frames");
  const std::size_t m = frames.front().size();
  Tensor out({frames.size(), m});
  for (std::size_t b = 0; b < frames.size(); ++b) {
    for (std::size_t i = 0; i < m; ++i) out.at(b, i) = frames[b].visible.at(i) ? 1.0 : 0.0;
  }
  return out;
}

inline Tensor all_visible(std::size_t batch, std::size_t m) { return Tensor({batch, m}, 1.0); }

namespace detail {

inline std::size_t check_keypoint_args(const ad::Var& pred, const Tensor& gt, const Tensor& mask) {
  const Tensor& pv = pred.value();
  if (pv.rank() != 2 || pv.shape() != gt.shape() || pv.shape()[1] % 3 != 0) {
    throw ValidationError("keypoint loss: prediction " + shape_string(pv.shape()) +
                          " and ground truth " + shape_string(gt.shape()) + " disagree");
  }
  const std::size_t m = pv.shape()[1] / 3;
  if (mask.rank() != 2 || mask.shape()[0] != pv.shape()[0] || mask.shape()[1] != m) {
    throw ValidationError("keypoint loss: mask " + shape_string(mask.shape()) +
                          " does not match " + std::to_string(pv.shape()[0]) + " x " +
                          std::to_string(m));
  }
  return m;
}

// [3M x 3E] incidence matrix: column 3e+c picks k_i[c] - k_j[c].
inline Tensor relative_offset_operator(const SkeletonGraph& g, std::size_t m) {
  Tensor d({3 * m, 3 * g.edges.size()});
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    const auto [i, j] = g.edges[e];
    if (i >= m || j >= m || i == j) {
      throw ValidationError("loss_geo: invalid edge " + std::to_string(e) + " (" +
                            std::to_string(i) + ", " + std::to_string(j) + ") for m = " +
                            std::to_string(m));
    }
    for (std::size_t c = 0; c < 3; ++c) {
      d.at(3 * i + c, 3 * e + c) += 1.0;
      d.at(3 * j + c, 3 * e + c) -= 1.0;
    }
  }
  return d;
}

}  // namespace detail

inline ad::Var loss_pos(const ad::Var& pred, const Tensor& gt, const Tensor& mask) {
  const std::size_t m = detail::check_keypoint_args(pred, gt, mask);
  const std::size_t batch = gt.shape()[0];
  Tensor mask3({batch, 3 * m});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t k = 0; k < 3 * m; ++k) mask3.at(b, k) = mask.at(b, k / 3);
  }
  ad::Tape& tape = pred.tape();
  ad::Var diff = ad::mul(ad::sub(pred, tape.constant(gt)), tape.constant(mask3));
  return ad::sum(ad::square(diff));
}

inline ad::Var loss_geo(const ad::Var& pred, const Tensor& gt, const SkeletonGraph& skeleton,
                        double omega0_loss, const Tensor& mask) {
  const std::size_t m = detail::check_keypoint_args(pred, gt, mask);
  const std::size_t batch = gt.shape()[0];
  const std::size_t ne = skeleton.edges.size();
  ad::Tape& tape = pred.tape();
  if (ne == 0) return ad::scale(ad::sum(pred), 0.0);

  const Tensor op = detail::relative_offset_operator(skeleton, m);
  Tensor gt_sin({batch, 3 * ne});
  Tensor edge_mask({batch, 3 * ne});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t e = 0; e < ne; ++e) {
      const auto [i, j] = skeleton.edges[e];
      const double vis = mask.at(b, i) * mask.at(b, j);
      for (std::size_t c = 0; c < 3; ++c) {
        const double rel = gt.at(b, 3 * i + c) - gt.at(b, 3 * j + c);
        gt_sin.at(b, 3 * e + c) = std::sin(omega0_loss * rel);
        edge_mask.at(b, 3 * e + c) = vis;
      }
    }
  }
  ad::Var rel = ad::matmul(pred, tape.constant(op));
  ad::Var diff = ad::sub(ad::sin(ad::scale(rel, omega0_loss)), tape.constant(gt_sin));
  return ad::sum(ad::square(ad::mul(diff, tape.constant(edge_mask))));
}

struct SirenPoseTerms {
  ad::Var total;  // L_pos + lambda_geo * L_geo
  ad::Var pos;
  ad::Var geo;
};

namespace detail {
inline Tensor scaled(Tensor t, double k) {
  for (double& v : t.values()) v *= k;
  return t;
}
}  // namespace detail

/// Resolves weights.geo_scale. The automatic value maps the longest rest
/// bone to pi / (2 omega0_loss), so no offset component of a rest-length
/// bone wraps the sine.
inline double geo_scale_for(const LossWeights& weights, const SkeletonGraph& skeleton) {
  if (weights.geo_scale > 0.0) return weights.geo_scale;
  double longest = 0.0;
  for (double l : skeleton.rest_lengths) longest = std::max(longest, l);
  if (!(longest > 0.0)) return 1.0;
  return std::numbers::pi / (2.0 * weights.omega0_loss * longest);
}

inline SirenPoseTerms loss_sirenpose(const ad::Var& pred, const Tensor& gt,
                                     const SkeletonGraph& skeleton, const LossWeights& weights,
                                     const Tensor& mask, LossBreakdown* breakdown = nullptr) {
  weights.validate();
  SirenPoseTerms t;
  t.pos = loss_pos(pred, gt, mask);
  const double k = geo_scale_for(weights, skeleton);
  t.geo = k == 1.0 ? loss_geo(pred, gt, skeleton, weights.omega0_loss, mask)
                   : loss_geo(ad::scale(pred, k), detail::scaled(gt, k), skeleton, weights.omega0_loss, mask);
  t.total = ad::add(t.pos, ad::scale(t.geo, weights.lambda_geo));
  if (breakdown) {
    breakdown->l_pos = t.pos.value().item();
    breakdown->l_geo = t.geo.value().item();
    breakdown->l_sirenpose = t.total.value().item();
  }
  return t;
}

inline ad::Var loss_recon(const ad::Var& pred_signal, const Tensor& target_signal) {
  if (pred_signal.value().shape() != target_signal.shape()) {
    throw ValidationError("loss_recon: shape mismatch " + shape_string(pred_signal.value().shape()) +
                          " vs " + shape_string(target_signal.shape()));
  }
  return ad::sum(ad::square(ad::sub(pred_signal, pred_signal.tape().constant(target_signal))));
}

inline ad::Var loss_total(const ad::Var& recon, const ad::Var& sirenpose, const LossWeights& weights,
                          LossBreakdown* breakdown = nullptr) {
  if (!recon.value().is_scalar() || !sirenpose.value().is_scalar()) {
    throw ValidationError("loss_total: both terms must be scalar");
  }
  ad::Var total = ad::add(recon, ad::scale(sirenpose, weights.lambda_sp));
  if (breakdown) {
    breakdown->l_recon = recon.value().item();
    breakdown->l_sirenpose = sirenpose.value().item();
    breakdown->l_total = total.value().item();
  }
  return total;
}

}  // namespace sirenpose
