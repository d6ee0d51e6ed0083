#pragma once

// Frequency-fused keypoint predictor: f(t) = f_low(t) + lambda * f_high(t).
//
// Both streams are SIRENs over the same encoded time input. The low stream
// runs at a small omega0 (smooth, coarse motion); the high stream at
// omega0 = 30 (fast detail). One output row holds all M keypoints followed by
// S dense bone samples, each as x y z.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "sirenpose/autodiff.hpp"
#include "sirenpose/errors.hpp"
#include "sirenpose/random.hpp"
#include "sirenpose/siren.hpp"
#include "sirenpose/tensor.hpp"

namespace sirenpose {

/// t -> u = (t - offset) / scale, features [u, sin(pi k u), cos(pi k u)] for k <= order.
struct InputEncoding {
  double time_offset = 0.0;
  double time_scale = 1.0;
  std::size_t fourier_order = 0;

  std::size_t dim() const { return 1 + 2 * fourier_order; }

  /// Maps [t_first, t_last] onto u in [-range, range].
  static InputEncoding spanning(double t_first, double t_last, std::size_t fourier_order = 0,
                                double range = 1.0) {
    if (!(range > 0.0) || !std::isfinite(range)) throw ValidationError("encoding: range must be > 0");
    InputEncoding e;
    e.time_offset = 0.5 * (t_first + t_last);
    e.time_scale = t_last > t_first ? 0.5 * (t_last - t_first) / range : 1.0;
    e.fourier_order = fourier_order;
    return e;
  }

  Tensor encode(const Tensor& t) const {
    if (t.rank() != 2 || t.shape()[1] != 1) {
      throw ValidationError("encoding: time input must be [batch x 1], got " + shape_string(t.shape()));
    }
    const std::size_t batch = t.shape()[0];
    Tensor out({batch, dim()});
    for (std::size_t b = 0; b < batch; ++b) {
      if (!std::isfinite(t[b])) throw ValidationError("encoding: non-finite time");
      const double u = (t[b] - time_offset) / time_scale;
      out.at(b, 0) = u;
      for (std::size_t k = 1; k <= fourier_order; ++k) {
        out.at(b, 2 * k - 1) = std::sin(std::numbers::pi * k * u);
        out.at(b, 2 * k) = std::cos(std::numbers::pi * k * u);
      }
    }
    return out;
  }

  friend bool operator==(const InputEncoding&, const InputEncoding&) = default;
};

struct OutputLayout {
  std::size_t num_keypoints = 0;
  std::size_t num_samples = 0;

  std::size_t width() const { return 3 * (num_keypoints + num_samples); }
  friend bool operator==(const OutputLayout&, const OutputLayout&) = default;
};

struct FusionConfig {
  std::vector<std::size_t> low_hidden{32, 32};
  std::vector<std::size_t> high_hidden{1024};
  double low_omega0 = 1.0;
  double high_omega0 = kDefaultOmega0;
  double lambda_blend = 1.0;
  std::size_t fourier_order = 0;
  double input_range = 1.0;  // encoded time spans [-input_range, input_range]
  friend bool operator==(const FusionConfig&, const FusionConfig&) = default;
};

struct FusionModel {
  SirenNetwork low;
  SirenNetwork high;
  double lambda_blend = 1.0;
  InputEncoding encoding;
  OutputLayout layout;
  bool high_frozen = false;

  void validate() const {
    low.validate();
    high.validate();
    if (low.input_dim() != high.input_dim() || low.output_dim() != high.output_dim()) {
      throw ValidationError("fusion: streams disagree on input/output dims");
    }
    if (low.input_dim() != encoding.dim()) {
      throw ValidationError("fusion: stream input dim " + std::to_string(low.input_dim()) +
                            " does not match encoding dim " + std::to_string(encoding.dim()));
    }
    if (low.output_dim() != layout.width()) {
      throw ValidationError("fusion: stream output dim " + std::to_string(low.output_dim()) +
                            " does not match layout width " + std::to_string(layout.width()));
    }
    if (!std::isfinite(lambda_blend)) throw ValidationError("fusion: lambda must be finite");
    if (!(encoding.time_scale > 0.0)) throw ValidationError("fusion: time scale must be > 0");
  }

  /// Parameters the optimizer updates: low stream, then high unless frozen.
  std::vector<Tensor*> trainable_parameters() {
    auto out = low.parameters();
    if (!high_frozen) {
      auto h = high.parameters();
      out.insert(out.end(), h.begin(), h.end());
    }
    return out;
  }

  std::vector<const Tensor*> all_parameters() const {
    auto out = low.parameters();
    auto h = high.parameters();
    out.insert(out.end(), h.begin(), h.end());
    return out;
  }
};

inline FusionModel make_fusion_model(const FusionConfig& cfg, const OutputLayout& layout,
                                     const InputEncoding& encoding, std::uint64_t seed) {
  if (layout.num_keypoints == 0) throw ValidationError("fusion: layout needs at least one keypoint");
  FusionModel m;
  m.low = init_siren(encoding.dim(), cfg.low_hidden, layout.width(), cfg.low_omega0,
                     derive_seed(seed, "low-stream"));
  m.high = init_siren(encoding.dim(), cfg.high_hidden, layout.width(), cfg.high_omega0,
                      derive_seed(seed, "high-stream"));
  m.lambda_blend = cfg.lambda_blend;
  m.encoding = encoding;
  m.layout = layout;
  m.validate();
  return m;
}

/// Zeroes the high stream and excludes it from training, so f = f_low.
inline void freeze_high_stream(FusionModel& model) {
  for (auto* p : model.high.parameters()) p->fill(0.0);
  model.high_frozen = true;
}

struct BoundFusion {
  BoundSiren low;
  BoundSiren high;
};

inline BoundFusion bind(ad::Tape& tape, const FusionModel& model, bool trainable = true) {
  return {bind(tape, model.low, trainable), bind(tape, model.high, trainable && !model.high_frozen)};
}

struct FusionNodes {
  ad::Var low;        // [B x W]
  ad::Var high;       // [B x W]
  ad::Var combined;   // low + lambda * high
  ad::Var keypoints;  // [B x 3M]
  ad::Var samples;    // [B x 3S]
};

inline FusionNodes predict(ad::Tape& tape, const FusionModel& model, const BoundFusion& params,
                           const Tensor& t) {
  ad::Var x = tape.constant(model.encoding.encode(t));
  FusionNodes n;
  n.low = forward(model.low, params.low, x);
  n.high = forward(model.high, params.high, x);
  n.combined = ad::add(n.low, ad::scale(n.high, model.lambda_blend));
  const std::size_t kp = 3 * model.layout.num_keypoints;
  n.keypoints = ad::columns(n.combined, 0, kp);
  n.samples = ad::columns(n.combined, kp, 3 * model.layout.num_samples);
  return n;
}

struct Prediction {
  Tensor keypoints;  // [B x 3M]
  Tensor samples;    // [B x 3S]
};

inline Prediction predict(const FusionModel& model, const Tensor& t) {
  ad::Tape tape;
  auto params = bind(tape, model, false);
  auto n = predict(tape, model, params, t);
  return {n.keypoints.value(), n.samples.value()};
}

struct StreamOutputs {
  Tensor low;   // f_low(t)
  Tensor high;  // f_high(t), before the lambda weight
};

inline StreamOutputs decompose(const FusionModel& model, const Tensor& t) {
  ad::Tape tape;
  auto params = bind(tape, model, false);
  auto n = predict(tape, model, params, t);
  return {n.low.value(), n.high.value()};
}

/// Column tensor [B x 1] of times.
inline Tensor time_column(const std::vector<double>& times) {
  return Tensor({times.size(), 1}, times);
}

}  // namespace sirenpose
