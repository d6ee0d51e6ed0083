#pragma once

// Adam optimization of a FusionModel under L_total.

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "sirenpose/autodiff.hpp"
#include "sirenpose/errors.hpp"
#include "sirenpose/fusion.hpp"
#include "sirenpose/gradcheck.hpp"
#include "sirenpose/losses.hpp"
#include "sirenpose/random.hpp"
#include "sirenpose/scene.hpp"

namespace sirenpose {

struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t batch_size = 64;
  std::size_t steps = 2000;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  LossWeights weights;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 500;  // 0 disables
  std::size_t gradcheck_every = 0;     // 0 disables
  double gradcheck_tolerance = 1e-5;
  double max_grad_norm = 0.0;          // 0 disables clipping

  void validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
      throw ValidationError("train: learning_rate must be > 0");
    }
    if (batch_size == 0) throw ValidationError("train: batch_size must be >= 1");
    if (steps == 0) throw ValidationError("train: steps must be >= 1");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
      throw ValidationError("train: adam betas must lie in [0, 1)");
    }
    if (!(epsilon > 0.0)) throw ValidationError("train: epsilon must be > 0");
    if (!(max_grad_norm >= 0.0)) throw ValidationError("train: max_grad_norm must be >= 0");
    weights.validate();
  }
};

struct AdamState {
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::size_t step = 0;
};

/// One bias-corrected Adam update, in place.
inline void adam_step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads,
                      AdamState& state, double lr, double beta1, double beta2, double eps) {
  if (params.size() != grads.size()) {
    throw ValidationError("adam: " + std::to_string(params.size()) + " parameters but " +
                          std::to_string(grads.size()) + " gradients");
  }
  if (state.first_moment.empty()) {
    for (const auto* p : params) {
      state.first_moment.emplace_back(p->shape(), 0.0);
      state.second_moment.emplace_back(p->shape(), 0.0);
    }
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k]->shape() != grads[k].shape() ||
        state.first_moment[k].shape() != grads[k].shape()) {
      throw ValidationError("adam: parameter " + std::to_string(k) + " shape " +
                            shape_string(params[k]->shape()) + " vs gradient " +
                            shape_string(grads[k].shape()));
    }
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    Tensor& m = state.first_moment[k];
    Tensor& v = state.second_moment[k];
    const Tensor& g = grads[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      p[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

/// Frames gathered for one optimization step.
struct Batch {
  Tensor times;      // [B x 1]
  Tensor keypoints;  // [B x 3M]
  Tensor mask;       // [B x M]
  Tensor samples;    // [B x 3S]
};

inline Batch make_batch(const KeypointTrack& track, const SignalTargets& targets,
                        const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw ValidationError("batch: no frames selected");
  std::vector<KeypointFrame> frames;
  std::vector<double> times;
  const std::size_t s = targets.num_samples();
  Tensor samples({indices.size(), 3 * s});
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const std::size_t k = indices[b];
    frames.push_back(track.frames.at(k));
    times.push_back(track.frames[k].time);
    const auto& pts = targets.samples.at(k);
    for (std::size_t j = 0; j < s; ++j) {
      for (std::size_t c = 0; c < 3; ++c) samples.at(b, 3 * j + c) = pts[j][c];
    }
  }
  return {time_column(times), keypoint_matrix(frames), visibility_matrix(frames), std::move(samples)};
}

struct BatchLoss {
  ad::Var total;
  ad::Var recon;
  ad::Var sirenpose;
  LossBreakdown breakdown;
};

inline BatchLoss evaluate_batch(ad::Tape& tape, const FusionModel& model, const BoundFusion& params,
                                const SkeletonGraph& skeleton, const Batch& batch,
                                const LossWeights& weights) {
  auto out = predict(tape, model, params, batch.times);
  BatchLoss loss;
  auto sp = loss_sirenpose(out.keypoints, batch.keypoints, skeleton, weights, batch.mask,
                           &loss.breakdown);
  loss.sirenpose = sp.total;
  loss.recon = loss_recon(out.samples, batch.samples);
  loss.total = loss_total(loss.recon, loss.sirenpose, weights, &loss.breakdown);
  return loss;
}

namespace detail {

inline void check_training_data(const FusionModel& model, const KeypointTrack& track,
                                const SignalTargets& targets) {
  if (track.frames.empty()) throw ValidationError("train: track has no frames");
  if (targets.num_frames() != track.num_frames()) {
    throw ValidationError("train: " + std::to_string(track.num_frames()) + " frames but " +
                          std::to_string(targets.num_frames()) + " target frames");
  }
  if (track.num_keypoints() != model.layout.num_keypoints ||
      targets.num_samples() != model.layout.num_samples) {
    throw ValidationError("train: model layout does not match the data");
  }
}

}  // namespace detail

/// FNV-1a over the raw bytes of every parameter.
inline std::uint64_t parameter_checksum(const FusionModel& model) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto* p : model.all_parameters()) {
    for (double v : p->values()) {
      unsigned char bytes[sizeof(double)];
      std::memcpy(bytes, &v, sizeof(double));
      for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
      }
    }
  }
  return h;
}

/// Reverse-mode gradients of L_total w.r.t. the trainable parameters.
inline std::vector<Tensor> total_gradient(const FusionModel& model, const SkeletonGraph& skeleton,
                                          const Batch& batch, const LossWeights& weights,
                                          LossBreakdown* breakdown = nullptr) {
  ad::Tape tape;
  auto params = bind(tape, model, true);
  auto loss = evaluate_batch(tape, model, params, skeleton, batch, weights);
  tape.backward(loss.total);
  if (breakdown) *breakdown = loss.breakdown;
  std::vector<Tensor> grads;
  auto collect = [&](const BoundSiren& b) {
    for (std::size_t l = 0; l < b.weights.size(); ++l) {
      grads.push_back(b.weights[l].grad());
      grads.push_back(b.biases[l].grad());
    }
  };
  collect(params.low);
  if (!model.high_frozen) collect(params.high);
  return grads;
}

/// Compares backward() of L_total with central differences over all
/// trainable parameters.
inline GradCheckResult run_gradcheck(const FusionModel& model, const SkeletonGraph& skeleton,
                                     const Batch& batch, const LossWeights& weights,
                                     double h = 1e-6, int order = 4) {
  std::vector<Tensor> values;
  for (const auto* p : model.low.parameters()) values.push_back(*p);
  if (!model.high_frozen) {
    for (const auto* p : model.high.parameters()) values.push_back(*p);
  }
  const std::size_t low_count = model.low.parameters().size();

  ScalarBuilder builder = [&](ad::Tape& tape, std::span<const ad::Var> leaves) {
    // Structure (omega0, layout, encoding, lambda) comes from `model`;
    // parameter values come from the leaves.
    BoundFusion bound;
    for (std::size_t k = 0; k < low_count; k += 2) {
      bound.low.weights.push_back(leaves[k]);
      bound.low.biases.push_back(leaves[k + 1]);
    }
    if (model.high_frozen) {
      bound.high = bind(tape, model.high, false);
    } else {
      for (std::size_t k = low_count; k < leaves.size(); k += 2) {
        bound.high.weights.push_back(leaves[k]);
        bound.high.biases.push_back(leaves[k + 1]);
      }
    }
    return evaluate_batch(tape, model, bound, skeleton, batch, weights).total;
  };
  return finite_difference_check(builder, values, h, order);
}

struct GradcheckRecord {
  std::size_t step = 0;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  bool passed = true;
};

struct TrainReport {
  std::vector<LossBreakdown> history;
  double wall_seconds = 0.0;
  std::uint64_t parameter_checksum = 0;
  std::vector<GradcheckRecord> gradchecks;
};

using CheckpointHook = std::function<void(const FusionModel&, std::size_t step)>;

/// Runs `config.steps` Adam updates. Each step draws batch_size frames with
/// replacement (all frames, in order, when the track is shorter than the
/// batch), evaluates L_total and applies one update.
inline TrainReport train(FusionModel& model, const KeypointTrack& track,
                         const SignalTargets& targets, const TrainConfig& config,
                         const CheckpointHook& on_checkpoint = {}) {
  config.validate();
  model.validate();
  detail::check_training_data(model, track, targets);

  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(derive_seed(config.seed, "batch-sampler"));
  std::uniform_int_distribution<std::size_t> pick(0, track.num_frames() - 1);
  const bool full_batch = track.num_frames() < config.batch_size;
  std::vector<std::size_t> indices(full_batch ? track.num_frames() : config.batch_size);

  TrainReport report;
  report.history.reserve(config.steps);
  AdamState adam;
  for (std::size_t step = 1; step <= config.steps; ++step) {
    for (std::size_t b = 0; b < indices.size(); ++b) indices[b] = full_batch ? b : pick(rng);
    const Batch batch = make_batch(track, targets, indices);

    LossBreakdown breakdown;
    std::vector<Tensor> grads =
        total_gradient(model, track.skeleton, batch, config.weights, &breakdown);
    if (!std::isfinite(breakdown.l_total)) {
      std::ostringstream os;
      os << "train: non-finite loss at step " << step << " (l_pos=" << breakdown.l_pos
         << ", l_geo=" << breakdown.l_geo << ", l_recon=" << breakdown.l_recon << ")";
      throw NumericError(os.str());
    }
    report.history.push_back(breakdown);

    if (config.gradcheck_every && step % config.gradcheck_every == 0) {
      auto gc = run_gradcheck(model, track.skeleton, batch, config.weights);
      report.gradchecks.push_back(
          {step, gc.max_rel_error, gc.worst_index, gc.max_rel_error < config.gradcheck_tolerance});
    }

    if (config.max_grad_norm > 0.0) {
      double sq = 0.0;
      for (const auto& g : grads) {
        for (double v : g.values()) sq += v * v;
      }
      const double n = std::sqrt(sq);
      if (n > config.max_grad_norm) {
        const double s = config.max_grad_norm / n;
        for (auto& g : grads) {
          for (double& v : g.values()) v *= s;
        }
      }
    }

    adam_step(model.trainable_parameters(), grads, adam, config.learning_rate, config.beta1,
              config.beta2, config.epsilon);

    if (on_checkpoint && config.checkpoint_every && step % config.checkpoint_every == 0) {
      on_checkpoint(model, step);
    }
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  report.parameter_checksum = parameter_checksum(model);
  return report;
}

}  // namespace sirenpose
