#pragma once

// End-to-end experiment plumbing shared by the CLI and the acceptance suite:
// config files, the train/held-out protocol, and the ablation table.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "sirenpose/errors.hpp"
#include "sirenpose/eval.hpp"
#include "sirenpose/fusion.hpp"
#include "sirenpose/losses.hpp"
#include "sirenpose/random.hpp"
#include "sirenpose/scene.hpp"
#include "sirenpose/scene_io.hpp"
#include "sirenpose/trainer.hpp"

namespace sirenpose {

struct ExperimentConfig {
  TrainConfig train;
  FusionConfig model;
  std::size_t holdout_stride = 4;  // every 4th frame is held out; 0 or 1 disables
};

struct AblationFlags {
  bool disable_geo = false;
  bool freeze_high_stream = false;
  std::vector<std::size_t> remove_keypoints;
};

/// Reference scenes (mirrored by the files under configs/scenes).
namespace scenes {

/// Pendulum held still at its rest pose.
inline SceneSpec static_pendulum() {
  SceneSpec s;
  s.amplitudes = {0.0, 0.0};
  s.seed = 1;
  return s;
}

/// Small-angle 4 Hz pendulum; the motion is dominated by the 4 Hz fundamental.
inline SceneSpec fast_pendulum() {
  SceneSpec s;
  s.frequencies = {4.0, 4.0};
  s.amplitudes = {0.2, 0.14};
  s.seed = 1;
  return s;
}

/// 2 Hz pendulum with annotation noise and three short occlusion gaps.
inline SceneSpec occluded_pendulum() {
  SceneSpec s;
  s.frequencies = {2.0, 2.0};
  s.amplitudes = {0.4, 0.28};
  s.noise_sigma = 0.01;
  s.occlusions = {{2, 0.5, 0.6}, {1, 1.2, 1.3}, {2, 1.6, 1.7}};
  s.seed = 7;
  return s;
}

/// Default biped with annotation noise.
inline SceneSpec noisy_biped() {
  SceneSpec s;
  s.scene_template = SceneTemplate::kBiped;
  s.noise_sigma = 0.01;
  s.seed = 11;
  return s;
}

}  // namespace scenes

struct ExperimentManifest {
  std::filesystem::path scene_spec;
  std::filesystem::path train_config;
  std::filesystem::path output_dir;
  AblationFlags ablation;
};

inline json to_json(const ExperimentConfig& c) {
  const auto& t = c.train;
  json j;
  j["learning_rate"] = t.learning_rate;
  j["batch_size"] = t.batch_size;
  j["steps"] = t.steps;
  j["betas"] = {t.beta1, t.beta2};
  j["epsilon"] = t.epsilon;
  j["weights"] = {{"lambda_geo", t.weights.lambda_geo},
                  {"lambda_sp", t.weights.lambda_sp},
                  {"omega0_loss", t.weights.omega0_loss},
                  {"geo_scale", t.weights.geo_scale}};
  j["seed"] = t.seed;
  j["checkpoint_every"] = t.checkpoint_every;
  j["gradcheck_every"] = t.gradcheck_every;
  j["max_grad_norm"] = t.max_grad_norm;
  j["holdout_stride"] = c.holdout_stride;
  j["model"] = {{"low_hidden", c.model.low_hidden},     {"high_hidden", c.model.high_hidden},
                {"low_omega0", c.model.low_omega0},     {"high_omega0", c.model.high_omega0},
                {"lambda_blend", c.model.lambda_blend}, {"fourier_order", c.model.fourier_order},
                {"input_range", c.model.input_range}};
  return j;
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline ExperimentConfig experiment_config_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("train config must be a JSON object");
  static const std::set<std::string> known{
      "learning_rate", "batch_size",    "steps",         "betas",          "epsilon",
      "weights",       "seed",          "checkpoint_every", "gradcheck_every", "max_grad_norm",
      "holdout_stride", "model"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw ValidationError("train config: unknown field '" + key + "'");
  }
  ExperimentConfig c;
  auto& t = c.train;
  try {
    t.learning_rate = j.value("learning_rate", t.learning_rate);
    t.batch_size = j.value("batch_size", t.batch_size);
    t.steps = j.value("steps", t.steps);
    if (j.contains("betas")) {
      const auto b = j.at("betas").get<std::vector<double>>();
      if (b.size() != 2) throw ValidationError("train config: 'betas' needs two values");
      t.beta1 = b[0];
      t.beta2 = b[1];
    }
    t.epsilon = j.value("epsilon", t.epsilon);
    if (j.contains("weights")) {
      const auto& w = j.at("weights");
      t.weights.lambda_geo = w.value("lambda_geo", t.weights.lambda_geo);
      t.weights.lambda_sp = w.value("lambda_sp", t.weights.lambda_sp);
      t.weights.omega0_loss = w.value("omega0_loss", t.weights.omega0_loss);
      t.weights.geo_scale = w.value("geo_scale", t.weights.geo_scale);
    }
    t.seed = j.value("seed", t.seed);
    t.checkpoint_every = j.value("checkpoint_every", t.checkpoint_every);
    t.gradcheck_every = j.value("gradcheck_every", t.gradcheck_every);
    t.max_grad_norm = j.value("max_grad_norm", t.max_grad_norm);
    c.holdout_stride = j.value("holdout_stride", c.holdout_stride);
    if (j.contains("model")) {
      const auto& m = j.at("model");
      c.model.low_hidden = m.value("low_hidden", c.model.low_hidden);
      c.model.high_hidden = m.value("high_hidden", c.model.high_hidden);
      c.model.low_omega0 = m.value("low_omega0", c.model.low_omega0);
      c.model.high_omega0 = m.value("high_omega0", c.model.high_omega0);
      c.model.lambda_blend = m.value("lambda_blend", c.model.lambda_blend);
      c.model.fourier_order = m.value("fourier_order", c.model.fourier_order);
      c.model.input_range = m.value("input_range", c.model.input_range);
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("train config: ") + e.what());
  }
  if (c.model.fourier_order > 2) throw ValidationError("train config: fourier_order must be <= 2");
  t.validate();
  return c;
}

inline ExperimentManifest manifest_from_json(const json& j, const std::filesystem::path& base) {
  if (!j.is_object()) throw ValidationError("manifest must be a JSON object");
  static const std::set<std::string> known{"scene_spec", "train_config", "output_dir", "ablation"};
  static const std::set<std::string> known_ablation{"disable_geo", "freeze_high_stream",
                                                    "remove_keypoints"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ValidationError("manifest: unknown field '" + key + "'");
    if (key == "ablation" && value.is_object()) {
      for (const auto& [akey, _] : value.items()) {
        if (!known_ablation.count(akey)) throw ValidationError("manifest: unknown ablation field '" + akey + "'");
      }
    }
  }
  ExperimentManifest m;
  auto resolve = [&](const char* key) {
    if (!j.contains(key)) throw ValidationError(std::string("manifest: missing field '") + key + "'");
    std::filesystem::path p = j.at(key).get<std::string>();
    return p.is_relative() ? base / p : p;
  };
  try {
    m.scene_spec = resolve("scene_spec");
    m.train_config = resolve("train_config");
    m.output_dir = j.contains("output_dir") ? resolve("output_dir") : base / "out";
    if (j.contains("ablation")) {
      const auto& a = j.at("ablation");
      m.ablation.disable_geo = a.value("disable_geo", false);
      m.ablation.freeze_high_stream = a.value("freeze_high_stream", false);
      m.ablation.remove_keypoints = a.value("remove_keypoints", std::vector<std::size_t>{});
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("manifest: ") + e.what());
  }
  return m;
}

inline ExperimentManifest load_manifest(const std::filesystem::path& path) {
  return manifest_from_json(read_json_file(path), path.parent_path());
}

/// Builds a keypoint track from predicted [B x 3M] rows (all visible).
inline KeypointTrack track_from_prediction(const Tensor& keypoints, const std::vector<double>& times,
                                           const SkeletonGraph& skeleton) {
  KeypointTrack out;
  out.skeleton = skeleton;
  const std::size_t m = skeleton.num_keypoints;
  for (std::size_t b = 0; b < times.size(); ++b) {
    KeypointFrame fr;
    fr.time = times[b];
    for (std::size_t i = 0; i < m; ++i) {
      fr.positions.push_back({keypoints.at(b, 3 * i), keypoints.at(b, 3 * i + 1), keypoints.at(b, 3 * i + 2)});
    }
    fr.visible.assign(m, true);
    out.frames.push_back(std::move(fr));
  }
  return out;
}

inline KeypointTrack predict_track(const FusionModel& model, const KeypointTrack& like) {
  std::vector<double> times;
  for (const auto& f : like.frames) times.push_back(f.time);
  return track_from_prediction(predict(model, time_column(times)).keypoints, times, like.skeleton);
}

inline KeypointTrack with_all_visible(KeypointTrack track) {
  for (auto& f : track.frames) f.visible.assign(track.num_keypoints(), true);
  return track;
}

inline FusionModel make_model_for(const KeypointTrack& observed, const SignalTargets& targets,
                                  const ExperimentConfig& config, const AblationFlags& flags) {
  if (observed.frames.empty()) throw ValidationError("experiment: track has no frames");
  const auto& frames = observed.frames;
  OutputLayout layout{observed.num_keypoints(), targets.num_samples()};
  auto encoding = InputEncoding::spanning(frames.front().time, frames.back().time,
                                          config.model.fourier_order, config.model.input_range);
  auto model = make_fusion_model(config.model, layout, encoding, derive_seed(config.train.seed, "model"));
  if (flags.freeze_high_stream) freeze_high_stream(model);
  return model;
}

struct FitResult {
  FusionModel model;
  TrainReport report;
  std::vector<std::size_t> train_frames;
  std::vector<std::size_t> heldout_frames;
};

/// Trains on the non-held-out frames of `observed` with the ablation applied.
inline FitResult fit(const KeypointTrack& observed, const SignalTargets& targets,
                     const ExperimentConfig& config, const AblationFlags& flags,
                     const CheckpointHook& hook = {}) {
  if (targets.num_frames() != observed.num_frames()) {
    throw ValidationError("experiment: track has " + std::to_string(observed.num_frames()) +
                          " frames but targets have " + std::to_string(targets.num_frames()));
  }
  FitResult r;
  std::tie(r.train_frames, r.heldout_frames) = split_frames(observed.num_frames(), config.holdout_stride);
  KeypointTrack train_track = subset(observed, r.train_frames);
  if (!flags.remove_keypoints.empty()) train_track = corrupt_keypoints(train_track, flags.remove_keypoints);
  const SignalTargets train_targets = subset(targets, r.train_frames);

  TrainConfig tc = config.train;
  if (flags.disable_geo) tc.weights.lambda_geo = 0.0;

  r.model = make_model_for(observed, targets, config, flags);
  r.report = train(r.model, train_track, train_targets, tc, hook);
  return r;
}

struct RunResult {
  FusionModel model;
  TrainReport report;
  KeypointTrack heldout_gt;    // clean positions, every keypoint scored
  KeypointTrack heldout_pred;
  MetricReport heldout_metrics;
};

/// Scores `model` on frames `idx` of the ground truth (all frames when empty),
/// with every keypoint counted as visible.
inline MetricReport score_frames(const FusionModel& model, const KeypointTrack& ground_truth,
                                 const std::vector<std::size_t>& idx, KeypointTrack* gt_out = nullptr,
                                 KeypointTrack* pred_out = nullptr) {
  KeypointTrack gt = with_all_visible(idx.empty() ? ground_truth : subset(ground_truth, idx));
  KeypointTrack pred = predict_track(model, gt);
  MetricReport m = evaluate_tracks(pred, gt);
  if (gt_out) *gt_out = std::move(gt);
  if (pred_out) *pred_out = std::move(pred);
  return m;
}

/// fit() on `scene.observed`, then scores the held-out frames against clean
/// ground truth.
inline RunResult run_experiment(const GeneratedScene& scene, const ExperimentConfig& config,
                                const AblationFlags& flags, const CheckpointHook& hook = {}) {
  FitResult f = fit(scene.observed, scene.targets, config, flags, hook);
  RunResult r;
  const auto& eval_idx = f.heldout_frames.empty() ? f.train_frames : f.heldout_frames;
  r.heldout_metrics = score_frames(f.model, scene.ground_truth, eval_idx, &r.heldout_gt, &r.heldout_pred);
  r.model = std::move(f.model);
  r.report = std::move(f.report);
  return r;
}

struct AblationRow {
  std::string name;
  AblationFlags flags;
  std::vector<double> mse;  // one per seed
  std::vector<double> epe;
  std::vector<double> geometric_accuracy;
  double median_mse = 0.0;
  double median_epe = 0.0;
  double median_geometric_accuracy = 0.0;
};

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// The four module-level configurations, in fixed order.
inline std::vector<AblationRow> ablation_rows(const AblationFlags& base) {
  std::vector<AblationRow> rows(4);
  rows[0].name = "full";
  rows[1].name = "no-geo";
  rows[2].name = "no-highfreq";
  rows[3].name = "neither";
  for (auto& r : rows) r.flags = base;
  rows[1].flags.disable_geo = true;
  rows[2].flags.freeze_high_stream = true;
  rows[3].flags.disable_geo = true;
  rows[3].flags.freeze_high_stream = true;
  return rows;
}

/// Runs each row over `seeds` consecutive training seeds starting at
/// config.train.seed; the scene itself is fixed.
inline std::vector<AblationRow> run_ablation(const GeneratedScene& scene, const ExperimentConfig& config,
                                             const AblationFlags& base, std::size_t seeds) {
  auto rows = ablation_rows(base);
  for (auto& row : rows) {
    for (std::size_t s = 0; s < seeds; ++s) {
      ExperimentConfig c = config;
      c.train.seed = config.train.seed + s;
      const auto r = run_experiment(scene, c, row.flags);
      row.mse.push_back(r.heldout_metrics.keypoints.mse);
      row.epe.push_back(r.heldout_metrics.keypoints.epe);
      row.geometric_accuracy.push_back(r.heldout_metrics.keypoints.geometric_accuracy);
    }
    row.median_mse = median(row.mse);
    row.median_epe = median(row.epe);
    row.median_geometric_accuracy = median(row.geometric_accuracy);
  }
  return rows;
}

}  // namespace sirenpose
