// sirenpose: scene generation, training, evaluation, gradient checks and
// ablations from the command line.
//
// Exit codes: 0 success, 1 invalid input, 2 numeric failure, 3 I/O error.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sirenpose/checkpoint.hpp"
#include "sirenpose/errors.hpp"
#include "sirenpose/eval.hpp"
#include "sirenpose/experiment.hpp"
#include "sirenpose/report.hpp"
#include "sirenpose/scene.hpp"
#include "sirenpose/scene_io.hpp"
#include "sirenpose/trainer.hpp"

namespace fs = std::filesystem;
using namespace sirenpose;

namespace {

enum ExitCode { kOk = 0, kInvalid = 1, kNumeric = 2, kIo = 3 };

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) { detail::write_atomic(path, text); }

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

struct SceneFiles {
  fs::path track, ground_truth, targets, spec;
};

SceneFiles scene_files(const fs::path& dir) {
  return {dir / "track.jsonl", dir / "ground_truth.jsonl", dir / "targets.jsonl", dir / "scene.json"};
}

GeneratedScene write_scene(const SceneSpec& spec, const fs::path& dir) {
  const GeneratedScene scene = generate_scene(spec);
  ensure_dir(dir);
  const auto files = scene_files(dir);
  save_track(scene.observed, files.track);
  save_track(scene.ground_truth, files.ground_truth);
  save_targets(scene.targets, files.targets);
  write_json(files.spec, to_json(spec));
  return scene;
}

std::string checkpoint_name(const std::string& format) {
  if (format == "bin") return "checkpoint.bin";
  if (format == "json") return "checkpoint.json";
  throw ValidationError("--checkpoint-format must be 'bin' or 'json', got '" + format + "'");
}

// ---------------------------------------------------------------- gen-scene

struct GenOptions {
  std::string config;
  std::string scene_template;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<double> noise;
};

int cmd_gen_scene(const GenOptions& o) {
  SceneSpec spec;
  if (!o.config.empty()) {
    spec = load_scene_spec(o.config);
  } else if (!o.scene_template.empty()) {
    spec.scene_template = parse_template(o.scene_template);
  } else {
    throw ValidationError("gen-scene needs --config or --template");
  }
  if (o.seed) spec.seed = *o.seed;
  if (o.noise) spec.noise_sigma = *o.noise;
  validate(spec);
  const auto scene = write_scene(spec, o.out);
  std::cout << "wrote " << scene.observed.num_frames() << " frames, " << scene.observed.num_keypoints()
            << " keypoints, " << scene.targets.num_samples() << " samples to " << o.out << "\n";
  return kOk;
}

// -------------------------------------------------------------------- train

struct TrainOptions {
  std::string config;        // manifest
  std::string train_config;  // train config alone
  std::string track;
  std::string targets;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> steps;
  bool disable_geo = false;
  bool freeze_high = false;
  std::vector<std::size_t> remove_keypoints;
  std::string checkpoint_format = "bin";
  bool quiet = false;
};

int cmd_train(const TrainOptions& o) {
  ExperimentConfig config;
  AblationFlags flags;
  KeypointTrack track;
  SignalTargets targets;
  fs::path out = o.out;

  if (!o.config.empty()) {
    const auto manifest = load_manifest(o.config);
    config = experiment_config_from_json(read_json_file(manifest.train_config));
    flags = manifest.ablation;
    if (out.empty()) out = manifest.output_dir;
    SceneSpec spec = load_scene_spec(manifest.scene_spec);
    const auto scene = write_scene(spec, out / "scene");
    track = scene.observed;
    targets = scene.targets;
  } else {
    if (o.track.empty() || o.targets.empty()) {
      throw ValidationError("train needs --config MANIFEST or both --track and --targets");
    }
    if (!o.train_config.empty()) config = experiment_config_from_json(read_json_file(o.train_config));
    track = load_track(o.track);
    targets = load_targets(o.targets);
  }
  if (out.empty()) throw ValidationError("train needs --out");
  if (o.seed) config.train.seed = *o.seed;
  if (o.steps) config.train.steps = *o.steps;
  flags.disable_geo = flags.disable_geo || o.disable_geo;
  flags.freeze_high_stream = flags.freeze_high_stream || o.freeze_high;
  if (!o.remove_keypoints.empty()) flags.remove_keypoints = o.remove_keypoints;
  config.train.validate();

  ensure_dir(out);
  const std::string ckpt = checkpoint_name(o.checkpoint_format);
  const fs::path ckpt_dir = out / "checkpoints";
  CheckpointHook hook = [&](const FusionModel& m, std::size_t step) {
    ensure_dir(ckpt_dir);
    const fs::path name = fs::path(ckpt).stem().string() + "_step" + std::to_string(step) +
                          fs::path(ckpt).extension().string();
    save_fusion(m, ckpt_dir / name);
    if (!o.quiet) std::cerr << "step " << step << " checkpoint written\n";
  };

  const FitResult fit_result = fit(track, targets, config, flags, hook);
  save_fusion(fit_result.model, out / ckpt);
  write_text(out / "report.csv", loss_history_csv(fit_result.report));

  ExperimentConfig effective = config;
  if (flags.disable_geo) effective.train.weights.lambda_geo = 0.0;
  json summary = train_summary_json(fit_result.report);
  summary["config"] = to_json(effective);
  summary["ablation"] = {{"disable_geo", flags.disable_geo},
                         {"freeze_high_stream", flags.freeze_high_stream},
                         {"remove_keypoints", flags.remove_keypoints}};
  summary["train_frames"] = fit_result.train_frames;
  summary["heldout_frames"] = fit_result.heldout_frames;
  write_json(out / "report.json", summary);

  bool gradcheck_ok = true;
  for (const auto& g : fit_result.report.gradchecks) gradcheck_ok = gradcheck_ok && g.passed;
  if (!o.quiet) {
    const auto& last = fit_result.report.history.back();
    std::cout << "trained " << fit_result.report.history.size() << " steps, final l_total "
              << format_number(last.l_total) << " (" << format_number(fit_result.report.wall_seconds)
              << " s)\n";
  }
  if (!gradcheck_ok) {
    std::cerr << "error: a periodic gradient check exceeded tolerance (see report.json)\n";
    return kNumeric;
  }
  return kOk;
}

// --------------------------------------------------------------------- eval

struct EvalCliOptions {
  std::string checkpoint;
  std::string pred;
  std::string track;
  std::string out;
  std::size_t heldout_stride = 4;
  std::size_t rpe_delta = 1;
};

int cmd_eval(const EvalCliOptions& o) {
  if (o.track.empty()) throw ValidationError("eval needs --track (ground truth)");
  if (o.checkpoint.empty() == o.pred.empty()) throw ValidationError("eval needs exactly one of --checkpoint or --pred");
  const KeypointTrack full_gt = load_track(o.track);

  std::vector<std::size_t> idx;
  if (o.heldout_stride >= 2) idx = split_frames(full_gt.num_frames(), o.heldout_stride).second;
  const KeypointTrack gt = with_all_visible(idx.empty() ? full_gt : subset(full_gt, idx));

  KeypointTrack pred;
  if (!o.checkpoint.empty()) {
    const FusionModel model = load_fusion(o.checkpoint);
    if (model.layout.num_keypoints != gt.num_keypoints()) {
      throw ValidationError("checkpoint predicts " + std::to_string(model.layout.num_keypoints) +
                            " keypoints but the track has " + std::to_string(gt.num_keypoints()));
    }
    pred = predict_track(model, gt);
  } else {
    const KeypointTrack full_pred = load_track(o.pred);
    pred = with_all_visible(idx.empty() ? full_pred : subset(full_pred, idx));
  }

  EvalOptions eo;
  eo.rpe_delta = o.rpe_delta;
  const MetricReport m = evaluate_tracks(pred, gt, eo);

  const fs::path out = o.out;
  ensure_dir(out);
  write_json(out / "metrics.json", metrics_json(m));
  write_text(out / "metrics.csv", metrics_csv(m));
  write_text(out / "frames.csv", frames_csv(m));
  const auto& reference = gt.frames.front().positions;
  write_text(out / "trajectory_gt.csv", trajectory_to_csv(trajectory_from_track(gt, reference)));
  write_text(out / "trajectory_pred.csv", trajectory_to_csv(trajectory_from_track(pred, reference)));
  save_track(pred, out / "prediction.jsonl");

  std::cout << "frames " << m.times.size() << "  epe " << format_number(m.keypoints.epe) << "  mse "
            << format_number(m.keypoints.mse) << "  geometric_accuracy "
            << format_number(m.keypoints.geometric_accuracy) << "\n";
  return kOk;
}

// ---------------------------------------------------------------- gradcheck

struct GradcheckOptions {
  std::uint64_t seed = 0;
  std::size_t seeds = 1;
  std::size_t width = 16;
  std::size_t depth = 2;
  std::size_t keypoints = 4;
  std::size_t batch = 4;
  double tolerance = 1e-5;
  double lambda_geo = 0.1;
  std::string config;
};

// Random chain skeleton with random frames, samples and visibility.
struct GradcheckProblem {
  FusionModel model;
  SkeletonGraph skeleton;
  Batch batch;
};

GradcheckProblem make_gradcheck_problem(const GradcheckOptions& o, std::uint64_t seed) {
  if (o.keypoints < 2) throw ValidationError("gradcheck needs at least 2 keypoints");
  std::mt19937_64 rng(derive_seed(seed, "gradcheck-data"));
  std::uniform_real_distribution<double> coord(-0.5, 0.5);
  GradcheckProblem p;
  p.skeleton.num_keypoints = o.keypoints;
  for (std::size_t i = 0; i + 1 < o.keypoints; ++i) {
    p.skeleton.edges.push_back({i, i + 1});
    p.skeleton.rest_lengths.push_back(0.3);
  }
  const std::size_t samples = 2;
  FusionConfig fc;
  if (o.depth == 0) throw ValidationError("gradcheck needs --depth >= 1");
  fc.low_hidden.assign(o.depth, o.width);
  fc.high_hidden.assign(o.depth, o.width);
  p.model = make_fusion_model(fc, {o.keypoints, samples}, InputEncoding::spanning(0.0, 1.0), seed);
  std::vector<KeypointFrame> frames;
  std::vector<double> times;
  for (std::size_t b = 0; b < o.batch; ++b) {
    KeypointFrame f;
    f.time = coord(rng) + 0.5;
    for (std::size_t i = 0; i < o.keypoints; ++i) f.positions.push_back({coord(rng), coord(rng), coord(rng)});
    f.visible.assign(o.keypoints, true);
    if (b == 0) f.visible[0] = false;
    times.push_back(f.time);
    frames.push_back(std::move(f));
  }
  Tensor sample_targets({o.batch, 3 * samples});
  for (double& v : sample_targets.values()) v = coord(rng);
  p.batch = {time_column(times), keypoint_matrix(frames), visibility_matrix(frames), sample_targets};
  return p;
}

int cmd_gradcheck(const GradcheckOptions& o) {
  LossWeights weights;
  if (!o.config.empty()) weights = experiment_config_from_json(read_json_file(o.config)).train.weights;
  weights.lambda_geo = o.lambda_geo;
  weights.validate();
  double worst = 0.0;
  std::size_t failures = 0;
  for (std::size_t s = 0; s < o.seeds; ++s) {
    const auto p = make_gradcheck_problem(o, o.seed + s);
    const auto r = run_gradcheck(p.model, p.skeleton, p.batch, weights);
    const bool pass = r.max_rel_error < o.tolerance;
    failures += pass ? 0 : 1;
    worst = std::max(worst, r.max_rel_error);
    std::cout << "seed " << (o.seed + s) << " params " << r.num_params << " max_rel_error "
              << format_number(r.max_rel_error) << (pass ? " PASS" : " FAIL") << "\n";
  }
  std::cout << (failures ? "FAIL" : "PASS") << ": worst " << format_number(worst) << " over " << o.seeds
            << " seed(s), tolerance " << format_number(o.tolerance) << "\n";
  return failures ? kNumeric : kOk;
}

// ------------------------------------------------------------------- ablate

struct AblateOptions {
  std::string config;  // manifest
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> steps;
  std::size_t seeds = 5;
};

int cmd_ablate(const AblateOptions& o) {
  if (o.config.empty()) throw ValidationError("ablate needs --config MANIFEST");
  const auto manifest = load_manifest(o.config);
  ExperimentConfig config = experiment_config_from_json(read_json_file(manifest.train_config));
  if (o.seed) config.train.seed = *o.seed;
  if (o.steps) config.train.steps = *o.steps;
  if (o.seeds == 0) throw ValidationError("--seeds must be >= 1");
  const fs::path out = o.out.empty() ? manifest.output_dir : fs::path(o.out);
  const auto scene = write_scene(load_scene_spec(manifest.scene_spec), out / "scene");
  const auto rows = run_ablation(scene, config, manifest.ablation, o.seeds);
  write_text(out / "ablation.csv", ablation_csv(rows));
  write_json(out / "ablation.json", ablation_json(rows));
  std::cout << ablation_csv(rows);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SIREN keypoint-prior training and evaluation"};
  app.require_subcommand(1);

  GenOptions gen;
  auto* gen_cmd = app.add_subcommand("gen-scene", "Generate a synthetic scene (track, ground truth, targets)");
  gen_cmd->add_option("--config", gen.config, "Scene spec JSON");
  gen_cmd->add_option("--template", gen.scene_template, "pendulum | biped | multi-object (when no --config)");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--seed", gen.seed, "Override the spec seed");
  gen_cmd->add_option("--noise", gen.noise, "Override annotation noise sigma");

  TrainOptions tr;
  auto* train_cmd = app.add_subcommand("train", "Train a fusion model");
  train_cmd->add_option("--config", tr.config, "Experiment manifest JSON");
  train_cmd->add_option("--train-config", tr.train_config, "Train config JSON (with --track/--targets)");
  train_cmd->add_option("--track", tr.track, "Observed keypoint track (JSONL)");
  train_cmd->add_option("--targets", tr.targets, "Dense signal targets (JSONL)");
  train_cmd->add_option("--out", tr.out, "Output directory");
  train_cmd->add_option("--seed", tr.seed, "Training seed");
  train_cmd->add_option("--steps", tr.steps, "Override the step count");
  train_cmd->add_flag("--disable-geo", tr.disable_geo, "Set lambda_geo = 0");
  train_cmd->add_flag("--freeze-high-stream", tr.freeze_high, "Zero and freeze the high-frequency stream");
  train_cmd->add_option("--remove-keypoints", tr.remove_keypoints, "Keypoint indices hidden from supervision")
      ->delimiter(',');
  train_cmd->add_option("--checkpoint-format", tr.checkpoint_format, "bin | json");
  train_cmd->add_flag("--quiet", tr.quiet, "Suppress progress output");

  EvalCliOptions ev;
  auto* eval_cmd = app.add_subcommand("eval", "Score a checkpoint or a predicted track against ground truth");
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "Fusion checkpoint (.bin or .json)");
  eval_cmd->add_option("--pred", ev.pred, "Predicted track (JSONL) instead of a checkpoint");
  eval_cmd->add_option("--track", ev.track, "Ground-truth track (JSONL)")->required();
  eval_cmd->add_option("--out", ev.out, "Output directory")->required();
  eval_cmd->add_option("--heldout-stride", ev.heldout_stride, "Score held-out frames of this split; 0 scores all");
  eval_cmd->add_option("--rpe-delta", ev.rpe_delta, "Frame offset for RPE");

  GradcheckOptions gc;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Compare backward() with central differences");
  gc_cmd->add_option("--seed", gc.seed, "First seed");
  gc_cmd->add_option("--seeds", gc.seeds, "Number of consecutive seeds");
  gc_cmd->add_option("--width", gc.width, "Hidden width of both streams");
  gc_cmd->add_option("--depth", gc.depth, "Hidden layers per stream");
  gc_cmd->add_option("--keypoints", gc.keypoints, "Keypoints in the chain skeleton");
  gc_cmd->add_option("--batch", gc.batch, "Frames per check");
  gc_cmd->add_option("--tolerance", gc.tolerance, "Maximum relative error");
  gc_cmd->add_option("--lambda-geo", gc.lambda_geo, "lambda_geo for the checked loss");
  gc_cmd->add_option("--config", gc.config, "Train config JSON supplying loss weights");

  AblateOptions ab;
  auto* ab_cmd = app.add_subcommand("ablate", "Run the four-row frequency/geometry ablation");
  ab_cmd->add_option("--config", ab.config, "Experiment manifest JSON")->required();
  ab_cmd->add_option("--out", ab.out, "Output directory (default: manifest output_dir)");
  ab_cmd->add_option("--seed", ab.seed, "First training seed");
  ab_cmd->add_option("--seeds", ab.seeds, "Seeds per row");
  ab_cmd->add_option("--steps", ab.steps, "Override the step count");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInvalid;
  }

  try {
    if (*gen_cmd) return cmd_gen_scene(gen);
    if (*train_cmd) return cmd_train(tr);
    if (*eval_cmd) return cmd_eval(ev);
    if (*gc_cmd) return cmd_gradcheck(gc);
    if (*ab_cmd) return cmd_ablate(ab);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalid;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalid;
  }
  return kInvalid;
}
