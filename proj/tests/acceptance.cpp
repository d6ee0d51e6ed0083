// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "sirenpose/experiment.hpp"

namespace fs = std::filesystem;
namespace ad = sirenpose::ad;
using namespace sirenpose;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const Outcome& o) {
  std::printf("%s [%d] %s: %s\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str());
  std::fflush(stdout);
  if (!o.pass) ++failures;
}

void run_criterion(int id, const std::string& name, const std::function<Outcome()>& fn) {
  try {
    report(id, name, fn());
  } catch (const std::exception& e) {
    report(id, name, {false, std::string("exception: ") + e.what()});
  }
}

// ---------------------------------------------------------------- [1]

struct GradProblem {
  FusionModel model;
  SkeletonGraph skeleton;
  Batch batch;
};

// Two hidden layers of width 16 per stream, chain of M = 4 keypoints (3 edges),
// four random frames with one hidden keypoint, two dense samples.
GradProblem grad_problem(std::uint64_t seed) {
  std::mt19937_64 rng(seed * 7919 + 17);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  GradProblem p;
  p.skeleton = {4, {{0, 1}, {1, 2}, {2, 3}}, {0.3, 0.3, 0.3}};
  FusionConfig fc;
  fc.low_hidden = {16, 16};
  fc.high_hidden = {16, 16};
  p.model = make_fusion_model(fc, {4, 2}, InputEncoding::spanning(0.0, 1.0), seed);
  std::vector<KeypointFrame> frames;
  std::vector<double> times;
  for (std::size_t b = 0; b < 4; ++b) {
    KeypointFrame f;
    f.time = 0.25 * static_cast<double>(b) + 0.1 * (u(rng) + 0.5);
    for (int i = 0; i < 4; ++i) f.positions.push_back({u(rng), u(rng), u(rng)});
    f.visible.assign(4, true);
    if (b == 1) f.visible[2] = false;
    times.push_back(f.time);
    frames.push_back(std::move(f));
  }
  Tensor samples({4, 6});
  for (double& v : samples.values()) v = u(rng);
  p.batch = {time_column(times), keypoint_matrix(frames), visibility_matrix(frames), samples};
  return p;
}

Outcome gradient_correctness() {
  const auto t0 = Clock::now();
  const LossWeights w;
  double worst = 0.0;
  int bad = 0;
  std::size_t params = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto p = grad_problem(seed);
    const auto r = run_gradcheck(p.model, p.skeleton, p.batch, w);
    params = r.num_params;
    worst = std::max(worst, r.max_rel_error);
    if (!(r.max_rel_error < 1e-5)) ++bad;
  }
  const double secs = seconds_since(t0);
  return {bad == 0 && secs < 60.0, "100 seeds, " + std::to_string(params) + " params each, worst rel error " +
                                       fmt("%.3g", worst) + " (< 1e-5), " + std::to_string(bad) +
                                       " failing, " + fmt("%.1f", secs) + " s (< 60 s)"};
}

// ---------------------------------------------------------------- [2]

Outcome initialization_law() {
  const auto t0 = Clock::now();
  bool ok = true;
  std::ostringstream d;
  for (std::size_t n_in : {50, 100, 256}) {
    // hidden layer n_in -> 256 gives 256 * n_in weights; repeat seeds until >= 25k samples
    std::vector<double> w;
    for (std::uint64_t seed = 0; w.size() < 25000; ++seed) {
      const auto net = init_siren(2, {n_in, 256}, 1, 30.0, 1000 + seed);
      const auto& v = net.layers()[1].weight.values();
      w.insert(w.end(), v.begin(), v.end());
    }
    double mean = 0.0;
    for (double x : w) mean += x;
    mean /= static_cast<double>(w.size());
    double var = 0.0;
    for (double x : w) var += (x - mean) * (x - mean);
    var /= static_cast<double>(w.size() - 1);
    const double target = 2.0 / static_cast<double>(n_in);
    const double rel = std::abs(var / target - 1.0);
    ok = ok && rel <= 0.10;
    d << "n_in " << n_in << ": var/(2/n_in) = " << fmt("%.4f", var / target) << " over " << w.size() << "; ";
  }
  // first layer: |w| <= 1/n0 for every weight, across fan-ins
  std::size_t checked = 0, violations = 0;
  for (std::size_t n0 : {1, 3, 7, 64}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto net = init_siren(n0, {256}, 1, 30.0, seed);
      for (double x : net.layers()[0].weight.values()) {
        ++checked;
        if (std::abs(x) > 1.0 / static_cast<double>(n0)) ++violations;
      }
    }
  }
  ok = ok && violations == 0;
  const double secs = seconds_since(t0);
  ok = ok && secs < 5.0;
  d << "first layer: " << violations << " of " << checked << " weights outside 1/n0; " << fmt("%.2f", secs)
    << " s (< 5 s)";
  return {ok, d.str()};
}

// ---------------------------------------------------------------- [3]

Outcome activation_stability() {
  const auto net = init_siren(1, {256, 256, 256, 256, 256}, 1, 30.0, 21);
  std::mt19937_64 rng(22);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor x({1024, 1});
  for (double& v : x.values()) v = u(rng);
  const auto stats = preactivation_stats(net, x);
  bool ok = stats.size() == 5;
  std::ostringstream d;
  d << "variance ratios layer l/l-1:";
  for (std::size_t l = 1; l < stats.size(); ++l) {
    const double r = stats[l].variance / stats[l - 1].variance;
    ok = ok && r >= 0.5 && r <= 2.0;
    d << " " << (l + 1) << "/" << l << "=" << fmt("%.3f", r);
  }
  d << " (each in [0.5, 2])";
  return {ok, d.str()};
}

// ---------------------------------------------------------------- [4]

double geo_value(const Tensor& pred, const Tensor& gt, const SkeletonGraph& g, double w, const Tensor& mask) {
  ad::Tape tape;
  return loss_geo(tape.leaf(pred), gt, g, w, mask).value().item();
}

std::vector<Tensor> grads_of(const GradProblem& p, const LossWeights& w, int which) {
  ad::Tape tape;
  auto params = bind(tape, p.model, true);
  auto loss = evaluate_batch(tape, p.model, params, p.skeleton, p.batch, w);
  tape.backward(which == 0 ? loss.recon : loss.sirenpose);
  std::vector<Tensor> out;
  for (const auto* b : {&params.low, &params.high}) {
    for (std::size_t l = 0; l < b->weights.size(); ++l) {
      out.push_back(b->weights[l].grad());
      out.push_back(b->biases[l].grad());
    }
  }
  return out;
}

Outcome loss_identities() {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const SkeletonGraph g{5, {{0, 1}, {1, 2}, {2, 3}, {1, 4}}, {0.3, 0.3, 0.3, 0.3}};
  const double w0 = 30.0;
  Tensor pred({16, 15}), gt({16, 15});
  for (double& v : pred.values()) v = u(rng);
  for (double& v : gt.values()) v = u(rng);
  Tensor mask = all_visible(16, 5);
  mask.at(3, 2) = 0.0;
  const double base = geo_value(pred, gt, g, w0, mask);

  double trans_rel = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    Tensor shifted = pred;
    for (std::size_t b = 0; b < 16; ++b) {
      const double t[3] = {5 * u(rng), 5 * u(rng), 5 * u(rng)};
      for (std::size_t k = 0; k < 15; ++k) shifted.at(b, k) += t[k % 3];
    }
    trans_rel = std::max(trans_rel, std::abs(geo_value(shifted, gt, g, w0, mask) - base) / base);
  }

  // moving leaf keypoint 4 shifts only edge (1, 4)
  double period_rel = 0.0;
  for (std::size_t c = 0; c < 3; ++c) {
    for (int k : {-2, 1, 3}) {
      Tensor moved = pred;
      for (std::size_t b = 0; b < 16; ++b) moved.at(b, 12 + c) += k * 2.0 * std::numbers::pi / w0;
      period_rel = std::max(period_rel, std::abs(geo_value(moved, gt, g, w0, mask) - base) / base);
    }
  }

  LossWeights zero;
  zero.lambda_geo = 0.0;
  ad::Tape t1, t2;
  auto v1 = t1.leaf(pred), v2 = t2.leaf(pred);
  auto sp_total = loss_sirenpose(v1, gt, g, zero, mask).total;
  auto pos = loss_pos(v2, gt, mask);
  t1.backward(sp_total);
  t2.backward(pos);
  bool equal = sp_total.value().item() == pos.value().item() && v1.grad() == v2.grad();

  // grad L_total = grad L_recon + lambda_sp * grad L_sirenpose, per parameter
  double add_err = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto p = grad_problem(seed);
    LossWeights lw;
    lw.lambda_sp = 0.7;
    lw.lambda_geo = 0.3;
    const auto total = total_gradient(p.model, p.skeleton, p.batch, lw);
    const auto rec = grads_of(p, lw, 0);
    const auto spg = grads_of(p, lw, 1);
    for (std::size_t k = 0; k < total.size(); ++k) {
      for (std::size_t i = 0; i < total[k].size(); ++i) {
        add_err = std::max(add_err, std::abs(total[k][i] - (rec[k][i] + lw.lambda_sp * spg[k][i])));
      }
    }
  }

  const bool ok = trans_rel <= 1e-12 && period_rel <= 1e-12 && equal && add_err <= 1e-10;
  return {ok, "translation rel " + fmt("%.2g", trans_rel) + " (<= 1e-12), period rel " + fmt("%.2g", period_rel) +
                  " (<= 1e-12), lambda_geo=0 equals L_pos " + (equal ? "exactly" : "NO") +
                  ", gradient additivity max abs " + fmt("%.2g", add_err) + " (<= 1e-10)"};
}

// ---------------------------------------------------------------- [5]

PoseTrajectory spiral(std::size_t n) {
  PoseTrajectory t;
  for (std::size_t i = 0; i < n; ++i) {
    const double s = 0.15 * static_cast<double>(i);
    Pose p;
    p.translation = {std::cos(s), 0.5 * std::sin(2 * s), 0.2 * s};
    p.rotation = Eigen::Quaterniond(Eigen::AngleAxisd(0.3 * s, Eigen::Vector3d(1, 0.5, -0.2).normalized()));
    t.timestamps.push_back(s);
    t.poses.push_back(p);
  }
  return t;
}

Outcome trajectory_oracles() {
  const auto gt = spiral(50);
  const double self_ate = ate(horn_align(gt, gt).aligned, gt);

  RigidTransform tf;
  tf.rotation = Eigen::AngleAxisd(2.1, Eigen::Vector3d(0.2, -1, 0.7).normalized()).toRotationMatrix();
  tf.translation = {3.0, -7.5, 0.25};
  const auto moved = apply(tf, gt);
  const auto al = horn_align(moved, gt);
  const double known_ate = ate(al.aligned, gt);
  const double rot_err = (al.transform.rotation - tf.rotation.transpose()).norm();

  double drift_err = 0.0;
  const Eigen::Vector3d dir = Eigen::Vector3d(0.3, -0.4, 1.2).normalized();
  for (double eps : {1e-4, 0.01, 0.2}) {
    auto est = gt;
    Eigen::Vector3d acc = Eigen::Vector3d::Zero();
    for (std::size_t i = 1; i < est.size(); ++i) {
      acc += gt.poses[i - 1].rotation * (eps * dir);  // eps in frame i-1 coordinates
      est.poses[i].translation = gt.poses[i].translation + acc;
    }
    const auto r = rpe(est, gt, 1);
    drift_err = std::max(drift_err, std::abs(r.trans_rmse - eps));
    for (double v : r.trans) drift_err = std::max(drift_err, std::abs(v - eps));
  }
  const bool ok = self_ate < 1e-12 && known_ate < 1e-9 && drift_err < 1e-9;
  return {ok, "self ATE " + fmt("%.2g", self_ate) + " (< 1e-12), known-transform ATE " + fmt("%.2g", known_ate) +
                  " (< 1e-9, rotation err " + fmt("%.2g", rot_err) + "), drift |RPE - eps| " + fmt("%.2g", drift_err) +
                  " (< 1e-9)"};
}

// ---------------------------------------------------------------- [6]

Outcome convergence() {
  const auto t0 = Clock::now();
  ExperimentConfig cfg;  // defaults: Adam, lr 1e-4, batch 64, 2000 steps
  const auto static_run = run_experiment(generate_scene(scenes::static_pendulum()), cfg, {});
  const double static_epe = static_run.heldout_metrics.keypoints.epe;
  cfg.train.steps = 10000;
  const auto fast_run = run_experiment(generate_scene(scenes::fast_pendulum()), cfg, {});
  const double fast_epe = fast_run.heldout_metrics.keypoints.epe;
  const double secs = seconds_since(t0);
  const bool ok = static_epe < 1e-2 && fast_epe < 2.0 * static_epe && secs < 900.0;
  return {ok, "static held-out EPE " + fmt("%.5f", static_epe) + " (< 0.01) after 2000 steps; 4 Hz EPE " +
                  fmt("%.5f", fast_epe) + " (< 2 x static = " + fmt("%.5f", 2 * static_epe) + ") after 10000 steps; " +
                  fmt("%.0f", secs) + " s (< 900 s)"};
}

// ---------------------------------------------------------------- [7]

Outcome ablation_trend() {
  const auto scene = generate_scene(scenes::occluded_pendulum());
  const auto rows = run_ablation(scene, ExperimentConfig{}, {}, 5);
  const double full = rows[0].median_mse, no_geo = rows[1].median_mse, no_high = rows[2].median_mse,
               neither = rows[3].median_mse;
  const bool ok = full < no_geo && full < no_high && neither > full && neither > no_geo && neither > no_high;
  return {ok, "median held-out MSE over 5 seeds: full " + fmt("%.6g", full) + ", no-geo " + fmt("%.6g", no_geo) +
                  ", no-highfreq " + fmt("%.6g", no_high) + ", neither " + fmt("%.6g", neither) +
                  " (need full < no-geo, full < no-highfreq, neither worst)"};
}

// ---------------------------------------------------------------- [8]

Outcome removal_trend() {
  const auto scene = generate_scene(scenes::noisy_biped());
  const std::vector<std::vector<std::size_t>> removals{{}, {8}, {8, 5}};
  std::vector<double> mse, ga;
  for (const auto& rm : removals) {
    std::vector<double> m, g;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      ExperimentConfig cfg;
      cfg.train.seed = seed;
      AblationFlags flags;
      flags.remove_keypoints = rm;
      const auto r = run_experiment(scene, cfg, flags);
      m.push_back(r.heldout_metrics.keypoints.mse);
      g.push_back(r.heldout_metrics.keypoints.geometric_accuracy);
    }
    mse.push_back(median(m));
    ga.push_back(median(g));
  }
  const bool ok = mse[0] < mse[1] && mse[1] < mse[2] && ga[0] > ga[1] && ga[1] > ga[2];
  return {ok, "median over 5 seeds, removed {} / {8} / {8,5}: MSE " + fmt("%.5g", mse[0]) + " < " +
                  fmt("%.5g", mse[1]) + " < " + fmt("%.5g", mse[2]) + ", geometric_accuracy " + fmt("%.4f", ga[0]) +
                  " > " + fmt("%.4f", ga[1]) + " > " + fmt("%.4f", ga[2])};
}

// ---------------------------------------------------------------- [9]

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

int shell(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("\"") + SIRENPOSE_CLI + "\" " + args + " >> \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome pipeline_determinism() {
  const fs::path configs = SIRENPOSE_CONFIGS;
  const fs::path root = fs::temp_directory_path() / "sirenpose_acceptance_pipeline";
  fs::remove_all(root);
  std::vector<std::string> metrics, frames;
  for (const char* run : {"a", "b"}) {
    const fs::path d = root / run;
    fs::create_directories(d);
    const fs::path log = d / "log.txt";
    auto q = [](const fs::path& p) { return "\"" + p.string() + "\""; };
    if (shell("gen-scene --config " + q(configs / "scenes/occluded_pendulum.json") + " --out " + q(d / "scene"), log) ||
        shell("train --track " + q(d / "scene/track.jsonl") + " --targets " + q(d / "scene/targets.jsonl") +
                  " --train-config " + q(configs / "train/quick.json") + " --seed 3 --quiet --out " + q(d / "train"),
              log) ||
        shell("eval --checkpoint " + q(d / "train/checkpoint.bin") + " --track " + q(d / "scene/ground_truth.jsonl") +
                  " --out " + q(d / "eval"),
              log)) {
      return {false, std::string("pipeline run ") + run + " failed: " + slurp(log)};
    }
    metrics.push_back(slurp(d / "eval/metrics.csv"));
    frames.push_back(slurp(d / "eval/frames.csv"));
  }
  fs::remove_all(root);
  const bool ok = !metrics[0].empty() && metrics[0] == metrics[1] && frames[0] == frames[1];
  return {ok, "gen-scene -> train -> eval twice with seed 3: metrics.csv " +
                  std::string(metrics[0] == metrics[1] ? "identical" : "DIFFERS") + " (" +
                  std::to_string(metrics[0].size()) + " bytes), frames.csv " +
                  std::string(frames[0] == frames[1] ? "identical" : "DIFFERS")};
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  run_criterion(1, "gradient correctness", gradient_correctness);
  run_criterion(2, "initialization law", initialization_law);
  run_criterion(3, "activation stability", activation_stability);
  run_criterion(4, "loss identities", loss_identities);
  run_criterion(5, "Horn/ATE/RPE oracles", trajectory_oracles);
  run_criterion(6, "convergence", convergence);
  run_criterion(7, "ablation trend", ablation_trend);
  run_criterion(8, "keypoint removal trend", removal_trend);
  run_criterion(9, "pipeline determinism", pipeline_determinism);
  std::printf("%d of 9 criteria failed (%.0f s)\n", failures, seconds_since(t0));
  return failures ? 1 : 0;
}
