#pragma once

// Text artifacts written by the CLI: loss histories, metric files, the
// ablation table. Numbers are printed with 17 significant digits so files
// round-trip and compare byte-for-byte across runs.

#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sirenpose/eval.hpp"
#include "sirenpose/experiment.hpp"
#include "sirenpose/trainer.hpp"

namespace sirenpose {

inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string loss_history_csv(const TrainReport& report) {
  std::ostringstream os;
  os << "step,l_pos,l_geo,l_sirenpose,l_recon,l_total\n";
  for (std::size_t s = 0; s < report.history.size(); ++s) {
    const auto& b = report.history[s];
    os << s << ',' << format_number(b.l_pos) << ',' << format_number(b.l_geo) << ','
       << format_number(b.l_sirenpose) << ',' << format_number(b.l_recon) << ','
       << format_number(b.l_total) << '\n';
  }
  return os.str();
}

/// Summary of a training run. Wall time is excluded unless asked for, so the
/// default output is reproducible.
inline json train_summary_json(const TrainReport& report, bool include_wall_time = false) {
  json j;
  j["steps"] = report.history.size();
  if (!report.history.empty()) {
    const auto& first = report.history.front();
    const auto& last = report.history.back();
    j["initial_l_total"] = first.l_total;
    j["final"] = {{"l_pos", last.l_pos},
                  {"l_geo", last.l_geo},
                  {"l_sirenpose", last.l_sirenpose},
                  {"l_recon", last.l_recon},
                  {"l_total", last.l_total}};
  }
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(report.parameter_checksum));
  j["parameter_checksum"] = hex;
  j["gradchecks"] = json::array();
  for (const auto& g : report.gradchecks) {
    j["gradchecks"].push_back({{"step", g.step},
                               {"max_rel_error", g.max_rel_error},
                               {"worst_index", g.worst_index},
                               {"passed", g.passed}});
  }
  if (include_wall_time) j["wall_seconds"] = report.wall_seconds;
  return j;
}

inline json metrics_json(const MetricReport& m) {
  const auto& k = m.keypoints;
  return {{"frames", m.times.size()},
          {"mse", k.mse},
          {"epe", k.epe},
          {"mse_score", k.mse_score()},
          {"epe_score", k.epe_score()},
          {"geometric_accuracy", k.geometric_accuracy},
          {"temporal_consistency", k.temporal_consistency},
          {"motion_smoothness", k.motion_smoothness},
          {"ate_rmse", m.ate_rmse},
          {"rpe_trans_rmse", m.rpe_trans_rmse},
          {"rpe_rot_rmse_deg", m.rpe_rot_rmse_deg},
          {"trajectory_aligned", m.trajectory_aligned}};
}

inline std::string metrics_csv(const MetricReport& m) {
  const auto& k = m.keypoints;
  std::ostringstream os;
  os << "metric,value\n";
  const std::pair<const char*, double> rows[] = {
      {"mse", k.mse},
      {"epe", k.epe},
      {"mse_score", k.mse_score()},
      {"epe_score", k.epe_score()},
      {"geometric_accuracy", k.geometric_accuracy},
      {"temporal_consistency", k.temporal_consistency},
      {"motion_smoothness", k.motion_smoothness},
      {"ate_rmse", m.ate_rmse},
      {"rpe_trans_rmse", m.rpe_trans_rmse},
      {"rpe_rot_rmse_deg", m.rpe_rot_rmse_deg},
  };
  for (const auto& [name, v] : rows) os << name << ',' << format_number(v) << '\n';
  return os.str();
}

/// One row per evaluated frame.
inline std::string frames_csv(const MetricReport& m) {
  std::ostringstream os;
  os << "t,epe,mse,geometric_accuracy,ate\n";
  for (std::size_t f = 0; f < m.times.size(); ++f) {
    os << format_number(m.times[f]) << ',' << format_number(m.epe_per_frame.at(f)) << ','
       << format_number(m.mse_per_frame.at(f)) << ',' << format_number(m.geo_per_frame.at(f)) << ','
       << format_number(f < m.ate_per_frame.size() ? m.ate_per_frame[f] : 0.0) << '\n';
  }
  return os.str();
}

inline std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  os << "config,geo,high_frequency,median_mse,median_epe,median_geometric_accuracy,seeds\n";
  for (const auto& r : rows) {
    os << r.name << ',' << (r.flags.disable_geo ? 0 : 1) << ',' << (r.flags.freeze_high_stream ? 0 : 1)
       << ',' << format_number(r.median_mse) << ',' << format_number(r.median_epe) << ','
       << format_number(r.median_geometric_accuracy) << ',' << r.mse.size() << '\n';
  }
  return os.str();
}

inline json ablation_json(const std::vector<AblationRow>& rows) {
  json out = json::array();
  for (const auto& r : rows) {
    out.push_back({{"config", r.name},
                   {"geo", !r.flags.disable_geo},
                   {"high_frequency", !r.flags.freeze_high_stream},
                   {"mse", r.mse},
                   {"epe", r.epe},
                   {"geometric_accuracy", r.geometric_accuracy},
                   {"median_mse", r.median_mse},
                   {"median_epe", r.median_epe},
                   {"median_geometric_accuracy", r.median_geometric_accuracy}});
  }
  return out;
}

}  // namespace sirenpose
