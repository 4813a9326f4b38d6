#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "condpar/config.hpp"

namespace condpar {

/// One row of the discrepancy curve, recorded with the serial plan so that
/// both branches are measured on every step.
struct CurveRow {
  int t = 0;
  int step = 0;
  double m = 0.0;
  double score_ratio = 0.0;
  double band_lo = 0.0;  // M_t - 2 sd of the per-sample ratios
  double band_hi = 0.0;
  bool is_argmin = false;
};

std::vector<CurveRow> compute_curve(const ExperimentConfig& cfg);
void write_curve_csv(std::ostream& out, std::span<const CurveRow> rows);

/// Safety cap from a measured curve: the denoising step at which M_t is smallest.
nlohmann::json cmd_calibrate(const ExperimentConfig& cfg);

/// Reads a (t, M_t) CSV. Extra columns are ignored; the header must name both.
DiscrepancySeries read_series_csv(std::istream& in, int steps);
DiscrepancySeries read_series_csv(const std::filesystem::path& path, int steps);
void write_series_csv(std::ostream& out, const DiscrepancySeries& series);

nlohmann::json detect_json(const SwitchDecision& decision);
nlohmann::json cmd_detect(const std::filesystem::path& series_csv, const ExperimentConfig& cfg);

struct SimulateOutput {
  Metrics metrics;
  RunResult run;
};

/// Runs the configured plan and the serial baseline; when `out_dir` is
/// nonempty writes metrics.json, trace.csv, trace.json and series.csv there.
SimulateOutput cmd_simulate(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

void write_trace_csv(std::ostream& out, const RunTrace& trace);
nlohmann::json trace_json(const RunTrace& trace);

struct SweepRow {
  int k = 0;
  bool feasible = true;
  Metrics metrics;
};

std::vector<SweepRow> run_sweep(const ExperimentConfig& cfg, std::span<const int> ks);
void write_sweep_csv(std::ostream& out, std::span<const SweepRow> rows);

std::vector<int> parse_k_list(const std::string& text);

/// 17 significant digits, round-trippable.
std::string format_double(double v);

}  // namespace condpar
