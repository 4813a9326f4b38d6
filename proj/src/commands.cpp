#include "condpar/commands.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <iostream>
#include <sstream>

#include "condpar/error.hpp"

namespace condpar {

using nlohmann::json;

std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  return out;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw IoError(path.string(), "write failed");
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <class T>
bool parse_number(std::string_view s, T& out) {
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && !s.empty();
}

double sample_ratio(const Vec& c, const Vec& u) {
  const double den = l1_norm(u);
  return den > 0.0 ? l1_distance(c, u) / den : 0.0;
}

}  // namespace

std::vector<CurveRow> compute_curve(const ExperimentConfig& cfg) {
  ExecutionPlan plan = make_plan(cfg, PlanVariant::kSerial);
  const Workload& w = *plan.workload;
  std::vector<Condition> conds;
  for (std::size_t b = 0; b < plan.seeds.size(); ++b) {
    conds.push_back(w.conditions[b % w.conditions.size()]);
  }

  std::vector<CurveRow> rows;
  run_serial(plan, [&](const StepObservation& obs) {
    double m = 0.0;
    try {
      m = rel_mae(obs.pred_c, obs.pred_u);
    } catch (const DegenerateInputError&) {
      return;
    }
    const GaussianMixture noised = noised_mixture(w.model, sampler_level(w, obs.t));
    CurveRow row;
    row.t = obs.t;
    row.step = step_index(w.schedule.steps(), obs.t);
    row.m = m;
    row.score_ratio = score_ratio_estimate(noised, conds, obs.x);

    double mean = 0.0;
    for (std::size_t b = 0; b < obs.x.size(); ++b) mean += sample_ratio(obs.pred_c[b], obs.pred_u[b]);
    mean /= static_cast<double>(obs.x.size());
    double var = 0.0;
    for (std::size_t b = 0; b < obs.x.size(); ++b) {
      const double d = sample_ratio(obs.pred_c[b], obs.pred_u[b]) - mean;
      var += d * d;
    }
    const double sd = std::sqrt(var / static_cast<double>(obs.x.size()));
    row.band_lo = m - 2.0 * sd;
    row.band_hi = m + 2.0 * sd;
    rows.push_back(row);
  });

  if (!rows.empty()) {
    auto best = std::min_element(rows.begin(), rows.end(),
                                 [](const CurveRow& a, const CurveRow& b) { return a.m < b.m; });
    best->is_argmin = true;
  }
  return rows;
}

void write_curve_csv(std::ostream& out, std::span<const CurveRow> rows) {
  out << "t,step,M_t,score_ratio_t,band_lo,band_hi,is_argmin\n";
  for (const auto& r : rows) {
    out << r.t << ',' << r.step << ',' << format_double(r.m) << ','
        << format_double(r.score_ratio) << ',' << format_double(r.band_lo) << ','
        << format_double(r.band_hi) << ',' << (r.is_argmin ? 1 : 0) << '\n';
  }
}

json cmd_calibrate(const ExperimentConfig& cfg) {
  const auto rows = compute_curve(cfg);
  for (const auto& r : rows) {
    if (r.is_argmin) {
      return {{"argmin_t", r.t}, {"tau_cap", r.step}, {"min_M_t", r.m}, {"samples", cfg.seeds.size()}};
    }
  }
  throw DegenerateInputError("calibrate: no measurable discrepancy on any step");
}

DiscrepancySeries read_series_csv(std::istream& in, int steps) {
  std::string line;
  std::size_t line_no = 0;
  int t_col = -1;
  int m_col = -1;
  DiscrepancySeries series;

  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split(line);
    if (t_col < 0) {
      for (std::size_t i = 0; i < fields.size(); ++i) {
        if (fields[i] == "t") t_col = static_cast<int>(i);
        if (fields[i] == "M_t") m_col = static_cast<int>(i);
      }
      if (t_col < 0 || m_col < 0) throw ParseError("header must contain columns t and M_t", line_no);
      continue;
    }
    if (static_cast<int>(fields.size()) <= std::max(t_col, m_col)) {
      throw ParseError("expected at least " + std::to_string(std::max(t_col, m_col) + 1) +
                           " fields, got " + std::to_string(fields.size()),
                       line_no);
    }
    int t = 0;
    double m = 0.0;
    if (!parse_number(fields[t_col], t)) {
      throw ParseError("t is not an integer: '" + std::string(fields[t_col]) + "'", line_no);
    }
    if (!parse_number(fields[m_col], m)) {
      throw ParseError("M_t is not a number: '" + std::string(fields[m_col]) + "'", line_no);
    }
    if (t < 1 || t > steps) {
      throw ParseError("t = " + std::to_string(t) + " outside [1, " + std::to_string(steps) + "]",
                       line_no);
    }
    if (series.contains(t)) throw ParseError("duplicate t = " + std::to_string(t), line_no);
    if (!std::isfinite(m) || m < 0.0) throw ParseError("M_t must be finite and nonnegative", line_no);
    series.record(t, m);
  }
  if (t_col < 0) throw ParseError("empty series file");
  return series;
}

DiscrepancySeries read_series_csv(const std::filesystem::path& path, int steps) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string(), "cannot open series");
  return read_series_csv(in, steps);
}

void write_series_csv(std::ostream& out, const DiscrepancySeries& series) {
  out << "t,M_t\n";
  for (const auto& [t, m] : series.values()) out << t << ',' << format_double(m) << '\n';
}

json detect_json(const SwitchDecision& decision) {
  json stages = json::array();
  for (const auto& s : decision.stages) {
    stages.push_back({{"t", s.t}, {"step", s.step}, {"stage", std::string(to_string(s.stage))}});
  }
  return {{"tau1", decision.tau1 ? json(*decision.tau1) : json(nullptr)},
          {"tau2", decision.tau2 ? json(*decision.tau2) : json(nullptr)},
          {"stages", stages}};
}

json cmd_detect(const std::filesystem::path& series_csv, const ExperimentConfig& cfg) {
  const int steps = cfg.schedule.steps;
  const DiscrepancySeries series = read_series_csv(series_csv, steps);
  return detect_json(replay_controller(series, cfg.switching, steps));
}

void write_trace_csv(std::ostream& out, const RunTrace& trace) {
  out << "event,t,device,peer,label,bytes,start,end\n";
  for (const auto& s : trace.steps) {
    out << "step," << s.t << ",,," << (s.stage ? to_string(*s.stage) : "none") << ",,,\n";
  }
  for (const auto& b : trace.busy) {
    out << "busy," << b.t << ',' << b.device << ",," << b.work << ",," << format_double(b.start)
        << ',' << format_double(b.end) << '\n';
  }
  for (const auto& m : trace.messages) {
    out << "message," << m.t << ',' << m.src << ',' << m.dst << ',' << to_string(m.kind) << ','
        << format_double(m.bytes) << ',' << format_double(m.depart) << ','
        << format_double(m.arrive) << '\n';
  }
}

json trace_json(const RunTrace& trace) {
  json steps = json::array();
  for (const auto& s : trace.steps) {
    steps.push_back({{"t", s.t},
                     {"step", s.step},
                     {"stage", s.stage ? json(std::string(to_string(*s.stage))) : json(nullptr)}});
  }
  json busy = json::array();
  for (const auto& b : trace.busy) {
    busy.push_back(
        {{"device", b.device}, {"t", b.t}, {"work", b.work}, {"start", b.start}, {"end", b.end}});
  }
  json messages = json::array();
  for (const auto& m : trace.messages) {
    messages.push_back({{"src", m.src},
                        {"dst", m.dst},
                        {"t", m.t},
                        {"kind", std::string(to_string(m.kind))},
                        {"bytes", m.bytes},
                        {"depart", m.depart},
                        {"arrive", m.arrive}});
  }
  return {{"steps", steps}, {"busy", busy}, {"messages", messages}};
}

SimulateOutput cmd_simulate(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  const ExecutionPlan plan = make_plan(cfg);
  plan.validate();
  auto baseline = std::async(std::launch::async, [&] {
    return run_serial(make_plan(cfg, PlanVariant::kSerial));
  });
  RunResult run = run_plan(plan);
  const RunResult serial = baseline.get();
  SimulateOutput out{compute_metrics(run, serial, cfg.variant, cfg.psnr_peak), std::move(run)};

  if (!out_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError(out_dir.string(), ec.message());
    const auto write = [&](const std::string& name, auto&& body) {
      const auto path = out_dir / name;
      std::ofstream f = open_out(path);
      body(f);
      finish(f, path);
    };
    write("metrics.json", [&](std::ostream& f) { f << to_json(out.metrics).dump(2) << '\n'; });
    write("trace.csv", [&](std::ostream& f) { write_trace_csv(f, out.run.trace); });
    write("trace.json", [&](std::ostream& f) { f << trace_json(out.run.trace).dump(2) << '\n'; });
    write("series.csv", [&](std::ostream& f) { write_series_csv(f, out.run.series); });
  }
  return out;
}

std::vector<SweepRow> run_sweep(const ExperimentConfig& cfg, std::span<const int> ks) {
  const PlanVariant variant =
      cfg.variant == PlanVariant::kLayerWise || cfg.variant == PlanVariant::kBatchLevel
          ? cfg.variant
          : PlanVariant::kHybrid;
  const int steps = cfg.schedule.steps;
  const RunResult serial = run_serial(make_plan(cfg, PlanVariant::kSerial));

  std::vector<std::future<Metrics>> jobs;
  std::vector<SweepRow> rows;
  for (int k : ks) {
    SweepRow row;
    row.k = k;
    ExperimentConfig point = cfg;
    point.switching.interval = k;
    row.feasible = point.switching.interval_feasible(steps);
    rows.push_back(row);
    if (row.feasible) {
      jobs.push_back(std::async(std::launch::async, [point, variant, &serial] {
        return compute_metrics(run_plan(make_plan(point, variant)), serial, variant,
                               point.psnr_peak);
      }));
    }
  }
  std::size_t next = 0;
  for (auto& row : rows) {
    if (row.feasible) row.metrics = jobs[next++].get();
  }
  return rows;
}

void write_sweep_csv(std::ostream& out, std::span<const SweepRow> rows) {
  out << "k,latency_s,speedup,fidelity_l1,psnr_analog,status\n";
  for (const auto& r : rows) {
    if (!r.feasible) {
      out << r.k << ",,,,,infeasible\n";
      continue;
    }
    const auto& m = r.metrics;
    out << r.k << ',' << format_double(m.latency_s) << ',' << format_double(m.speedup) << ','
        << format_double(m.fidelity_l1) << ','
        << (m.psnr_analog ? format_double(*m.psnr_analog) : "inf") << ",ok\n";
  }
}

std::vector<int> parse_k_list(const std::string& text) {
  std::vector<int> out;
  if (trim(text).empty()) return out;
  for (const auto field : split(text)) {
    int k = 0;
    if (!parse_number(field, k)) throw ParseError("bad k value '" + std::string(field) + "'");
    out.push_back(k);
  }
  return out;
}

}  // namespace condpar
