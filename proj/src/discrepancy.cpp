#include "condpar/discrepancy.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "condpar/error.hpp"

namespace condpar {

void DiscrepancySeries::record(int t, double value) {
  if (t < 0) throw ParameterError("t", "timestep must be nonnegative");
  if (!(value >= 0.0) || !std::isfinite(value)) {
    throw NumericError("discrepancy at t = " + std::to_string(t) +
                       " must be finite and nonnegative");
  }
  values_[t] = value;
}

std::optional<double> DiscrepancySeries::at(int t) const {
  auto it = values_.find(t);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

void SwitchConfig::validate(int steps) const {
  if (window < 1) throw ParameterError("L", "window must be at least 1");
  if (window >= steps) throw ParameterError("L", "window must be shorter than T");
  if (!(slope_threshold > 0.0) || !std::isfinite(slope_threshold)) {
    throw ParameterError("g_slope", "must be positive");
  }
  if (tau_cap < 0 || tau_cap > steps) {
    throw ParameterError("tau_cap", "must lie in [0, T]");
  }
  if (interval < 0) throw ParameterError("k", "must be nonnegative");
}

bool SwitchConfig::interval_feasible(int steps) const {
  return interval >= 1 && interval < steps - tau_cap;
}

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::kWarmUp: return "warm_up";
    case Stage::kParallelism: return "parallelism";
    case Stage::kFullyConnecting: return "fully_connecting";
  }
  return "unknown";
}

StageState initial_stage_state(int steps) {
  StageState s;
  s.steps = steps;
  return s;
}

namespace {

Stage label(int step, std::optional<int> tau1, std::optional<int> tau2) {
  if (!tau1 || step <= *tau1) return Stage::kWarmUp;
  if (step <= *tau2) return Stage::kParallelism;
  return Stage::kFullyConnecting;
}

}  // namespace

Stage planned_stage(const StageState& state, const SwitchConfig& cfg, int t) {
  const int step = step_index(state.steps, t);
  if (!state.tau1 && step > cfg.tau_cap) {
    return label(step, cfg.tau_cap, cfg.tau_cap + cfg.interval);
  }
  return label(step, state.tau1, state.tau2);
}

StageState update_controller(const StageState& state, const DiscrepancySeries& series,
                             int t, const SwitchConfig& cfg) {
  const int expected = state.last_t ? *state.last_t - 1 : state.steps;
  if (t != expected || t < 1) {
    throw SequencingError("controller expected t = " + std::to_string(expected) +
                          ", got t = " + std::to_string(t));
  }
  StageState next = state;
  next.last_t = t;
  const int step = step_index(state.steps, t);

  if (!next.tau1) {
    const int earlier = t + cfg.window;
    if (series.contains(t) && series.contains(earlier)) {
      const double g = slope(series, t, cfg.window);
      if (g >= 0.0 && g < cfg.slope_threshold) next.tau1 = std::min(step, cfg.tau_cap);
    }
    if (!next.tau1 && step >= cfg.tau_cap) next.tau1 = cfg.tau_cap;
    if (next.tau1) next.tau2 = *next.tau1 + cfg.interval;
  }
  next.stage = label(step, next.tau1, next.tau2);
  return next;
}

SwitchDecision replay_controller(const DiscrepancySeries& series, const SwitchConfig& cfg,
                                 int steps) {
  cfg.validate(steps);
  SwitchDecision out;
  StageState state = initial_stage_state(steps);
  for (int t = steps; t >= 1; --t) {
    state = update_controller(state, series, t, cfg);
    out.stages.push_back(StepLabel{t, step_index(steps, t), state.stage});
  }
  out.tau1 = state.tau1;
  out.tau2 = state.tau2;
  return out;
}

double rel_mae(std::span<const Vec> eps_c, std::span<const Vec> eps_u) {
  if (eps_c.empty()) throw ShapeError("rel_mae: empty batch");
  if (eps_c.size() != eps_u.size()) {
    throw ShapeError("rel_mae: batch sizes differ (" + std::to_string(eps_c.size()) +
                     " vs " + std::to_string(eps_u.size()) + ")");
  }
  double num = 0.0;
  double den = 0.0;
  for (std::size_t b = 0; b < eps_c.size(); ++b) {
    if (eps_c[b].size() != eps_u[b].size()) {
      throw ShapeError("rel_mae: sample " + std::to_string(b) + " has mismatched shapes");
    }
    num += l1_distance(eps_c[b], eps_u[b]);
    den += l1_norm(eps_u[b]);
  }
  if (!(den > 0.0)) throw DegenerateInputError("rel_mae: unconditional batch is all zero");
  return num / den;
}

double slope(const DiscrepancySeries& series, int t, int window) {
  if (window < 1) throw ParameterError("L", "window must be at least 1");
  const auto now = series.at(t);
  const auto before = series.at(t + window);
  if (!now || !before) {
    throw InsufficientHistoryError("slope at t = " + std::to_string(t) +
                                   " needs values at t and t + " +
                                   std::to_string(window));
  }
  return (*now - *before) / window;
}

double score_ratio_estimate(const GaussianMixture& gm, const Condition& subset,
                            const NoiseSchedule& sched, std::span<const Vec> x_batch,
                            int t) {
  const std::vector<Condition> conditions(x_batch.size(), subset);
  return score_ratio_estimate(noised_mixture(gm, sched, t), conditions, x_batch);
}

double score_ratio_estimate(const GaussianMixture& noised,
                            std::span<const Condition> conditions,
                            std::span<const Vec> x_batch) {
  if (x_batch.empty()) throw ShapeError("score_ratio_estimate: empty batch");
  if (conditions.size() != x_batch.size()) {
    throw ShapeError("score_ratio_estimate: one condition per sample required");
  }
  double num = 0.0;
  double den = 0.0;
  for (std::size_t b = 0; b < x_batch.size(); ++b) {
    const Vec su = mixture_score(noised, Condition::unconditional(), x_batch[b]).score;
    const Vec sc = mixture_score(noised, conditions[b], x_batch[b]).score;
    num += l1_distance(sc, su);
    den += l1_norm(su);
  }
  if (!(den > 0.0)) {
    throw DegenerateInputError("score_ratio_estimate: unconditional score vanishes");
  }
  return num / den;
}

double hoeffding_false_alarm(int window, const SlopeNoiseModel& noise) {
  if (window < 1) throw ParameterError("L", "window must be at least 1");
  if (!(noise.delta > 0.0)) throw ParameterError("delta", "must be positive");
  if (!(noise.range_hi > noise.range_lo)) {
    throw ParameterError("range_hi", "must exceed range_lo");
  }
  const double span = noise.range_hi - noise.range_lo;
  return 2.0 * std::exp(-2.0 * window * noise.delta * noise.delta / (span * span));
}

}  // namespace condpar
