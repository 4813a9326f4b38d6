#pragma once

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "condpar/mixture.hpp"
#include "condpar/schedule.hpp"
#include "condpar/vec.hpp"

namespace condpar {

/// Recorded discrepancy values keyed by timestep, iterated from T downwards.
/// Steps where the two branches were not both evaluated are simply absent.
class DiscrepancySeries {
 public:
  using Map = std::map<int, double, std::greater<int>>;

  void record(int t, double value);
  std::optional<double> at(int t) const;
  bool contains(int t) const { return values_.contains(t); }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }
  const Map& values() const { return values_; }

 private:
  Map values_;
};

/// Controller parameters. `window` is the slope window L, `slope_threshold`
/// is g_slope, `interval` is the parallelism length k.
///
/// tau_cap, tau1 and tau2 count denoising steps from the start of sampling
/// (step s = T - t + 1), so a cap of 15 means the parallel stage begins no
/// later than the 15th step.
struct SwitchConfig {
  int window = 12;
  double slope_threshold = 0.4e-3;
  int tau_cap = 15;
  int interval = 5;

  void validate(int steps) const;
  /// 1 <= k < T - tau_cap, which guarantees 1 <= k < T - tau1.
  bool interval_feasible(int steps) const;
};

enum class Stage { kWarmUp, kParallelism, kFullyConnecting };

std::string_view to_string(Stage stage);

inline int step_index(int steps, int t) { return steps - t + 1; }
inline int timestep_of(int steps, int step) { return steps - step + 1; }

struct StageState {
  int steps = 0;
  Stage stage = Stage::kWarmUp;
  std::optional<int> tau1;
  std::optional<int> tau2;
  std::optional<int> last_t;
};

StageState initial_stage_state(int steps);

/// Label the controller would assign to timestep t before observing its
/// discrepancy. Accounts for the cap firing on this step.
Stage planned_stage(const StageState& state, const SwitchConfig& cfg, int t);

/// Advance the switching state machine by one denoising step. Must be called
/// for t = T, T-1, ..., 1 in order.
StageState update_controller(const StageState& state, const DiscrepancySeries& series,
                             int t, const SwitchConfig& cfg);

struct StepLabel {
  int t = 0;
  int step = 0;
  Stage stage = Stage::kWarmUp;
};

struct SwitchDecision {
  std::optional<int> tau1;
  std::optional<int> tau2;
  std::vector<StepLabel> stages;
};

/// Replays the controller over a complete recorded series.
SwitchDecision replay_controller(const DiscrepancySeries& series, const SwitchConfig& cfg,
                                 int steps);

/// Relative mean absolute error E|eps_c - eps_u|_1 / E|eps_u|_1 over a batch.
double rel_mae(std::span<const Vec> eps_c, std::span<const Vec> eps_u);

/// G_t = (M_t - M_{t+L}) / L: the change over the last L controller
/// iterations, so a decaying curve gives a negative slope.
double slope(const DiscrepancySeries& series, int t, int window);

/// Batch mean of |grad log p(c|x)|_1 over batch mean of |s_u|_1.
double score_ratio_estimate(const GaussianMixture& gm, const Condition& subset,
                            const NoiseSchedule& sched, std::span<const Vec> x_batch,
                            int t);

/// Same ratio for an already-noised mixture with one condition per sample.
double score_ratio_estimate(const GaussianMixture& noised,
                            std::span<const Condition> conditions,
                            std::span<const Vec> x_batch);

struct SlopeNoiseModel {
  double delta = 0.0;
  double range_lo = 0.0;
  double range_hi = 1.0;
};

/// 2 exp(-2 L delta^2 / (b - a)^2)
double hoeffding_false_alarm(int window, const SlopeNoiseModel& noise);

}  // namespace condpar
