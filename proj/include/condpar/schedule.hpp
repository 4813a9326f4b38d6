#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "condpar/vec.hpp"

namespace condpar {

enum class ScheduleKind { kLinear, kScaledLinear };

std::string_view to_string(ScheduleKind kind);
ScheduleKind parse_schedule_kind(std::string_view name);

struct ScheduleSpec {
  ScheduleKind kind = ScheduleKind::kLinear;
  int steps = 50;
  double beta_start = 1e-3;
  double beta_end = 0.12;
};

/// Discretized variance-preserving schedule over timesteps 1..T.
///
/// Timestep 0 is the clean-data end: alpha_bar(0) == 1 and sigma(0) == 0.
/// Accessors take the timestep index directly, not a zero-based offset.
class NoiseSchedule {
 public:
  static NoiseSchedule build(const ScheduleSpec& spec);

  const ScheduleSpec& spec() const { return spec_; }
  int steps() const { return spec_.steps; }

  double beta(int t) const;
  double alpha(int t) const;
  double alpha_bar(int t) const;
  double sigma(int t) const;

 private:
  explicit NoiseSchedule(ScheduleSpec spec) : spec_(spec) {}
  void check_index(int t, int lo) const;

  ScheduleSpec spec_;
  std::vector<double> betas_;
  std::vector<double> alpha_bars_;
};

NoiseSchedule build_schedule(ScheduleKind kind, int steps, double beta_start,
                             double beta_end);

/// Classifier-free guidance scale, w >= 0.
class GuidanceParams {
 public:
  explicit GuidanceParams(double w = 0.0);
  double w() const { return w_; }

 private:
  double w_;
};

struct LatentState {
  Vec x;
  int t = 0;
};

/// eps_c + w (eps_c - eps_u)
Vec cfg_combine(std::span<const double> eps_c, std::span<const double> eps_u,
                const GuidanceParams& guidance);

/// Reverse-process mean (x_t - beta_t / sqrt(1 - alpha_bar_t) eps) / sqrt(alpha_t).
Vec ddpm_posterior_mean(const LatentState& state, std::span<const double> eps,
                        const NoiseSchedule& sched);

/// Deterministic DDIM update (eta = 0) from t to t-1.
LatentState ddim_step(const LatentState& state, std::span<const double> eps,
                      const NoiseSchedule& sched);

/// One explicit Euler step of dx/dt = v taken backwards in time: x - v dt.
Vec fm_euler_step(std::span<const double> x, std::span<const double> v, double dt);

}  // namespace condpar
