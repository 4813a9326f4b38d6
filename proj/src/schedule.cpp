#include "condpar/schedule.hpp"

#include <cmath>
#include <string>

#include "condpar/error.hpp"

namespace condpar {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kParameter: return "parameter";
    case ErrorKind::kShape: return "shape";
    case ErrorKind::kStepUnderflow: return "step_underflow";
    case ErrorKind::kNumeric: return "numeric";
    case ErrorKind::kDegenerateInput: return "degenerate_input";
    case ErrorKind::kInsufficientHistory: return "insufficient_history";
    case ErrorKind::kSequencing: return "sequencing";
    case ErrorKind::kPlan: return "plan";
    case ErrorKind::kParse: return "parse";
    case ErrorKind::kIo: return "io";
  }
  return "unknown";
}

std::string_view to_string(ScheduleKind kind) {
  return kind == ScheduleKind::kLinear ? "linear" : "scaled-linear";
}

ScheduleKind parse_schedule_kind(std::string_view name) {
  if (name == "linear") return ScheduleKind::kLinear;
  if (name == "scaled-linear" || name == "scaled_linear") {
    return ScheduleKind::kScaledLinear;
  }
  throw ParameterError("kind", "unknown schedule kind '" + std::string(name) + "'");
}

NoiseSchedule NoiseSchedule::build(const ScheduleSpec& spec) {
  if (spec.steps < 2) throw ParameterError("T", "must be at least 2");
  if (!(spec.beta_start > 0.0) || !(spec.beta_start < 1.0)) {
    throw ParameterError("beta_start", "must lie in (0, 1)");
  }
  if (!(spec.beta_end >= spec.beta_start) || !(spec.beta_end < 1.0)) {
    throw ParameterError("beta_end", "must lie in [beta_start, 1)");
  }

  NoiseSchedule out(spec);
  const int n = spec.steps;
  out.betas_.resize(n);
  for (int i = 0; i < n; ++i) {
    const double frac = static_cast<double>(i) / (n - 1);
    if (spec.kind == ScheduleKind::kLinear) {
      out.betas_[i] = spec.beta_start + frac * (spec.beta_end - spec.beta_start);
    } else {
      const double lo = std::sqrt(spec.beta_start);
      const double hi = std::sqrt(spec.beta_end);
      const double r = lo + frac * (hi - lo);
      out.betas_[i] = r * r;
    }
  }

  out.alpha_bars_.resize(n + 1);
  out.alpha_bars_[0] = 1.0;
  for (int t = 1; t <= n; ++t) {
    out.alpha_bars_[t] = out.alpha_bars_[t - 1] * (1.0 - out.betas_[t - 1]);
  }
  return out;
}

void NoiseSchedule::check_index(int t, int lo) const {
  if (t < lo || t > spec_.steps) {
    throw ParameterError("t", "timestep " + std::to_string(t) + " outside [" +
                                  std::to_string(lo) + ", " +
                                  std::to_string(spec_.steps) + "]");
  }
}

double NoiseSchedule::beta(int t) const {
  check_index(t, 1);
  return betas_[t - 1];
}

double NoiseSchedule::alpha(int t) const { return 1.0 - beta(t); }

double NoiseSchedule::alpha_bar(int t) const {
  check_index(t, 0);
  return alpha_bars_[t];
}

double NoiseSchedule::sigma(int t) const { return std::sqrt(1.0 - alpha_bar(t)); }

NoiseSchedule build_schedule(ScheduleKind kind, int steps, double beta_start,
                             double beta_end) {
  return NoiseSchedule::build(ScheduleSpec{kind, steps, beta_start, beta_end});
}

GuidanceParams::GuidanceParams(double w) : w_(w) {
  if (!(w >= 0.0) || !std::isfinite(w)) {
    throw ParameterError("w", "guidance scale must be finite and nonnegative");
  }
}

Vec cfg_combine(std::span<const double> eps_c, std::span<const double> eps_u,
                const GuidanceParams& guidance) {
  if (eps_c.size() != eps_u.size()) {
    throw ShapeError("cfg_combine: conditional has " + std::to_string(eps_c.size()) +
                     " entries, unconditional has " + std::to_string(eps_u.size()));
  }
  const double w = guidance.w();
  Vec out(eps_c.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = eps_c[i] + w * (eps_c[i] - eps_u[i]);
  }
  return out;
}

namespace {

void require_step(int t, const NoiseSchedule& sched, const char* op) {
  if (t < 1) {
    throw StepUnderflowError(std::string(op) + ": no reverse step from t = " +
                             std::to_string(t));
  }
  if (t > sched.steps()) {
    throw ParameterError("t", std::string(op) + ": timestep beyond schedule");
  }
}

void require_same_size(std::size_t a, std::size_t b, const char* op) {
  if (a != b) {
    throw ShapeError(std::string(op) + ": latent has " + std::to_string(a) +
                     " entries, noise has " + std::to_string(b));
  }
}

}  // namespace

Vec ddpm_posterior_mean(const LatentState& state, std::span<const double> eps,
                        const NoiseSchedule& sched) {
  require_step(state.t, sched, "ddpm_posterior_mean");
  require_same_size(state.x.size(), eps.size(), "ddpm_posterior_mean");
  const double beta = sched.beta(state.t);
  const double inv_sqrt_alpha = 1.0 / std::sqrt(sched.alpha(state.t));
  const double coef = beta / std::sqrt(1.0 - sched.alpha_bar(state.t));
  Vec out(state.x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = inv_sqrt_alpha * (state.x[i] - coef * eps[i]);
  }
  return out;
}

LatentState ddim_step(const LatentState& state, std::span<const double> eps,
                      const NoiseSchedule& sched) {
  require_step(state.t, sched, "ddim_step");
  require_same_size(state.x.size(), eps.size(), "ddim_step");
  if (!all_finite(state.x) || !all_finite(eps)) {
    throw NumericError("ddim_step: nonfinite input at t = " + std::to_string(state.t));
  }
  const double ab = sched.alpha_bar(state.t);
  const double ab_prev = sched.alpha_bar(state.t - 1);
  const double sqrt_ab = std::sqrt(ab);
  const double sigma = std::sqrt(1.0 - ab);
  const double sqrt_ab_prev = std::sqrt(ab_prev);
  const double sigma_prev = std::sqrt(1.0 - ab_prev);

  LatentState out{Vec(state.x.size()), state.t - 1};
  for (std::size_t i = 0; i < out.x.size(); ++i) {
    const double x0_hat = (state.x[i] - sigma * eps[i]) / sqrt_ab;
    out.x[i] = sqrt_ab_prev * x0_hat + sigma_prev * eps[i];
  }
  return out;
}

Vec fm_euler_step(std::span<const double> x, std::span<const double> v, double dt) {
  if (!(dt > 0.0)) throw ParameterError("dt", "must be positive");
  require_same_size(x.size(), v.size(), "fm_euler_step");
  if (!all_finite(x) || !all_finite(v) || !std::isfinite(dt)) {
    throw NumericError("fm_euler_step: nonfinite input");
  }
  Vec out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - v[i] * dt;
  return out;
}

}  // namespace condpar
