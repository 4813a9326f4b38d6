#include "condpar/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>

#include "condpar/error.hpp"

namespace condpar {

namespace {

constexpr double kWeightTolerance = 1e-12;

double log_gaussian(std::span<const double> x, const Vec& mean, const Vec& var) {
  double acc = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double d = x[j] - mean[j];
    acc += d * d / var[j] + std::log(2.0 * std::numbers::pi * var[j]);
  }
  return -0.5 * acc;
}

// Component indices and log weights for a branch, renormalized over the
// subset for conditional evaluation. Zero-weight components are dropped.
struct Branch {
  std::vector<std::size_t> index;
  std::vector<double> log_weight;
};

Branch branch_of(const GaussianMixture& gm, const Condition& cond) {
  Branch b;
  if (cond.is_unconditional()) {
    for (std::size_t i = 0; i < gm.components(); ++i) b.index.push_back(i);
  } else {
    cond.validate_for(gm);
    b.index = cond.components();
  }
  double mass = 0.0;
  for (std::size_t i : b.index) mass += gm.weights()[i];
  std::vector<std::size_t> kept;
  for (std::size_t i : b.index) {
    if (gm.weights()[i] > 0.0) {
      kept.push_back(i);
      b.log_weight.push_back(std::log(gm.weights()[i] / mass));
    }
  }
  b.index = std::move(kept);
  return b;
}

// Normalized responsibilities from log terms, via log-sum-exp.
double normalize_log(std::vector<double>& terms) {
  const double peak = *std::max_element(terms.begin(), terms.end());
  double total = 0.0;
  for (double v : terms) total += std::exp(v - peak);
  const double lse = peak + std::log(total);
  for (double& v : terms) v = std::exp(v - lse);
  return lse;
}

void require_dim(const GaussianMixture& gm, std::size_t n, const char* op) {
  if (n != gm.dim()) {
    throw ShapeError(std::string(op) + ": point has " + std::to_string(n) +
                     " entries, mixture dimension is " + std::to_string(gm.dim()));
  }
}

}  // namespace

GaussianMixture::GaussianMixture(Vec weights, std::vector<Vec> means,
                                 std::vector<Vec> vars)
    : weights_(std::move(weights)), means_(std::move(means)), vars_(std::move(vars)) {
  if (weights_.empty()) throw ParameterError("weights", "need at least one component");
  if (means_.size() != weights_.size()) {
    throw ParameterError("means", "expected one mean per component");
  }
  if (vars_.size() != weights_.size()) {
    throw ParameterError("vars", "expected one variance vector per component");
  }
  const std::size_t d = means_.front().size();
  if (d == 0) throw ParameterError("means", "dimension must be positive");
  double total = 0.0;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    if (!(weights_[i] >= 0.0) || !std::isfinite(weights_[i])) {
      throw ParameterError("weights", "entries must be finite and nonnegative");
    }
    total += weights_[i];
    if (means_[i].size() != d) throw ParameterError("means", "ragged mean vectors");
    if (vars_[i].size() != d) throw ParameterError("vars", "ragged variance vectors");
    if (!all_finite(means_[i])) throw ParameterError("means", "entries must be finite");
    for (double v : vars_[i]) {
      if (!(v > 0.0) || !std::isfinite(v)) {
        throw ParameterError("vars", "variances must be finite and positive");
      }
    }
  }
  if (std::abs(total - 1.0) > kWeightTolerance) {
    throw ParameterError("weights", "must sum to 1");
  }
}

GaussianMixture GaussianMixture::default_testbed() {
  constexpr std::size_t d = 8;
  constexpr double offset = 3.0;
  constexpr double tight = 0.6;
  std::vector<Vec> means(4, Vec(d, 0.0));
  std::vector<Vec> vars(4, Vec(d, 1.0));
  means[0][0] = offset;
  means[1][0] = offset;
  means[2][0] = -offset;
  means[3][0] = -offset;
  vars[0] = Vec(d, tight);
  vars[2] = Vec(d, tight);
  return GaussianMixture(Vec(4, 0.25), std::move(means), std::move(vars));
}

Condition Condition::subset(std::vector<std::size_t> components) {
  if (components.empty()) {
    throw ParameterError("condition", "conditional subset must be nonempty");
  }
  std::sort(components.begin(), components.end());
  components.erase(std::unique(components.begin(), components.end()), components.end());
  Condition c;
  c.components_ = std::move(components);
  return c;
}

void Condition::validate_for(const GaussianMixture& gm) const {
  double mass = 0.0;
  for (std::size_t i : components_) {
    if (i >= gm.components()) {
      throw ParameterError("condition", "component index " + std::to_string(i) +
                                            " out of range");
    }
    mass += gm.weights()[i];
  }
  if (!is_unconditional() && !(mass > 0.0)) {
    throw ParameterError("condition", "subset carries zero prior mass");
  }
}

std::vector<Condition> default_conditions(const GaussianMixture& gm) {
  std::vector<Condition> out;
  for (std::size_t i = 0; i < gm.components(); ++i) out.push_back(Condition::subset({i}));
  return out;
}

NoiseLevel ddim_level(const NoiseSchedule& sched, int t) {
  return NoiseLevel{std::sqrt(sched.alpha_bar(t)), sched.sigma(t)};
}

NoiseLevel flow_level(double t) { return NoiseLevel{1.0, t}; }

GaussianMixture noised_mixture(const GaussianMixture& gm, const NoiseLevel& level) {
  const double s2 = level.scale * level.scale;
  const double n2 = level.std * level.std;
  std::vector<Vec> means = gm.means();
  std::vector<Vec> vars = gm.vars();
  for (std::size_t i = 0; i < gm.components(); ++i) {
    for (std::size_t j = 0; j < gm.dim(); ++j) {
      means[i][j] *= level.scale;
      vars[i][j] = s2 * vars[i][j] + n2;
    }
  }
  return GaussianMixture(gm.weights(), std::move(means), std::move(vars));
}

GaussianMixture noised_mixture(const GaussianMixture& gm, const NoiseSchedule& sched,
                               int t) {
  return noised_mixture(gm, ddim_level(sched, t));
}

ScoreEval mixture_score(const GaussianMixture& noised, const Condition& cond,
                        std::span<const double> x) {
  require_dim(noised, x.size(), "score");
  const Branch b = branch_of(noised, cond);
  std::vector<double> resp(b.index.size());
  for (std::size_t k = 0; k < b.index.size(); ++k) {
    const std::size_t i = b.index[k];
    resp[k] = b.log_weight[k] + log_gaussian(x, noised.means()[i], noised.vars()[i]);
  }
  ScoreEval out;
  out.log_density = normalize_log(resp);
  out.score.assign(x.size(), 0.0);
  for (std::size_t k = 0; k < b.index.size(); ++k) {
    const Vec& m = noised.means()[b.index[k]];
    const Vec& v = noised.vars()[b.index[k]];
    for (std::size_t j = 0; j < x.size(); ++j) {
      out.score[j] -= resp[k] * (x[j] - m[j]) / v[j];
    }
  }
  return out;
}

ScoreEval score(const GaussianMixture& gm, const Condition& cond,
                const NoiseSchedule& sched, std::span<const double> x, int t) {
  return mixture_score(noised_mixture(gm, sched, t), cond, x);
}

Vec eps_prediction(const GaussianMixture& gm, const Condition& cond,
                   const NoiseSchedule& sched, std::span<const double> x, int t) {
  if (t < 1) throw StepUnderflowError("eps_prediction: requires t >= 1");
  Vec s = score(gm, cond, sched, x, t).score;
  const double sigma = sched.sigma(t);
  for (double& v : s) v *= -sigma;
  return s;
}

Vec conditional_grad(const GaussianMixture& gm, const Condition& subset,
                     const NoiseSchedule& sched, std::span<const double> x, int t) {
  const GaussianMixture noised = noised_mixture(gm, sched, t);
  Vec sc = mixture_score(noised, subset, x).score;
  const Vec su = mixture_score(noised, Condition::unconditional(), x).score;
  for (std::size_t j = 0; j < sc.size(); ++j) sc[j] -= su[j];
  return sc;
}

Vec fm_velocity(const GaussianMixture& gm, const Condition& cond,
                std::span<const double> x, double t) {
  if (!(t > 0.0) || !std::isfinite(t)) {
    throw ParameterError("t", "flow time must be positive");
  }
  require_dim(gm, x.size(), "fm_velocity");
  const double t2 = t * t;
  const Branch b = branch_of(gm, cond);

  std::vector<double> resp(b.index.size());
  for (std::size_t k = 0; k < b.index.size(); ++k) {
    const std::size_t i = b.index[k];
    Vec marginal_var = gm.vars()[i];
    for (double& v : marginal_var) v += t2;
    resp[k] = b.log_weight[k] + log_gaussian(x, gm.means()[i], marginal_var);
  }
  normalize_log(resp);

  Vec posterior_mean(x.size(), 0.0);
  for (std::size_t k = 0; k < b.index.size(); ++k) {
    const Vec& m = gm.means()[b.index[k]];
    const Vec& v = gm.vars()[b.index[k]];
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double shrink = v[j] / (v[j] + t2);
      posterior_mean[j] += resp[k] * (m[j] + shrink * (x[j] - m[j]));
    }
  }
  Vec out(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) out[j] = (x[j] - posterior_mean[j]) / t;
  return out;
}

Vec sample_x0(const GaussianMixture& gm, const Condition& cond, std::uint64_t seed) {
  const Branch b = branch_of(gm, cond);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  const double u = uniform(rng);
  std::size_t pick = b.index.back();
  double cumulative = 0.0;
  for (std::size_t k = 0; k < b.index.size(); ++k) {
    cumulative += std::exp(b.log_weight[k]);
    if (u < cumulative) {
      pick = b.index[k];
      break;
    }
  }
  Vec out(gm.dim());
  for (std::size_t j = 0; j < out.size(); ++j) {
    out[j] = gm.means()[pick][j] + std::sqrt(gm.vars()[pick][j]) * normal(rng);
  }
  return out;
}

}  // namespace condpar
