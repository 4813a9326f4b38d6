#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "condpar/schedule.hpp"
#include "condpar/vec.hpp"

namespace condpar {

/// Diagonal-covariance Gaussian mixture standing in for the data distribution.
/// Its scores are exact, so it serves as the denoiser oracle.
class GaussianMixture {
 public:
  GaussianMixture(Vec weights, std::vector<Vec> means, std::vector<Vec> vars);

  /// d = 8, K = 4. Two pairs of components sit at +3 and -3 on the first axis;
  /// within each pair a tight component (variance 0.6) is nested inside a unit
  /// one. The nesting keeps conditional and unconditional scores apart at low
  /// noise, which is what makes the discrepancy curve rise again near t = 0.
  static GaussianMixture default_testbed();

  std::size_t components() const { return weights_.size(); }
  std::size_t dim() const { return means_.front().size(); }
  const Vec& weights() const { return weights_; }
  const std::vector<Vec>& means() const { return means_; }
  const std::vector<Vec>& vars() const { return vars_; }

 private:
  Vec weights_;
  std::vector<Vec> means_;
  std::vector<Vec> vars_;
};

/// Either the unconditional branch or a nonempty subset of mixture
/// components (zero-based indices, kept sorted and unique).
class Condition {
 public:
  static Condition unconditional() { return Condition(); }
  static Condition subset(std::vector<std::size_t> components);

  bool is_unconditional() const { return components_.empty(); }
  const std::vector<std::size_t>& components() const { return components_; }

  /// Throws ParameterError if an index is out of range or the subset carries
  /// zero prior mass.
  void validate_for(const GaussianMixture& gm) const;

  friend bool operator==(const Condition&, const Condition&) = default;

 private:
  Condition() = default;
  std::vector<std::size_t> components_;
};

/// Default prompt-analog conditions for the testbed: one per component.
std::vector<Condition> default_conditions(const GaussianMixture& gm);

struct ScoreEval {
  Vec score;
  double log_density = 0.0;
};

/// Affine corruption x_t = scale * x_0 + std * e. The DDIM path uses
/// (sqrt(alpha_bar_t), sigma_t); the flow-matching path x_0 + t e uses (1, t).
struct NoiseLevel {
  double scale = 1.0;
  double std = 0.0;
};

NoiseLevel ddim_level(const NoiseSchedule& sched, int t);
NoiseLevel flow_level(double t);

GaussianMixture noised_mixture(const GaussianMixture& gm, const NoiseLevel& level);
GaussianMixture noised_mixture(const GaussianMixture& gm, const NoiseSchedule& sched,
                               int t);

/// Score and log density of an (already noised) mixture. A conditional
/// evaluation uses the sub-mixture with renormalized weights.
ScoreEval mixture_score(const GaussianMixture& noised, const Condition& cond,
                        std::span<const double> x);

ScoreEval score(const GaussianMixture& gm, const Condition& cond,
                const NoiseSchedule& sched, std::span<const double> x, int t);

/// -sigma_t * score
Vec eps_prediction(const GaussianMixture& gm, const Condition& cond,
                   const NoiseSchedule& sched, std::span<const double> x, int t);

/// grad log p(c | x_t) = s_c - s_u
Vec conditional_grad(const GaussianMixture& gm, const Condition& subset,
                     const NoiseSchedule& sched, std::span<const double> x, int t);

/// Minimizer of the flow-matching loss for the path x_t = x_0 + t e:
/// (x - E[x_0 | x_t = x]) / t, with the posterior mean in closed form.
Vec fm_velocity(const GaussianMixture& gm, const Condition& cond,
                std::span<const double> x, double t);

/// Deterministic draw from the (sub-)mixture.
Vec sample_x0(const GaussianMixture& gm, const Condition& cond, std::uint64_t seed);

}  // namespace condpar
