#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "condpar/engine.hpp"
#include "condpar/mixture.hpp"
#include "condpar/schedule.hpp"

namespace condpar::testing {

// Seeded generator for the hand-rolled property tests.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(rng_); }

  Vec vec(std::size_t d, double lo, double hi) {
    Vec v(d);
    for (double& x : v) x = uniform(lo, hi);
    return v;
  }

  Vec normal_vec(std::size_t d, double scale = 1.0) {
    Vec v(d);
    for (double& x : v) x = scale * normal();
    return v;
  }

  GaussianMixture mixture(std::size_t k, std::size_t d) {
    Vec w = vec(k, 0.2, 1.0);
    double sum = 0.0;
    for (double x : w) sum += x;
    for (double& x : w) x /= sum;
    // Renormalize exactly enough for the 1e-12 simplex check.
    w.back() = 1.0;
    for (std::size_t i = 0; i + 1 < k; ++i) w.back() -= w[i];
    std::vector<Vec> means, vars;
    for (std::size_t i = 0; i < k; ++i) {
      means.push_back(vec(d, -3.0, 3.0));
      vars.push_back(vec(d, 0.2, 2.0));
    }
    return GaussianMixture(w, means, vars);
  }

  Condition subset(std::size_t k) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < k; ++i) {
      if (uniform(0.0, 1.0) < 0.5) idx.push_back(i);
    }
    if (idx.empty()) idx.push_back(static_cast<std::size_t>(integer(0, static_cast<int>(k) - 1)));
    return Condition::subset(idx);
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
}

inline double max_rel_err(const Vec& a, const Vec& b) {
  double scale = 0.0;
  double diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    scale = std::max({scale, std::abs(a[i]), std::abs(b[i])});
    diff = std::max(diff, std::abs(a[i] - b[i]));
  }
  return scale > 0.0 ? diff / scale : diff;
}

// Two identical devices joined by the calibrated link used throughout the tests.
inline ExecutionPlan calibrated_plan(PlanVariant variant, std::vector<std::uint64_t> seeds,
                                     int devices = 2) {
  auto gm = GaussianMixture::default_testbed();
  auto conds = default_conditions(gm);
  ExecutionPlan p;
  p.variant = variant;
  p.workload = std::make_shared<const Workload>(
      Workload{gm, NoiseSchedule::build(ScheduleSpec{}), conds, SamplerKind::kDdim});
  p.guidance = GuidanceParams(3.0);
  p.switching = SwitchConfig{12, 0.4e-3, 15, 5};
  for (int i = 0; i < devices; ++i) p.devices.push_back(DeviceSpec{i, 0.1649});
  p.segment_fractions = std::vector<double>(variant == PlanVariant::kLayerWise ? devices : 2,
                                            1.0 / (variant == PlanVariant::kLayerWise ? devices : 2));
  p.link.bandwidth = 1.575e10;
  p.link.message_bytes_latent = 131072.0;
  p.link.base_latency = 0.00995 - 131072.0 / 1.575e10;
  p.link.message_bytes_activation = (0.516e9 - 90.0 * 131072.0) / 5.0;
  p.seeds = std::move(seeds);
  return p;
}

inline std::vector<std::uint64_t> seed_range(std::uint64_t n) {
  std::vector<std::uint64_t> s(n);
  for (std::uint64_t i = 0; i < n; ++i) s[i] = i;
  return s;
}

}  // namespace condpar::testing
