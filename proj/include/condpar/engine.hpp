#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "condpar/discrepancy.hpp"
#include "condpar/mixture.hpp"
#include "condpar/schedule.hpp"
#include "condpar/timeline.hpp"

namespace condpar {

enum class PlanVariant { kSerial, kFullConditionPartition, kHybrid, kBatchLevel, kLayerWise };
enum class SamplerKind { kDdim, kFlowEuler };

std::string_view to_string(PlanVariant variant);
PlanVariant parse_plan_variant(std::string_view name);
std::string_view to_string(SamplerKind kind);
SamplerKind parse_sampler_kind(std::string_view name);

/// The data distribution, the schedule and the prompt-analog conditions.
/// Sample i of a run is conditioned on conditions[i % conditions.size()].
struct Workload {
  GaussianMixture model;
  NoiseSchedule schedule;
  std::vector<Condition> conditions;
  SamplerKind sampler = SamplerKind::kDdim;

  void validate() const;
};

struct ExecutionPlan {
  PlanVariant variant = PlanVariant::kSerial;
  std::shared_ptr<const Workload> workload;
  GuidanceParams guidance;
  SwitchConfig switching;
  std::vector<DeviceSpec> devices;
  // Share of the denoiser owned by each pipeline segment during Parallelism.
  std::vector<double> segment_fractions{0.5, 0.5};
  LinkSpec link;
  // 1 = both CFG branches batched into one pass, 2 = evaluated back to back.
  double batching_factor = 2.0;
  // Steps of latent staleness added per pipeline hop.
  int staleness = 1;
  std::vector<std::uint64_t> seeds{0};

  int steps() const { return workload->schedule.steps(); }
  void validate() const;
};

/// What the engine saw on one step where both branches were evaluated.
struct StepObservation {
  int t = 0;
  std::optional<Stage> stage;
  std::span<const Vec> x;
  std::span<const Vec> pred_c;
  std::span<const Vec> pred_u;
  double rel_mae = 0.0;
};

using StepObserver = std::function<void(const StepObservation&)>;

struct RunResult {
  std::vector<Vec> x0;
  double latency_s = 0.0;
  double serial_latency_s = 0.0;
  double comm_bytes = 0.0;
  double speedup = 0.0;
  // Samples produced per run; the batch-level plan reports its total.
  std::size_t samples = 0;
  RunTrace trace;
  std::optional<int> tau1;
  std::optional<int> tau2;
  DiscrepancySeries series;
};

/// Starting latent at t = T for a seed. DDIM starts from N(0, I); the flow
/// sampler starts from an exact draw of its t = 1 marginal, x0 + e.
Vec initial_latent(const Workload& workload, std::uint64_t seed);

/// Noise level the sampler's prediction is taken at for timestep t.
NoiseLevel sampler_level(const Workload& workload, int t);

/// Latency of the serial plan built from `plan`'s first device and costs.
double serial_latency(const ExecutionPlan& plan);

RunResult run_serial(const ExecutionPlan& plan, const StepObserver& observer = {});
RunResult run_full_condition_partition(const ExecutionPlan& plan,
                                       const StepObserver& observer = {});
RunResult run_hybrid(const ExecutionPlan& plan, const StepObserver& observer = {});
RunResult run_batch_level(const ExecutionPlan& plan);
RunResult run_layer_wise(const ExecutionPlan& plan, const StepObserver& observer = {});

/// Dispatches on plan.variant.
RunResult run_plan(const ExecutionPlan& plan, const StepObserver& observer = {});

}  // namespace condpar
