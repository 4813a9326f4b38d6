#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "condpar/engine.hpp"

namespace condpar {

/// Everything a CLI run needs. Parsed from a single JSON document; a document
/// may name a `preset` and override any subset of its fields.
struct ExperimentConfig {
  std::string preset;
  ScheduleSpec schedule;
  GaussianMixture mixture = GaussianMixture::default_testbed();
  std::vector<Condition> conditions;
  SamplerKind sampler = SamplerKind::kDdim;
  double guidance_w = 3.0;
  SwitchConfig switching;
  std::vector<DeviceSpec> devices;
  std::vector<double> segment_fractions{0.5, 0.5};
  LinkSpec link;
  double batching_factor = 2.0;
  int staleness = 1;
  PlanVariant variant = PlanVariant::kHybrid;
  std::vector<std::uint64_t> seeds;
  // Peak for the PSNR analog; when absent the largest |x| of the compared vectors.
  std::optional<double> psnr_peak;
  std::string output_dir = "out";

  void validate() const;
};

std::vector<std::string> preset_names();
ExperimentConfig preset(std::string_view name);

ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& cfg);

std::shared_ptr<const Workload> make_workload(const ExperimentConfig& cfg);
ExecutionPlan make_plan(const ExperimentConfig& cfg);
ExecutionPlan make_plan(const ExperimentConfig& cfg, PlanVariant variant);

/// Comparison of a run against the serial baseline on the same seeds.
struct Metrics {
  std::string variant;
  std::size_t samples = 0;
  double latency_s = 0.0;
  double serial_latency_s = 0.0;
  double speedup = 0.0;
  double comm_bytes = 0.0;
  double fidelity_l1 = 0.0;
  double fidelity_l2 = 0.0;
  // Empty when the outputs match exactly (reported as "inf").
  std::optional<double> psnr_analog;
  std::optional<int> tau1;
  std::optional<int> tau2;
};

/// Mean per-sample L1/L2 distance and a PSNR analog over the whole batch.
Metrics compute_metrics(const RunResult& run, const RunResult& serial, PlanVariant variant,
                        std::optional<double> psnr_peak);

nlohmann::json to_json(const Metrics& m);

}  // namespace condpar
