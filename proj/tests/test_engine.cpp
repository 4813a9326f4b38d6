#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "condpar/engine.hpp"
#include "condpar/error.hpp"
#include "support.hpp"

namespace condpar {
namespace {

using testing::calibrated_plan;
using testing::Gen;
using testing::seed_range;

constexpr double kCost = 0.1649;

ExecutionPlan zero_link(ExecutionPlan p) {
  p.link.base_latency = 0.0;
  p.link.message_bytes_latent = 0.0;
  p.link.message_bytes_activation = 0.0;
  return p;
}

// Hand accounting for a run with a nonempty warm-up and equal segment costs:
// partitioned steps cost c + 2 link hops, the warm-up's last x hand-back is not
// waited on, the pipeline fill runs every segment back to back, and each later
// parallel step costs one segment.
double closed_form_latency(const ExecutionPlan& p, int tau1, int k) {
  const int T = p.steps();
  const int n = static_cast<int>(p.segment_fractions.size());
  const double c = p.devices[0].branch_step_cost;
  const double hop = p.link.transfer_time(p.link.message_bytes_latent);
  const double act = p.link.transfer_time(p.link.message_bytes_activation);
  if (k == 0) return T * (c + 2 * hop);
  return (T - k) * (c + 2 * hop) - hop + c + (n - 1) * act + (k - 1) * c / n;
}

void expect_trace_consistent(const ExecutionPlan& p, const RunResult& r) {
  std::map<int, double> last_end;
  for (const auto& b : r.trace.busy) {
    EXPECT_GE(b.start, 0.0);
    EXPECT_GE(b.end, b.start);
    EXPECT_GE(b.start, last_end[b.device] - 1e-12) << "overlap on device " << b.device;
    last_end[b.device] = b.end;
  }
  for (const auto& m : r.trace.messages) {
    EXPECT_GE(m.bytes, 0.0);
    EXPECT_NEAR(m.arrive, m.depart + p.link.base_latency + m.bytes / p.link.bandwidth, 1e-12);
  }
}

TEST(Serial, CalibratedLatency) {
  auto p = calibrated_plan(PlanVariant::kSerial, {0});
  const auto r = run_serial(p);
  EXPECT_NEAR(r.latency_s, 16.49, 1e-9);
  EXPECT_EQ(r.comm_bytes, 0.0);
  EXPECT_EQ(r.speedup, 1.0);
  EXPECT_FALSE(r.tau1.has_value());
  for (const auto& s : r.trace.steps) EXPECT_FALSE(s.stage.has_value());
  p.batching_factor = 1.0;
  EXPECT_NEAR(run_serial(p).latency_s, 8.245, 1e-9);
}

TEST(Serial, SingleStepAndDeterminism) {
  auto p = calibrated_plan(PlanVariant::kSerial, {3, 4});
  auto wl = std::make_shared<Workload>(*p.workload);
  wl->schedule = build_schedule(ScheduleKind::kLinear, 2, 0.1, 0.2);
  p.workload = wl;
  EXPECT_NEAR(run_serial(p).latency_s, 2 * 2 * kCost, 1e-15);
  EXPECT_EQ(run_serial(p).x0, run_serial(p).x0);
}

TEST(Serial, RejectsOtherVariants) {
  EXPECT_THROW(run_serial(calibrated_plan(PlanVariant::kHybrid, {0})), PlanError);
  EXPECT_THROW(run_hybrid(calibrated_plan(PlanVariant::kSerial, {0})), PlanError);
}

TEST(Partition, ZeroLinkHalvesLatency) {
  const auto r = run_full_condition_partition(zero_link(calibrated_plan(PlanVariant::kFullConditionPartition, {0})));
  EXPECT_NEAR(r.latency_s, 8.245, 1e-9);
  EXPECT_NEAR(r.speedup, 2.0, 1e-12);
}

TEST(Partition, CalibratedLinkAndComm) {
  const auto p = calibrated_plan(PlanVariant::kFullConditionPartition, {0});
  const auto r = run_full_condition_partition(p);
  EXPECT_NEAR(r.latency_s, 9.24, 1e-9);
  EXPECT_NEAR(r.speedup, 16.49 / 9.24, 1e-9);
  EXPECT_EQ(r.comm_bytes, 100 * p.link.message_bytes_latent);
  EXPECT_EQ(r.trace.messages.size(), 100u);
  expect_trace_consistent(p, r);
}

TEST(Partition, ExactlyMatchesSerial) {
  const auto seeds = seed_range(32);
  const auto s = run_serial(calibrated_plan(PlanVariant::kSerial, seeds));
  const auto f = run_full_condition_partition(calibrated_plan(PlanVariant::kFullConditionPartition, seeds));
  EXPECT_EQ(s.x0, f.x0);
}

TEST(Partition, DeviceCountChecked) {
  auto p = calibrated_plan(PlanVariant::kFullConditionPartition, {0}, 3);
  EXPECT_THROW(run_full_condition_partition(p), PlanError);
}

TEST(Hybrid, StageScheduleAndCalibratedAccounting) {
  const auto p = calibrated_plan(PlanVariant::kHybrid, seed_range(64));
  const auto r = run_hybrid(p);
  ASSERT_TRUE(r.tau1 && r.tau2);
  EXPECT_EQ(*r.tau1, 15);
  EXPECT_EQ(*r.tau2, 20);
  std::map<Stage, int> counts;
  for (const auto& s : r.trace.steps) counts[*s.stage]++;
  EXPECT_EQ(counts[Stage::kWarmUp], 15);
  EXPECT_EQ(counts[Stage::kParallelism], 5);
  EXPECT_EQ(counts[Stage::kFullyConnecting], 30);
  EXPECT_NEAR(r.latency_s, closed_form_latency(p, 15, 5), 1e-9);
  EXPECT_EQ(r.comm_bytes, 90 * p.link.message_bytes_latent + 5 * p.link.message_bytes_activation);
  EXPECT_NEAR(r.comm_bytes, 0.516e9, 1e-3);
  // No discrepancy is measured while only one branch runs.
  EXPECT_EQ(r.series.size(), 45u);
  for (int step = 16; step <= 20; ++step) EXPECT_FALSE(r.series.contains(50 - step + 1));
  expect_trace_consistent(p, r);
}

TEST(Hybrid, EmptyWindowIsExact) {
  const auto seeds = seed_range(32);
  auto p = calibrated_plan(PlanVariant::kHybrid, seeds);
  p.switching.interval = 0;
  const auto h = run_hybrid(p);
  const auto f = run_full_condition_partition(calibrated_plan(PlanVariant::kFullConditionPartition, seeds));
  EXPECT_EQ(h.x0, f.x0);
  EXPECT_NEAR(h.latency_s, f.latency_s, 1e-12);
  EXPECT_EQ(h.comm_bytes, f.comm_bytes);
}

TEST(Hybrid, FidelityGrowsWithInterval) {
  const auto seeds = seed_range(32);
  const auto serial = run_serial(calibrated_plan(PlanVariant::kSerial, seeds));
  double prev = -1.0;
  double prev_latency = 1e9;
  for (int k : {0, 5, 10, 20, 30}) {
    auto p = calibrated_plan(PlanVariant::kHybrid, seeds);
    p.switching.interval = k;
    const auto r = run_hybrid(p);
    double l1 = 0.0;
    for (std::size_t i = 0; i < seeds.size(); ++i) l1 += l1_distance(r.x0[i], serial.x0[i]);
    l1 /= static_cast<double>(seeds.size());
    EXPECT_GE(l1, prev) << "k " << k;
    EXPECT_LT(r.latency_s, prev_latency) << "k " << k;
    prev = l1;
    prev_latency = r.latency_s;
  }
}

TEST(Hybrid, FlowSamplerEmptyWindowIsExact) {
  auto h = calibrated_plan(PlanVariant::kHybrid, seed_range(8));
  auto wl = std::make_shared<Workload>(*h.workload);
  wl->sampler = SamplerKind::kFlowEuler;
  h.workload = wl;
  h.switching = SwitchConfig{15, 0.1e-3, 40, 0};
  auto s = h;
  s.variant = PlanVariant::kSerial;
  EXPECT_EQ(run_hybrid(h).x0, run_serial(s).x0);
  h.switching.interval = 5;
  const auto r = run_hybrid(h);
  for (const auto& x : r.x0) EXPECT_TRUE(all_finite(x));
  EXPECT_NE(r.x0, run_serial(s).x0);
}

TEST(Batch, TwoDevicesMatchHybrid) {
  const auto b = run_batch_level(calibrated_plan(PlanVariant::kBatchLevel, {7}));
  const auto h = run_hybrid(calibrated_plan(PlanVariant::kHybrid, {7}));
  EXPECT_EQ(b.x0, h.x0);
  EXPECT_EQ(b.latency_s, h.latency_s);
  EXPECT_EQ(b.tau1, h.tau1);
}

TEST(Batch, FourDevicesDoubleThroughput) {
  const auto two = run_batch_level(calibrated_plan(PlanVariant::kBatchLevel, {1, 2}));
  const auto four = run_batch_level(calibrated_plan(PlanVariant::kBatchLevel, {1, 2}, 4));
  const auto single = run_hybrid(calibrated_plan(PlanVariant::kHybrid, {1}));
  EXPECT_EQ(four.x0, two.x0);
  EXPECT_NEAR(four.latency_s, single.latency_s, 1e-12);
  EXPECT_NEAR(two.latency_s, 2 * single.latency_s, 1e-9);
  EXPECT_NEAR(four.speedup, 2 * two.speedup, 1e-9);
}

TEST(Batch, PerSampleResultsMatchSingleRuns) {
  const auto p = calibrated_plan(PlanVariant::kBatchLevel, {4, 5, 6}, 4);
  const auto b = run_batch_level(p);
  for (std::size_t i = 0; i < 3; ++i) {
    auto h = calibrated_plan(PlanVariant::kHybrid, {p.seeds[i]});
    auto wl = std::make_shared<Workload>(*h.workload);
    wl->conditions = {p.workload->conditions[i]};
    h.workload = wl;
    EXPECT_EQ(b.x0[i], run_hybrid(h).x0.front());
  }
}

TEST(Batch, HeterogeneousPairsTakeTheSlowerMakespan) {
  auto p = calibrated_plan(PlanVariant::kBatchLevel, {1, 2}, 4);
  p.devices[2].branch_step_cost = 0.25;
  p.devices[3].branch_step_cost = 0.25;
  const auto b = run_batch_level(p);

  auto fast = calibrated_plan(PlanVariant::kHybrid, {1});
  auto slow = calibrated_plan(PlanVariant::kHybrid, {2});
  slow.devices = {DeviceSpec{0, 0.25}, DeviceSpec{1, 0.25}};
  auto wl = std::make_shared<Workload>(*slow.workload);
  wl->conditions = {p.workload->conditions[1]};
  slow.workload = wl;
  EXPECT_EQ(b.latency_s, std::max(run_hybrid(fast).latency_s, run_hybrid(slow).latency_s));
  EXPECT_GT(run_hybrid(slow).latency_s, run_hybrid(fast).latency_s);
}

TEST(Batch, OddDeviceCountRejected) {
  EXPECT_THROW(run_batch_level(calibrated_plan(PlanVariant::kBatchLevel, {1}, 3)), PlanError);
}

TEST(LayerWise, TwoSegmentsReproduceHybrid) {
  const auto seeds = seed_range(16);
  const auto h = run_hybrid(calibrated_plan(PlanVariant::kHybrid, seeds));
  const auto l = run_layer_wise(calibrated_plan(PlanVariant::kLayerWise, seeds, 2));
  EXPECT_EQ(h.x0, l.x0);
  EXPECT_EQ(h.latency_s, l.latency_s);
  EXPECT_EQ(h.comm_bytes, l.comm_bytes);
}

TEST(LayerWise, SteadyStateStepIsOneSegment) {
  const auto p = zero_link(calibrated_plan(PlanVariant::kLayerWise, {0}, 4));
  const auto r = run_layer_wise(p);
  std::vector<double> starts;
  for (const auto& b : r.trace.busy) {
    if (b.device == 3 && b.work == "segment3") starts.push_back(b.start);
  }
  ASSERT_EQ(starts.size(), 5u);
  for (std::size_t i = 1; i < starts.size(); ++i) {
    EXPECT_NEAR(starts[i] - starts[i - 1], kCost / 4, 1e-12);
  }
}

TEST(LayerWise, LinkedLatencyMatchesClosedForm) {
  for (int n : {3, 4, 6}) {
    const auto p = calibrated_plan(PlanVariant::kLayerWise, {0, 1}, n);
    const auto r = run_layer_wise(p);
    EXPECT_NEAR(r.latency_s, closed_form_latency(p, *r.tau1, 5), 1e-9) << n;
    EXPECT_EQ(r.comm_bytes,
              90 * p.link.message_bytes_latent + 5 * (n - 1) * p.link.message_bytes_activation);
    expect_trace_consistent(p, r);
  }
}

TEST(LayerWise, IdleDevicesOutsideTheWindow) {
  const auto r = run_layer_wise(calibrated_plan(PlanVariant::kLayerWise, {0}, 4));
  for (const auto& b : r.trace.busy) {
    if (b.device >= 2) EXPECT_EQ(b.work.rfind("segment", 0), 0u);
  }
}

TEST(LayerWise, FractionCountChecked) {
  auto p = calibrated_plan(PlanVariant::kLayerWise, {0}, 4);
  p.segment_fractions = {0.5, 0.5};
  EXPECT_THROW(run_layer_wise(p), PlanError);
  p.segment_fractions = {0.5, 0.5, 0.5, -0.5};
  EXPECT_THROW(run_layer_wise(p), ParameterError);
}

TEST(LayerWise, DeeperStalenessStillFinite) {
  auto p = calibrated_plan(PlanVariant::kLayerWise, seed_range(4), 3);
  p.staleness = 2;
  const auto r = run_layer_wise(p);
  for (const auto& x : r.x0) EXPECT_TRUE(all_finite(x));
  p.staleness = 1;
  EXPECT_NE(run_layer_wise(p).x0, r.x0);
}

TEST(EngineProperty, ZeroLinkLatencyOrdering) {
  Gen g(41);
  for (int i = 0; i < 50; ++i) {
    const double c = g.uniform(0.01, 1.0);
    const double f = g.uniform(0.1, 0.9);
    const double rho = g.uniform(1.0, 2.0);
    auto make = [&](PlanVariant v) {
      auto p = zero_link(calibrated_plan(v, {static_cast<std::uint64_t>(i)}));
      for (auto& d : p.devices) d.branch_step_cost = c;
      p.segment_fractions = {f, 1.0 - f};
      p.batching_factor = rho;
      return p;
    };
    const double h = run_hybrid(make(PlanVariant::kHybrid)).latency_s;
    const double fc = run_full_condition_partition(make(PlanVariant::kFullConditionPartition)).latency_s;
    const double s = run_serial(make(PlanVariant::kSerial)).latency_s;
    EXPECT_LE(h, fc + 1e-12);
    EXPECT_LE(fc, s + 1e-12);
  }
}

TEST(EngineProperty, SeedDeterminism) {
  for (auto v : {PlanVariant::kSerial, PlanVariant::kFullConditionPartition, PlanVariant::kHybrid,
                 PlanVariant::kBatchLevel, PlanVariant::kLayerWise}) {
    const auto p = calibrated_plan(v, {9, 10});
    const auto a = run_plan(p);
    const auto b = run_plan(p);
    EXPECT_EQ(a.x0, b.x0);
    EXPECT_EQ(a.latency_s, b.latency_s);
    EXPECT_EQ(a.trace.busy.size(), b.trace.busy.size());
  }
}

TEST(Timeline, AccountsAndShifts) {
  Timeline tl(2, LinkSpec{100.0, 0.5, 10.0, 20.0});
  const double e = tl.compute(0, 1.0, 2.0, 5, "w");
  EXPECT_EQ(e, 3.0);
  EXPECT_EQ(tl.compute(0, 0.0, 1.0, 4, "w"), 4.0);  // waits for the device
  EXPECT_EQ(tl.send(0, 1, MessageKind::kLatent, 10.0, 4.0, 4), 4.6);
  RunTrace t = tl.release();
  EXPECT_EQ(account_comm(t), 10.0);
  t.shift(1.0, 2);
  EXPECT_EQ(t.busy[0].device, 2);
  EXPECT_EQ(t.busy[0].start, 2.0);
  EXPECT_EQ(t.messages[0].dst, 3);
  EXPECT_THROW(Timeline(0, LinkSpec{}), PlanError);
  EXPECT_THROW(Timeline(1, LinkSpec{0.0, 0.0, 1.0, 1.0}), ParameterError);
}

}  // namespace
}  // namespace condpar
