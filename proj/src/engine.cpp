#include "condpar/engine.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <random>
#include <stdexcept>
#include <string>

#include "condpar/error.hpp"

namespace condpar {

std::string_view to_string(PlanVariant variant) {
  switch (variant) {
    case PlanVariant::kSerial: return "serial";
    case PlanVariant::kFullConditionPartition: return "full_condition_partition";
    case PlanVariant::kHybrid: return "hybrid";
    case PlanVariant::kBatchLevel: return "batch_level";
    case PlanVariant::kLayerWise: return "layer_wise";
  }
  return "unknown";
}

PlanVariant parse_plan_variant(std::string_view name) {
  for (auto v : {PlanVariant::kSerial, PlanVariant::kFullConditionPartition,
                 PlanVariant::kHybrid, PlanVariant::kBatchLevel, PlanVariant::kLayerWise}) {
    if (name == to_string(v)) return v;
  }
  throw ParameterError("variant", "unknown plan variant '" + std::string(name) + "'");
}

std::string_view to_string(SamplerKind kind) {
  return kind == SamplerKind::kDdim ? "ddim" : "flow_euler";
}

SamplerKind parse_sampler_kind(std::string_view name) {
  if (name == "ddim") return SamplerKind::kDdim;
  if (name == "flow_euler" || name == "flow") return SamplerKind::kFlowEuler;
  throw ParameterError("sampler", "unknown sampler '" + std::string(name) + "'");
}

void Workload::validate() const {
  if (conditions.empty()) throw ParameterError("conditions", "at least one condition required");
  for (const auto& c : conditions) c.validate_for(model);
}

namespace {

bool is_adaptive(PlanVariant v) {
  return v == PlanVariant::kHybrid || v == PlanVariant::kBatchLevel ||
         v == PlanVariant::kLayerWise;
}

void require_devices(const ExecutionPlan& plan, bool ok, const std::string& what) {
  if (!ok) {
    throw PlanError(std::string(to_string(plan.variant)) + " plan " + what + ", got " +
                    std::to_string(plan.devices.size()) + " devices");
  }
}

}  // namespace

void ExecutionPlan::validate() const {
  if (!workload) throw PlanError("plan has no workload");
  workload->validate();
  if (devices.empty()) throw PlanError("plan needs at least one device");
  for (const auto& d : devices) {
    if (!(d.branch_step_cost > 0.0) || !std::isfinite(d.branch_step_cost)) {
      throw ParameterError("branch_step_cost", "must be positive and finite");
    }
  }
  link.validate();
  if (!(batching_factor >= 1.0 && batching_factor <= 2.0)) {
    throw ParameterError("batching_factor", "must lie in [1, 2]");
  }
  if (staleness < 1) throw ParameterError("staleness", "must be at least 1");
  if (seeds.empty()) throw ParameterError("seeds", "at least one seed required");

  const std::size_t n = devices.size();
  switch (variant) {
    case PlanVariant::kSerial: break;
    case PlanVariant::kFullConditionPartition:
    case PlanVariant::kHybrid:
      require_devices(*this, n == 2, "requires exactly 2 devices");
      break;
    case PlanVariant::kBatchLevel:
      require_devices(*this, n >= 2 && n % 2 == 0, "requires an even device count");
      break;
    case PlanVariant::kLayerWise:
      require_devices(*this, n >= 2, "requires at least 2 devices");
      break;
  }
  if (is_adaptive(variant)) {
    switching.validate(steps());
    const std::size_t segments = variant == PlanVariant::kLayerWise ? n : 2;
    if (segment_fractions.size() != segments) {
      throw PlanError("segment_fractions has " + std::to_string(segment_fractions.size()) +
                      " entries, expected " + std::to_string(segments));
    }
    double sum = 0.0;
    for (double f : segment_fractions) {
      if (!(f > 0.0)) throw ParameterError("segment_fractions", "entries must be positive");
      sum += f;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw ParameterError("segment_fractions", "must sum to 1");
    }
  }
}

Vec initial_latent(const Workload& workload, std::uint64_t seed) {
  const std::size_t d = workload.model.dim();
  Vec x(d);
  std::mt19937_64 rng(seed ^ 0x5851f42d4c957f2dULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& v : x) v = normal(rng);
  if (workload.sampler == SamplerKind::kFlowEuler) {
    const Vec x0 = sample_x0(workload.model, Condition::unconditional(), seed);
    for (std::size_t j = 0; j < d; ++j) x[j] += x0[j];
  }
  return x;
}

NoiseLevel sampler_level(const Workload& workload, int t) {
  if (workload.sampler == SamplerKind::kDdim) return ddim_level(workload.schedule, t);
  return flow_level(static_cast<double>(t) / workload.schedule.steps());
}

namespace {

// The analytic denoiser as each sampler consumes it: an epsilon prediction for
// DDIM, a velocity for the flow sampler.
class Denoiser {
 public:
  explicit Denoiser(const Workload& w) : w_(w) {}

  void set_step(int t) {
    t_ = t;
    if (w_.sampler == SamplerKind::kDdim) {
      noised_.emplace(noised_mixture(w_.model, w_.schedule, t));
      sigma_ = w_.schedule.sigma(t);
    }
  }

  Vec predict(const Condition& cond, std::span<const double> x) const {
    if (w_.sampler == SamplerKind::kFlowEuler) {
      return fm_velocity(w_.model, cond, x, static_cast<double>(t_) / w_.schedule.steps());
    }
    Vec s = mixture_score(*noised_, cond, x).score;
    for (double& v : s) v *= -sigma_;
    return s;
  }

  Vec advance(const Vec& x, std::span<const double> pred) const {
    if (w_.sampler == SamplerKind::kFlowEuler) {
      return fm_euler_step(x, pred, 1.0 / w_.schedule.steps());
    }
    return ddim_step(LatentState{x, t_}, pred, w_.schedule).x;
  }

 private:
  const Workload& w_;
  int t_ = 0;
  std::optional<GaussianMixture> noised_;
  double sigma_ = 0.0;
};

enum class Mode { kSerial, kPartition, kAdaptive };

std::optional<double> batch_rel_mae(std::span<const Vec> c, std::span<const Vec> u) {
  try {
    return rel_mae(c, u);
  } catch (const DegenerateInputError&) {
    return std::nullopt;
  }
}

RunResult execute(const ExecutionPlan& plan, Mode mode, const StepObserver& observer) {
  plan.validate();
  const Workload& w = *plan.workload;
  const int T = w.schedule.steps();
  const std::size_t batch = plan.seeds.size();
  const int pipeline = mode == Mode::kAdaptive ? static_cast<int>(plan.segment_fractions.size()) : 0;
  const int timeline_devices = mode == Mode::kSerial ? 1 : std::max(2, pipeline);
  const std::size_t keep =
      mode == Mode::kAdaptive ? static_cast<std::size_t>((pipeline - 1) * plan.staleness) : 0;

  std::vector<Condition> cond;
  std::vector<Vec> x;
  for (std::size_t b = 0; b < batch; ++b) {
    cond.push_back(w.conditions[b % w.conditions.size()]);
    x.push_back(initial_latent(w, plan.seeds[b]));
  }
  const Condition uncond = Condition::unconditional();

  Denoiser denoiser(w);
  Timeline tl(timeline_devices, plan.link);
  RunResult result;
  StageState state = initial_stage_state(T);
  std::deque<std::vector<Vec>> history;  // history[i] holds the latents at t + 1 + i

  const double latent_bytes = plan.link.message_bytes_latent;
  const double act_bytes = plan.link.message_bytes_activation;
  double ready0 = 0.0;
  double ready1 = 0.0;
  int parallel_steps = 0;
  std::vector<double> act_arrival(std::max(pipeline, 1), 0.0);

  for (int t = T; t >= 1; --t) {
    denoiser.set_step(t);
    const int step = step_index(T, t);
    std::optional<Stage> stage;
    if (mode == Mode::kAdaptive) stage = planned_stage(state, plan.switching, t);
    std::vector<Vec> next(batch);

    if (stage != Stage::kParallelism) {
      if (parallel_steps > 0) {
        // Leaving the pipeline: both partition devices resume once all segments drain.
        double barrier = 0.0;
        for (int d = 0; d < timeline_devices; ++d) barrier = std::max(barrier, tl.free_at(d));
        ready0 = ready1 = barrier;
        parallel_steps = 0;
      }
      std::vector<Vec> pc(batch);
      std::vector<Vec> pu(batch);
      for (std::size_t b = 0; b < batch; ++b) {
        pc[b] = denoiser.predict(cond[b], x[b]);
        pu[b] = denoiser.predict(uncond, x[b]);
      }
      const auto m = batch_rel_mae(pc, pu);
      if (m) result.series.record(t, *m);
      if (mode == Mode::kAdaptive) {
        state = update_controller(state, result.series, t, plan.switching);
        if (state.stage == Stage::kParallelism) {
          throw std::logic_error("controller entered Parallelism on a measured step");
        }
        stage = state.stage;
      }
      if (observer) observer(StepObservation{t, stage, x, pc, pu, m.value_or(0.0)});
      for (std::size_t b = 0; b < batch; ++b) {
        next[b] = denoiser.advance(x[b], cfg_combine(pc[b], pu[b], plan.guidance));
      }

      if (mode == Mode::kSerial) {
        ready0 = tl.compute(0, ready0, plan.batching_factor * plan.devices[0].branch_step_cost,
                            t, "serial");
      } else {
        const double end_c = tl.compute(0, ready0, plan.devices[0].branch_step_cost, t, "cond");
        const double end_u = tl.compute(1, ready1, plan.devices[1].branch_step_cost, t, "uncond");
        const double noise_in = tl.send(1, 0, MessageKind::kNoise, latent_bytes, end_u, t);
        ready0 = std::max(end_c, noise_in);
        ready1 = tl.send(0, 1, MessageKind::kLatent, latent_bytes, ready0, t);
      }
    } else {
      state = update_controller(state, result.series, t, plan.switching);
      if (state.stage != Stage::kParallelism) {
        throw std::logic_error("controller left Parallelism earlier than planned");
      }
      for (std::size_t b = 0; b < batch; ++b) {
        Vec acc(x[b].size(), 0.0);
        for (int d = 0; d < pipeline; ++d) {
          const std::size_t lag = static_cast<std::size_t>(d * plan.staleness);
          const Vec& src =
              (lag == 0 || history.empty()) ? x[b] : history[std::min(lag, history.size()) - 1][b];
          const Vec p = denoiser.predict(cond[b], src);
          const double f = plan.segment_fractions[d];
          for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += f * p[j];
        }
        next[b] = denoiser.advance(x[b], acc);
      }

      std::vector<double> arrivals(pipeline, 0.0);
      double fresh = ready0;
      for (int d = 0; d < pipeline; ++d) {
        double need = 0.0;
        if (parallel_steps == 0) {
          need = fresh;  // pipeline fill: each segment waits for this step's hand-off
        } else if (d > 0) {
          need = act_arrival[d];  // steady state: previous step's activation
        }
        const double cost = plan.segment_fractions[d] * plan.devices[d].branch_step_cost;
        const double end = tl.compute(d, need, cost, t, "segment" + std::to_string(d));
        if (d + 1 < pipeline) {
          fresh = tl.send(d, d + 1, MessageKind::kActivation, act_bytes, end, t);
          arrivals[d + 1] = fresh;
        }
      }
      act_arrival = std::move(arrivals);
      ++parallel_steps;
    }

    tl.mark_step(t, step, stage);
    if (keep > 0) {
      history.push_front(std::move(x));
      if (history.size() > keep) history.pop_back();
    }
    x = std::move(next);
  }

  result.x0 = std::move(x);
  result.samples = batch;
  result.latency_s = tl.makespan();
  result.trace = tl.release();
  result.comm_bytes = account_comm(result.trace);
  result.serial_latency_s = serial_latency(plan);
  result.speedup = result.serial_latency_s / result.latency_s;
  result.tau1 = state.tau1;
  result.tau2 = state.tau2;
  return result;
}

void require_variant(const ExecutionPlan& plan, PlanVariant v) {
  if (plan.variant != v) {
    throw PlanError("expected a " + std::string(to_string(v)) + " plan, got " +
                    std::string(to_string(plan.variant)));
  }
}

}  // namespace

double serial_latency(const ExecutionPlan& plan) {
  if (plan.devices.empty()) throw PlanError("plan needs at least one device");
  Timeline tl(1, plan.link);
  double ready = 0.0;
  const double cost = plan.batching_factor * plan.devices[0].branch_step_cost;
  for (int t = plan.steps(); t >= 1; --t) ready = tl.compute(0, ready, cost, t, "serial");
  return tl.makespan();
}

RunResult run_serial(const ExecutionPlan& plan, const StepObserver& observer) {
  require_variant(plan, PlanVariant::kSerial);
  return execute(plan, Mode::kSerial, observer);
}

RunResult run_full_condition_partition(const ExecutionPlan& plan,
                                       const StepObserver& observer) {
  require_variant(plan, PlanVariant::kFullConditionPartition);
  return execute(plan, Mode::kPartition, observer);
}

RunResult run_hybrid(const ExecutionPlan& plan, const StepObserver& observer) {
  require_variant(plan, PlanVariant::kHybrid);
  return execute(plan, Mode::kAdaptive, observer);
}

RunResult run_layer_wise(const ExecutionPlan& plan, const StepObserver& observer) {
  require_variant(plan, PlanVariant::kLayerWise);
  return execute(plan, Mode::kAdaptive, observer);
}

RunResult run_batch_level(const ExecutionPlan& plan) {
  require_variant(plan, PlanVariant::kBatchLevel);
  plan.validate();
  const std::size_t pairs = plan.devices.size() / 2;
  std::vector<double> clock(pairs, 0.0);

  RunResult out;
  for (std::size_t i = 0; i < plan.seeds.size(); ++i) {
    const std::size_t p = i % pairs;
    ExecutionPlan single = plan;
    single.variant = PlanVariant::kHybrid;
    single.devices = {plan.devices[2 * p], plan.devices[2 * p + 1]};
    single.seeds = {plan.seeds[i]};
    // Keep the sample's condition aligned with its index in the full batch.
    auto wl = std::make_shared<Workload>(*plan.workload);
    wl->conditions = {plan.workload->conditions[i % plan.workload->conditions.size()]};
    single.workload = std::move(wl);

    RunResult r = execute(single, Mode::kAdaptive, {});
    r.trace.shift(clock[p], static_cast<int>(2 * p));
    clock[p] += r.latency_s;
    out.trace.append(r.trace);
    out.x0.push_back(std::move(r.x0.front()));
    if (i == 0) {
      out.tau1 = r.tau1;
      out.tau2 = r.tau2;
      out.series = std::move(r.series);
    }
  }
  out.samples = plan.seeds.size();
  out.latency_s = *std::max_element(clock.begin(), clock.end());
  out.comm_bytes = account_comm(out.trace);
  out.serial_latency_s = serial_latency(plan);
  out.speedup = static_cast<double>(out.samples) * out.serial_latency_s / out.latency_s;
  return out;
}

RunResult run_plan(const ExecutionPlan& plan, const StepObserver& observer) {
  switch (plan.variant) {
    case PlanVariant::kSerial: return run_serial(plan, observer);
    case PlanVariant::kFullConditionPartition:
      return run_full_condition_partition(plan, observer);
    case PlanVariant::kHybrid: return run_hybrid(plan, observer);
    case PlanVariant::kBatchLevel: return run_batch_level(plan);
    case PlanVariant::kLayerWise: return run_layer_wise(plan, observer);
  }
  throw PlanError("unknown plan variant");
}

}  // namespace condpar
