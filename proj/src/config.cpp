#include "condpar/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "condpar/error.hpp"

namespace condpar {

using nlohmann::json;

namespace {

// Calibration shared by the presets. The per-step link residual makes the
// two-device condition partition land on 9.24 s at T = 50 and c = 0.1649 s.
constexpr double kLinkBandwidth = 1.575e10;
constexpr double kLinkResidual = 0.00995;

ExperimentConfig base_preset(double cost, double latent_bytes, double total_comm_bytes,
                             SwitchConfig sw) {
  ExperimentConfig c;
  c.conditions = default_conditions(c.mixture);
  c.switching = sw;
  c.devices = {DeviceSpec{0, cost}, DeviceSpec{1, cost}};
  c.link.bandwidth = kLinkBandwidth;
  c.link.message_bytes_latent = latent_bytes;
  c.link.base_latency = kLinkResidual - latent_bytes / kLinkBandwidth;
  // Hybrid traffic with the preset's own window: 2 latent messages on each of
  // the T - k measured steps plus one activation per parallel step.
  const int T = c.schedule.steps;
  c.link.message_bytes_activation =
      (total_comm_bytes - 2.0 * (T - sw.interval) * latent_bytes) / sw.interval;
  for (std::uint64_t s = 0; s < 64; ++s) c.seeds.push_back(s);
  return c;
}

template <class T>
T read(const json& obj, const char* key, const std::string& field) {
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ParameterError(field, e.what());
  }
}

template <class T>
void overlay(const json& obj, const char* key, const std::string& field, T& out) {
  if (obj.contains(key)) out = read<T>(obj, key, field);
}

void require_object(const json& j, const std::string& field) {
  if (!j.is_object()) throw ParameterError(field, "expected a JSON object");
}

void reject_unknown(const json& obj, std::initializer_list<std::string_view> known,
                    const std::string& where) {
  for (const auto& [key, _] : obj.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ParameterError(where.empty() ? key : where + "." + key, "unknown key");
    }
  }
}

std::vector<Condition> parse_conditions(const json& j) {
  if (!j.is_array()) throw ParameterError("conditions", "expected an array of index lists");
  std::vector<Condition> out;
  for (const auto& entry : j) {
    try {
      out.push_back(Condition::subset(entry.get<std::vector<std::size_t>>()));
    } catch (const json::exception& e) {
      throw ParameterError("conditions", e.what());
    }
  }
  return out;
}

std::vector<std::uint64_t> parse_seeds(const json& j) {
  if (j.is_object()) {
    reject_unknown(j, {"start", "count"}, "seeds");
    const auto start = read<std::uint64_t>(j, "start", "seeds.start");
    const auto count = read<std::uint64_t>(j, "count", "seeds.count");
    std::vector<std::uint64_t> out;
    for (std::uint64_t i = 0; i < count; ++i) out.push_back(start + i);
    return out;
  }
  try {
    return j.get<std::vector<std::uint64_t>>();
  } catch (const json::exception& e) {
    throw ParameterError("seeds", e.what());
  }
}

std::vector<DeviceSpec> parse_devices(const json& j) {
  std::vector<DeviceSpec> out;
  if (j.is_object()) {
    reject_unknown(j, {"count", "branch_step_cost"}, "devices");
    const int count = read<int>(j, "count", "devices.count");
    const double cost = read<double>(j, "branch_step_cost", "devices.branch_step_cost");
    for (int i = 0; i < count; ++i) out.push_back(DeviceSpec{i, cost});
    return out;
  }
  if (!j.is_array()) throw ParameterError("devices", "expected an array or {count, branch_step_cost}");
  for (std::size_t i = 0; i < j.size(); ++i) {
    const json& d = j[i];
    require_object(d, "devices");
    reject_unknown(d, {"id", "branch_step_cost"}, "devices");
    DeviceSpec spec{static_cast<int>(i), 0.0};
    overlay(d, "id", "devices.id", spec.id);
    spec.branch_step_cost = read<double>(d, "branch_step_cost", "devices.branch_step_cost");
    out.push_back(spec);
  }
  return out;
}

GaussianMixture parse_mixture(const json& j) {
  if (j.is_string()) {
    if (j.get<std::string>() == "default") return GaussianMixture::default_testbed();
    throw ParameterError("mixture", "only \"default\" names a built-in mixture");
  }
  require_object(j, "mixture");
  reject_unknown(j, {"weights", "means", "vars"}, "mixture");
  return GaussianMixture(read<Vec>(j, "weights", "mixture.weights"),
                         read<std::vector<Vec>>(j, "means", "mixture.means"),
                         read<std::vector<Vec>>(j, "vars", "mixture.vars"));
}

}  // namespace

void ExperimentConfig::validate() const {
  make_plan(*this).validate();
}

std::vector<std::string> preset_names() { return {"sdxl-like", "sd3-like"}; }

ExperimentConfig preset(std::string_view name) {
  if (name == "sdxl-like") {
    ExperimentConfig c = base_preset(0.1649, 131072.0, 0.516e9, SwitchConfig{12, 0.4e-3, 15, 5});
    c.preset = name;
    return c;
  }
  if (name == "sd3-like") {
    ExperimentConfig c = base_preset(0.1936, 524288.0, 0.189e9, SwitchConfig{15, 0.1e-3, 40, 5});
    c.preset = name;
    c.sampler = SamplerKind::kFlowEuler;
    return c;
  }
  throw ParameterError("preset", "unknown preset '" + std::string(name) + "'");
}

ExperimentConfig parse_config(const json& doc) {
  require_object(doc, "config");
  reject_unknown(doc,
                 {"preset", "schedule", "mixture", "conditions", "sampler", "guidance",
                  "switch", "devices", "segment_fractions", "link", "batching_factor",
                  "staleness", "variant", "seeds", "psnr_peak", "output_dir"},
                 "");

  ExperimentConfig c = preset(doc.contains("preset") ? read<std::string>(doc, "preset", "preset")
                                                     : std::string("sdxl-like"));

  if (doc.contains("schedule")) {
    const json& s = doc["schedule"];
    require_object(s, "schedule");
    reject_unknown(s, {"kind", "T", "beta_start", "beta_end"}, "schedule");
    if (s.contains("kind")) {
      c.schedule.kind = parse_schedule_kind(read<std::string>(s, "kind", "schedule.kind"));
    }
    overlay(s, "T", "schedule.T", c.schedule.steps);
    overlay(s, "beta_start", "schedule.beta_start", c.schedule.beta_start);
    overlay(s, "beta_end", "schedule.beta_end", c.schedule.beta_end);
  }
  if (doc.contains("mixture")) {
    c.mixture = parse_mixture(doc["mixture"]);
    c.conditions = default_conditions(c.mixture);
  }
  if (doc.contains("conditions")) c.conditions = parse_conditions(doc["conditions"]);
  if (doc.contains("sampler")) {
    c.sampler = parse_sampler_kind(read<std::string>(doc, "sampler", "sampler"));
  }
  if (doc.contains("guidance")) {
    const json& g = doc["guidance"];
    require_object(g, "guidance");
    reject_unknown(g, {"w"}, "guidance");
    overlay(g, "w", "guidance.w", c.guidance_w);
  }
  if (doc.contains("switch")) {
    const json& s = doc["switch"];
    require_object(s, "switch");
    reject_unknown(s, {"L", "g_slope", "tau_cap", "k"}, "switch");
    overlay(s, "L", "switch.L", c.switching.window);
    overlay(s, "g_slope", "switch.g_slope", c.switching.slope_threshold);
    overlay(s, "tau_cap", "switch.tau_cap", c.switching.tau_cap);
    overlay(s, "k", "switch.k", c.switching.interval);
  }
  if (doc.contains("devices")) c.devices = parse_devices(doc["devices"]);
  overlay(doc, "segment_fractions", "segment_fractions", c.segment_fractions);
  if (doc.contains("link")) {
    const json& l = doc["link"];
    require_object(l, "link");
    reject_unknown(l, {"bandwidth", "base_latency", "message_bytes_latent",
                       "message_bytes_activation"}, "link");
    overlay(l, "bandwidth", "link.bandwidth", c.link.bandwidth);
    overlay(l, "base_latency", "link.base_latency", c.link.base_latency);
    overlay(l, "message_bytes_latent", "link.message_bytes_latent", c.link.message_bytes_latent);
    overlay(l, "message_bytes_activation", "link.message_bytes_activation",
            c.link.message_bytes_activation);
  }
  overlay(doc, "batching_factor", "batching_factor", c.batching_factor);
  overlay(doc, "staleness", "staleness", c.staleness);
  if (doc.contains("variant")) {
    c.variant = parse_plan_variant(read<std::string>(doc, "variant", "variant"));
  }
  if (doc.contains("seeds")) c.seeds = parse_seeds(doc["seeds"]);
  if (doc.contains("psnr_peak") && !doc["psnr_peak"].is_null()) {
    c.psnr_peak = read<double>(doc, "psnr_peak", "psnr_peak");
    if (!(*c.psnr_peak > 0.0)) throw ParameterError("psnr_peak", "must be positive");
  }
  overlay(doc, "output_dir", "output_dir", c.output_dir);

  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string(), "cannot open config");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return parse_config(doc);
}

json to_json(const ExperimentConfig& c) {
  json conditions = json::array();
  for (const auto& cond : c.conditions) conditions.push_back(cond.components());
  json devices = json::array();
  for (const auto& d : c.devices) {
    devices.push_back({{"id", d.id}, {"branch_step_cost", d.branch_step_cost}});
  }
  json doc = {
      {"schedule",
       {{"kind", std::string(to_string(c.schedule.kind))},
        {"T", c.schedule.steps},
        {"beta_start", c.schedule.beta_start},
        {"beta_end", c.schedule.beta_end}}},
      {"mixture",
       {{"weights", c.mixture.weights()},
        {"means", c.mixture.means()},
        {"vars", c.mixture.vars()}}},
      {"conditions", conditions},
      {"sampler", std::string(to_string(c.sampler))},
      {"guidance", {{"w", c.guidance_w}}},
      {"switch",
       {{"L", c.switching.window},
        {"g_slope", c.switching.slope_threshold},
        {"tau_cap", c.switching.tau_cap},
        {"k", c.switching.interval}}},
      {"devices", devices},
      {"segment_fractions", c.segment_fractions},
      {"link",
       {{"bandwidth", c.link.bandwidth},
        {"base_latency", c.link.base_latency},
        {"message_bytes_latent", c.link.message_bytes_latent},
        {"message_bytes_activation", c.link.message_bytes_activation}}},
      {"batching_factor", c.batching_factor},
      {"staleness", c.staleness},
      {"variant", std::string(to_string(c.variant))},
      {"seeds", c.seeds},
      {"psnr_peak", c.psnr_peak ? json(*c.psnr_peak) : json(nullptr)},
      {"output_dir", c.output_dir},
  };
  if (!c.preset.empty()) doc["preset"] = c.preset;
  return doc;
}

std::shared_ptr<const Workload> make_workload(const ExperimentConfig& c) {
  return std::make_shared<const Workload>(Workload{
      c.mixture, NoiseSchedule::build(c.schedule), c.conditions, c.sampler});
}

ExecutionPlan make_plan(const ExperimentConfig& c) { return make_plan(c, c.variant); }

ExecutionPlan make_plan(const ExperimentConfig& c, PlanVariant variant) {
  ExecutionPlan p;
  p.variant = variant;
  p.workload = make_workload(c);
  p.guidance = GuidanceParams(c.guidance_w);
  p.switching = c.switching;
  p.devices = c.devices;
  p.segment_fractions = c.segment_fractions;
  p.link = c.link;
  p.batching_factor = c.batching_factor;
  p.staleness = c.staleness;
  p.seeds = c.seeds;
  return p;
}

Metrics compute_metrics(const RunResult& run, const RunResult& serial, PlanVariant variant,
                        std::optional<double> psnr_peak) {
  if (run.x0.size() != serial.x0.size() || run.x0.empty()) {
    throw ShapeError("compute_metrics: run and baseline sample counts differ");
  }
  Metrics m;
  m.variant = std::string(to_string(variant));
  m.samples = run.samples;
  m.latency_s = run.latency_s;
  m.serial_latency_s = run.serial_latency_s;
  m.speedup = run.speedup;
  m.comm_bytes = run.comm_bytes;
  m.tau1 = run.tau1;
  m.tau2 = run.tau2;

  double peak = 0.0;
  double sq = 0.0;
  std::size_t count = 0;
  for (std::size_t b = 0; b < run.x0.size(); ++b) {
    const Vec& a = run.x0[b];
    const Vec& s = serial.x0[b];
    if (a.size() != s.size()) throw ShapeError("compute_metrics: sample shapes differ");
    m.fidelity_l1 += l1_distance(a, s);
    m.fidelity_l2 += l2_distance(a, s);
    for (std::size_t j = 0; j < a.size(); ++j) {
      peak = std::max({peak, std::abs(a[j]), std::abs(s[j])});
      sq += (a[j] - s[j]) * (a[j] - s[j]);
    }
    count += a.size();
  }
  const double n = static_cast<double>(run.x0.size());
  m.fidelity_l1 /= n;
  m.fidelity_l2 /= n;
  const double mse = sq / static_cast<double>(count);
  if (psnr_peak) peak = *psnr_peak;
  if (mse > 0.0) m.psnr_analog = 10.0 * std::log10(peak * peak / mse);
  return m;
}

json to_json(const Metrics& m) {
  auto opt = [](const std::optional<int>& v) { return v ? json(*v) : json(nullptr); };
  return {
      {"variant", m.variant},
      {"samples", m.samples},
      {"latency_s", m.latency_s},
      {"serial_latency_s", m.serial_latency_s},
      {"speedup", m.speedup},
      {"comm_bytes", m.comm_bytes},
      {"fidelity_l1", m.fidelity_l1},
      {"fidelity_l2", m.fidelity_l2},
      {"psnr_analog", m.psnr_analog ? json(*m.psnr_analog) : json("inf")},
      {"tau1", opt(m.tau1)},
      {"tau2", opt(m.tau2)},
  };
}

}  // namespace condpar
