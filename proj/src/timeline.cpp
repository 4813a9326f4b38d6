#include "condpar/timeline.hpp"

#include <algorithm>
#include <cmath>

#include "condpar/error.hpp"

namespace condpar {

void LinkSpec::validate() const {
  if (!(bandwidth > 0.0)) throw ParameterError("bandwidth", "must be positive");
  if (!(base_latency >= 0.0)) throw ParameterError("base_latency", "must be nonnegative");
  if (!(message_bytes_latent >= 0.0)) {
    throw ParameterError("message_bytes_latent", "must be nonnegative");
  }
  if (!(message_bytes_activation >= 0.0)) {
    throw ParameterError("message_bytes_activation", "must be nonnegative");
  }
}

std::string_view to_string(MessageKind kind) {
  switch (kind) {
    case MessageKind::kLatent: return "latent";
    case MessageKind::kNoise: return "noise";
    case MessageKind::kActivation: return "activation";
  }
  return "unknown";
}

void RunTrace::shift(double dt, int device_offset) {
  for (auto& b : busy) {
    b.start += dt;
    b.end += dt;
    b.device += device_offset;
  }
  for (auto& m : messages) {
    m.depart += dt;
    m.arrive += dt;
    m.src += device_offset;
    m.dst += device_offset;
  }
}

void RunTrace::append(const RunTrace& other) {
  steps.insert(steps.end(), other.steps.begin(), other.steps.end());
  busy.insert(busy.end(), other.busy.begin(), other.busy.end());
  messages.insert(messages.end(), other.messages.begin(), other.messages.end());
}

double account_comm(const RunTrace& trace) {
  double total = 0.0;
  for (const auto& m : trace.messages) total += m.bytes;
  return total;
}

Timeline::Timeline(int devices, LinkSpec link) : free_at_(devices, 0.0), link_(link) {
  if (devices < 1) throw PlanError("timeline needs at least one device");
  link_.validate();
}

double Timeline::compute(int device, double ready, double duration, int t,
                         std::string work) {
  if (!(duration >= 0.0)) throw NumericError("negative compute duration");
  const double start = std::max(ready, free_at_.at(device));
  const double end = start + duration;
  free_at_[device] = end;
  makespan_ = std::max(makespan_, end);
  trace_.busy.push_back(BusyInterval{device, t, std::move(work), start, end});
  return end;
}

double Timeline::send(int src, int dst, MessageKind kind, double bytes, double depart,
                      int t) {
  const double arrive = depart + link_.transfer_time(bytes);
  makespan_ = std::max(makespan_, arrive);
  trace_.messages.push_back(Message{src, dst, t, kind, bytes, depart, arrive});
  return arrive;
}

void Timeline::mark_step(int t, int step, std::optional<Stage> stage) {
  trace_.steps.push_back(StepRecord{t, step, stage});
}

}  // namespace condpar
