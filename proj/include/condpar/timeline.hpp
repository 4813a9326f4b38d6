#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "condpar/discrepancy.hpp"

namespace condpar {

/// One virtual device. `branch_step_cost` is the simulated time, in seconds,
/// to evaluate one branch of the denoiser for one step.
struct DeviceSpec {
  int id = 0;
  double branch_step_cost = 0.1649;
};

/// Affine point-to-point link: base_latency + bytes / bandwidth. No contention.
struct LinkSpec {
  double bandwidth = 1.575e10;
  double base_latency = 0.0;
  double message_bytes_latent = 131072.0;
  double message_bytes_activation = 100.0e6;

  double transfer_time(double bytes) const { return base_latency + bytes / bandwidth; }
  void validate() const;
};

enum class MessageKind { kLatent, kNoise, kActivation };

std::string_view to_string(MessageKind kind);

struct BusyInterval {
  int device = 0;
  int t = 0;
  std::string work;
  double start = 0.0;
  double end = 0.0;
};

struct Message {
  int src = 0;
  int dst = 0;
  int t = 0;
  MessageKind kind = MessageKind::kLatent;
  double bytes = 0.0;
  double depart = 0.0;
  double arrive = 0.0;
};

/// Stage is empty for plans without adaptive switching.
struct StepRecord {
  int t = 0;
  int step = 0;
  std::optional<Stage> stage;
};

struct RunTrace {
  std::vector<StepRecord> steps;
  std::vector<BusyInterval> busy;
  std::vector<Message> messages;

  /// Moves every event later by `dt` and renumbers devices by `device_offset`.
  void shift(double dt, int device_offset);
  void append(const RunTrace& other);
};

/// Sum of message bytes in a trace.
double account_comm(const RunTrace& trace);

/// Virtual clock for a set of devices joined by identical links. Work on a
/// device starts once both the device is free and its input is ready; the
/// resulting intervals are recorded in the trace.
class Timeline {
 public:
  Timeline(int devices, LinkSpec link);

  int devices() const { return static_cast<int>(free_at_.size()); }
  double free_at(int device) const { return free_at_.at(device); }

  /// Returns the end time of the work.
  double compute(int device, double ready, double duration, int t, std::string work);

  /// Returns the arrival time at `dst`.
  double send(int src, int dst, MessageKind kind, double bytes, double depart, int t);

  void mark_step(int t, int step, std::optional<Stage> stage);

  double makespan() const { return makespan_; }
  const RunTrace& trace() const { return trace_; }
  RunTrace release() { return std::move(trace_); }

 private:
  std::vector<double> free_at_;
  LinkSpec link_;
  double makespan_ = 0.0;
  RunTrace trace_;
};

}  // namespace condpar
