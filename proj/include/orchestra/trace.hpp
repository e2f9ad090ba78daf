#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "orchestra/rng.hpp"

namespace orchestra {

enum class MachineEventKind { Add, Remove, Update };
enum class TaskEventKind { Submit, Finish, Kill };

const char* to_string(MachineEventKind k);
const char* to_string(TaskEventKind k);

struct MachineEvent {
  std::int64_t timestamp = 0;  // whole seconds
  std::string machine_id;
  MachineEventKind kind = MachineEventKind::Add;
  // capacities as fractions of a reference machine
  double cpu_capacity = 0, mem_capacity = 0, io_capacity = 0;

  bool operator==(const MachineEvent&) const = default;
};

struct TaskEvent {
  std::int64_t timestamp = 0;
  std::string job_id;
  std::string task_id;
  std::string tenant_id;
  TaskEventKind kind = TaskEventKind::Submit;
  double cpu_demand = 0, mem_demand = 0, io_demand = 0;  // fractions in [0,1]
  // Present on synthetic SUBMIT rows; derived from the SUBMIT->FINISH gap when
  // a real trace carries the terminal event. Absent means the task never
  // completes inside the trace window.
  std::optional<double> duration;

  bool operator==(const TaskEvent&) const = default;
};

struct Trace {
  std::vector<MachineEvent> machine_events;  // sorted by timestamp
  std::vector<TaskEvent> task_events;        // sorted by timestamp
  std::int64_t horizon = 0;                  // >= max event timestamp

  bool operator==(const Trace&) const = default;
};

// Parametric scalar distribution used by the workload generator.
struct DistSpec {
  enum class Kind { Constant, Uniform, Exponential };
  Kind kind = Kind::Constant;
  double value = 0;           // Constant
  double low = 0, high = 0;   // Uniform
  double mean = 0;            // Exponential

  double sample(Rng& rng) const;
};

struct WorkloadSpec {
  int n_machines = 1;
  DistSpec machine_capacity_distribution;
  double task_arrival_rate = 1.0;  // tasks per second (Poisson process)
  int n_tasks = 1;
  DistSpec demand_cpu, demand_mem, demand_io;
  DistSpec duration_distribution;
  int n_tenants = 1;
  double tenant_skew = 0.0;  // Zipf exponent

  void validate() const;  // throws ValidationError
};

struct TraceSummary {
  int n_tasks = 0;
  int n_machines = 0;
  int n_tenants = 0;
  double total_cpu_demand = 0, total_mem_demand = 0, total_io_demand = 0;
  std::int64_t horizon = 0;
  std::map<std::string, int> tasks_per_tenant;
};

inline constexpr const char* kMachineEventsHeader =
    "timestamp,machine_id,kind,cpu_capacity,mem_capacity,io_capacity";
inline constexpr const char* kTaskEventsHeader =
    "timestamp,job_id,task_id,tenant_id,kind,cpu_demand,mem_demand,io_demand,duration";

// Parses the two event streams, validates them and returns a sorted trace.
// Durations are derived for tasks that carry both SUBMIT and a terminal event.
Trace parse_trace(std::istream& machine_stream, std::istream& task_stream);
Trace parse_trace_files(const std::string& machine_path, const std::string& task_path);

void serialize_trace(const Trace& trace, std::ostream& machine_out, std::ostream& task_out);
void serialize_trace_files(const Trace& trace, const std::string& machine_path,
                           const std::string& task_path);

// Deterministic in (spec, seed). Machines are added at t=0; task arrivals
// follow a Poisson process; tenants are Zipf-skewed by rank.
Trace generate_synthetic(const WorkloadSpec& spec, std::uint64_t seed);

TraceSummary trace_stats(const Trace& trace);

// JSON I/O for WorkloadSpec; unknown keys are rejected.
WorkloadSpec workload_from_json_text(const std::string& text);
WorkloadSpec workload_from_json_file(const std::string& path);

}  // namespace orchestra
