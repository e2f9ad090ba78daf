#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "orchestra/agents.hpp"
#include "orchestra/rng.hpp"
#include "orchestra/trace.hpp"

namespace orchestra {

// Tolerance for capacity fit checks on accumulated doubles.
inline constexpr double kCapacityEps = 1e-9;

enum class TaskStatus { Pending, Running, Finished };

std::string to_string(TaskStatus status);

struct MachineState {
  std::string machine_id;
  bool present = false;
  double cpu_capacity = 0.0, mem_capacity = 0.0, io_capacity = 0.0;
  double cpu_allocated = 0.0, mem_allocated = 0.0, io_allocated = 0.0;
  std::set<std::string> resident_tasks;
  int role_owner = -1;     // compute agent governing this machine
  int storage_owner = -1;  // storage agent whose throttle applies

  double residual_cpu() const { return cpu_capacity - cpu_allocated; }
  double residual_mem() const { return mem_capacity - mem_allocated; }
  double residual_io() const { return io_capacity - io_allocated; }
};

struct TaskState {
  std::string task_id;
  std::string tenant_id;
  double cpu_demand = 0.0, mem_demand = 0.0, io_demand = 0.0;
  double submit_time = 0.0;
  std::optional<double> place_time;
  std::optional<double> finish_time;
  double remaining_work = 0.0;
  TaskStatus status = TaskStatus::Pending;
  std::string machine_id;  // empty unless RUNNING
};

struct StepOutcome {
  std::map<int, double> local_rewards;
  double global_signal = 0.0;
  std::vector<std::pair<std::string, std::string>> placed;  // (task, machine)
  std::vector<int> invalid_actions;
  bool done = false;
};

struct EpisodeLogRow {
  double clock = 0.0;
  std::string event;
  std::string task_id;
  std::string machine_id;
  int agent_id = -1;
};

struct ClusterState {
  double clock = 0.0;
  std::vector<MachineState> machines;  // canonical order, absent entries included
  std::map<std::string, std::size_t> machine_index;
  std::map<std::string, TaskState> tasks;
  std::deque<std::string> pending_queue;
  std::vector<std::string> tenants;
  RoleMap role_map;
  Trace trace;
  std::size_t machine_cursor = 0;  // next un-injected trace events
  std::size_t task_cursor = 0;
  int total_tasks = 0;  // SUBMIT count over the whole trace
  double horizon = 0.0;
  std::map<int, double> storage_throttle;            // storage agent -> level
  std::map<int, std::vector<double>> last_observed;  // per-agent masking memory
  Rng rng_stream{0};
  std::vector<double> latency_samples;
  bool log_enabled = false;
  std::vector<EpisodeLogRow> episode_log;

  const MachineState& machine(const std::string& id) const;
  MachineState& machine(const std::string& id);
  bool has_machine(const std::string& id) const;
  int running_count() const;
  int finished_count() const;
  double cluster_cpu_utilization() const;
};

struct PlaceResult {
  bool placed = false;
  std::string reason;  // empty on success; "capacity" / "absent" on rejection
};

ClusterState init_state(const Trace& trace, const RoleMap& role_map, std::uint64_t seed);

PlaceResult place_task(ClusterState& state, const std::string& task_id, const std::string& machine_id);

StepOutcome step(ClusterState& state, const std::map<int, Action>& joint_action);

Observation observe_local(ClusterState& state, int agent_id, double info_loss_rate, Rng& rng);

std::vector<double> observe_global(const ClusterState& state);
int global_state_size(const RoleMap& role_map, const Trace& trace);

void write_episode_log(const ClusterState& state, const std::string& path);

}  // namespace orchestra
