#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "orchestra/agents.hpp"
#include "orchestra/marl.hpp"
#include "orchestra/trace.hpp"

namespace orchestra {

// Top-level run configuration loaded from JSON; unknown keys are errors.
struct RunConfig {
  std::uint64_t seed = 1;
  std::vector<std::uint64_t> seeds;  // replicate seeds for ablate/sweep; defaults to {seed}
  std::string out_dir;
  std::optional<std::string> trace_dir;  // holds machine_events.csv / task_events.csv
  std::optional<WorkloadSpec> workload;
  std::optional<int> n_tenants;  // overrides workload.n_tenants when set
  RoleCounts roles{2, 1, 1};
  TrainConfig train;
  int eval_episodes = 5;
  int convergence_window = 20;
  double convergence_tol = 0.01;
  bool episode_log = false;

  void validate() const;
};

RunConfig run_config_from_json_text(const std::string& text);
RunConfig run_config_from_file(const std::string& path);

// Canonical serialization used to fingerprint checkpoints against config drift.
std::string config_fingerprint(const RunConfig& config);

// Materializes the trace: parses trace_dir when given, otherwise generates
// synthetically from the workload spec (with the n_tenants override applied).
Trace resolve_trace(const RunConfig& config);

inline constexpr const char* kMachineEventsFile = "machine_events.csv";
inline constexpr const char* kTaskEventsFile = "task_events.csv";

enum class SweepAxis { InfoLoss, Tenants, Agents };

std::string to_string(SweepAxis axis);
SweepAxis sweep_axis_from_string(const std::string& s);

struct SweepSpec {
  SweepAxis axis = SweepAxis::InfoLoss;
  std::vector<double> values;
  std::vector<std::uint64_t> seeds;

  void validate() const;
};

std::vector<double> parse_values_list(const std::string& csv_list);

// Splits total agent count into role counts for the agents sweep axis.
RoleCounts role_counts_for_agents(int total_agents);

}  // namespace orchestra
