#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "orchestra/policy.hpp"
#include "orchestra/rng.hpp"

namespace orchestra {

struct ClusterState;  // sim.hpp

enum class RoleTag { Scheduler, Compute, Storage };

std::string to_string(RoleTag tag);
RoleTag role_tag_from_string(const std::string& s);

// All three role tags in phase order (scheduler -> compute -> storage).
inline constexpr RoleTag kRoleOrder[] = {RoleTag::Scheduler, RoleTag::Compute, RoleTag::Storage};

// Storage agents pick an io throttle; progress rate equals the level.
inline constexpr double kThrottleLevels[] = {0.5, 0.75, 1.0};
inline constexpr int kComputeActionAdmit = 0;
inline constexpr int kComputeActionDefer = 1;

struct Role {
  RoleTag tag;
  int action_space_size = 0;
  int observation_size = 0;
};

struct Action {
  RoleTag role;
  int index = 0;
};

struct Observation {
  RoleTag role;
  std::vector<double> features;
  std::vector<std::uint8_t> staleness;
};

// Concatenated (features, staleness) vector fed to the networks.
std::vector<double> network_input(const Observation& obs);

struct RoleCounts {
  int compute = 0;
  int storage = 0;
  int scheduler = 0;

  int total() const { return compute + storage + scheduler; }
};

// Agent ids are dense integers: schedulers first, then compute, then storage.
struct RoleMap {
  std::map<int, Role> assignments;
  std::map<std::string, int> machine_ownership;   // machine -> compute agent
  std::map<int, std::set<std::string>> storage_groups;
  std::map<std::string, int> storage_ownership;   // machine -> storage agent
  std::vector<int> scheduler_agents;
  std::vector<int> compute_agents;
  std::vector<int> storage_agents;
  std::vector<std::string> machine_order;  // canonical order used by observations/actions
  int max_owned_machines = 0;

  const Role& role_of(int agent_id) const;
  RoleTag tag_of(int agent_id) const { return role_of(agent_id).tag; }
  std::vector<int> agents_in_phase_order() const;
};

// Observation layouts (schema version 1). Residuals of absent machines are
// encoded as -1 so a fit check against them always fails.
//   scheduler: [queue_len/total_tasks, head_wait/horizon, head_cpu, head_mem,
//               head_io, clock/horizon] ++ per machine [res_cpu, res_mem, res_io]
//   compute:   [owned/machines, mean_cpu_util, mean_mem_util, mean_io_util,
//               queue_len/total_tasks, clock/horizon] ++ per owned slot
//               [res_cpu, res_mem, res_io, resident/total_tasks]
//   storage:   [governed/machines, mean_io_util, mean_cpu_util,
//               governed_running/total_tasks, throttle, clock/horizon]
inline constexpr int kSchedulerBaseFeatures = 6;
inline constexpr int kComputeBaseFeatures = 6;
inline constexpr int kStorageFeatures = 6;

int scheduler_observation_size(int n_machines);
int compute_observation_size(int max_owned);

RoleMap assign_roles(const RoleCounts& counts, const std::vector<std::string>& machines);

std::vector<std::uint8_t> legal_mask(const ClusterState& state, int agent_id, const RoleMap& role_map);

// Mask derived from the agent's (possibly stale) observation instead of the
// true state. Identical to legal_mask when nothing is masked out.
std::vector<std::uint8_t> mask_from_observation(const Observation& obs, const RoleMap& role_map,
                                                int agent_id);

struct SampledAction {
  Action action;
  double log_prob = 0.0;
};

SampledAction sample_action(const NetParams& policy, const Observation& obs,
                            const std::vector<std::uint8_t>& mask, Rng& rng);

}  // namespace orchestra
