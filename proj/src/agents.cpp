#include "orchestra/agents.hpp"

#include <algorithm>
#include <cmath>

#include "orchestra/errors.hpp"
#include "orchestra/sim.hpp"

namespace orchestra {

std::string to_string(RoleTag tag) {
  switch (tag) {
    case RoleTag::Scheduler: return "scheduler";
    case RoleTag::Compute: return "compute";
    case RoleTag::Storage: return "storage";
  }
  throw ContractViolation("unhandled role tag");
}

RoleTag role_tag_from_string(const std::string& s) {
  if (s == "scheduler") return RoleTag::Scheduler;
  if (s == "compute") return RoleTag::Compute;
  if (s == "storage") return RoleTag::Storage;
  throw ParseError("unknown role '" + s + "'");
}

std::vector<double> network_input(const Observation& obs) {
  std::vector<double> input;
  input.reserve(obs.features.size() * 2);
  input.insert(input.end(), obs.features.begin(), obs.features.end());
  for (std::uint8_t flag : obs.staleness) input.push_back(static_cast<double>(flag));
  return input;
}

const Role& RoleMap::role_of(int agent_id) const {
  auto it = assignments.find(agent_id);
  if (it == assignments.end()) {
    throw LookupError("unknown agent id " + std::to_string(agent_id));
  }
  return it->second;
}

std::vector<int> RoleMap::agents_in_phase_order() const {
  std::vector<int> out;
  out.reserve(assignments.size());
  out.insert(out.end(), scheduler_agents.begin(), scheduler_agents.end());
  out.insert(out.end(), compute_agents.begin(), compute_agents.end());
  out.insert(out.end(), storage_agents.begin(), storage_agents.end());
  return out;
}

int scheduler_observation_size(int n_machines) { return kSchedulerBaseFeatures + 3 * n_machines; }

int compute_observation_size(int max_owned) { return kComputeBaseFeatures + 4 * max_owned; }

RoleMap assign_roles(const RoleCounts& counts, const std::vector<std::string>& machines) {
  if (counts.scheduler < 1 || counts.compute < 1 || counts.storage < 1) {
    throw ConfigError("each role needs at least one agent (got scheduler=" +
                      std::to_string(counts.scheduler) + ", compute=" + std::to_string(counts.compute) +
                      ", storage=" + std::to_string(counts.storage) + ")");
  }
  if (machines.empty()) throw ConfigError("role assignment needs at least one machine");

  RoleMap map;
  map.machine_order = machines;
  std::sort(map.machine_order.begin(), map.machine_order.end());
  map.machine_order.erase(std::unique(map.machine_order.begin(), map.machine_order.end()),
                          map.machine_order.end());
  const int m = static_cast<int>(map.machine_order.size());

  int next_id = 0;
  for (int i = 0; i < counts.scheduler; ++i) map.scheduler_agents.push_back(next_id++);
  for (int i = 0; i < counts.compute; ++i) map.compute_agents.push_back(next_id++);
  for (int i = 0; i < counts.storage; ++i) map.storage_agents.push_back(next_id++);

  // Machines are dealt round-robin in canonical order, so ownership counts
  // differ by at most one.
  std::map<int, int> owned_count;
  for (int i = 0; i < m; ++i) {
    const int compute_agent = map.compute_agents[static_cast<std::size_t>(i % counts.compute)];
    const int storage_agent = map.storage_agents[static_cast<std::size_t>(i % counts.storage)];
    const auto& machine_id = map.machine_order[static_cast<std::size_t>(i)];
    map.machine_ownership[machine_id] = compute_agent;
    map.storage_ownership[machine_id] = storage_agent;
    map.storage_groups[storage_agent].insert(machine_id);
    owned_count[compute_agent] += 1;
  }
  for (int agent : map.storage_agents) map.storage_groups[agent];  // ensure empty groups exist

  map.max_owned_machines = 0;
  for (const auto& [agent, count] : owned_count) {
    map.max_owned_machines = std::max(map.max_owned_machines, count);
  }

  const Role scheduler_role{RoleTag::Scheduler, m + 1, scheduler_observation_size(m)};
  const Role compute_role{RoleTag::Compute, 2, compute_observation_size(map.max_owned_machines)};
  const Role storage_role{RoleTag::Storage, 3, kStorageFeatures};
  for (int agent : map.scheduler_agents) map.assignments[agent] = scheduler_role;
  for (int agent : map.compute_agents) map.assignments[agent] = compute_role;
  for (int agent : map.storage_agents) map.assignments[agent] = storage_role;
  return map;
}

namespace {

bool fits(double demand, double residual) { return demand <= residual + kCapacityEps; }

}  // namespace

std::vector<std::uint8_t> legal_mask(const ClusterState& state, int agent_id, const RoleMap& role_map) {
  const Role& role = role_map.role_of(agent_id);
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(role.action_space_size), 1);
  if (role.tag != RoleTag::Scheduler) return mask;

  const int m = static_cast<int>(role_map.machine_order.size());
  if (state.pending_queue.empty()) {
    std::fill(mask.begin(), mask.begin() + m, std::uint8_t{0});
    return mask;  // defer stays legal
  }
  const TaskState& head = state.tasks.at(state.pending_queue.front());
  for (int i = 0; i < m; ++i) {
    const MachineState& machine = state.machines[static_cast<std::size_t>(i)];
    const bool ok = machine.present && fits(head.cpu_demand, machine.residual_cpu()) &&
                    fits(head.mem_demand, machine.residual_mem()) &&
                    fits(head.io_demand, machine.residual_io());
    mask[static_cast<std::size_t>(i)] = ok ? 1 : 0;
  }
  return mask;
}

std::vector<std::uint8_t> mask_from_observation(const Observation& obs, const RoleMap& role_map,
                                                int agent_id) {
  const Role& role = role_map.role_of(agent_id);
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(role.action_space_size), 1);
  if (role.tag != RoleTag::Scheduler) return mask;

  const int m = static_cast<int>(role_map.machine_order.size());
  const double queue_len = obs.features[0];
  if (queue_len <= 0.0) {
    std::fill(mask.begin(), mask.begin() + m, std::uint8_t{0});
    return mask;
  }
  const double head_cpu = obs.features[2];
  const double head_mem = obs.features[3];
  const double head_io = obs.features[4];
  for (int i = 0; i < m; ++i) {
    const std::size_t base = kSchedulerBaseFeatures + 3 * static_cast<std::size_t>(i);
    // Absent machines carry residual -1, which no demand fits.
    const bool ok = fits(head_cpu, obs.features[base]) && fits(head_mem, obs.features[base + 1]) &&
                    fits(head_io, obs.features[base + 2]);
    mask[static_cast<std::size_t>(i)] = ok ? 1 : 0;
  }
  return mask;
}

SampledAction sample_action(const NetParams& policy, const Observation& obs,
                            const std::vector<std::uint8_t>& mask, Rng& rng) {
  const auto input = network_input(obs);
  const auto logits = forward_actor(policy, input);
  if (logits.size() != mask.size()) {
    throw ContractViolation("policy output size does not match action mask");
  }
  const auto probs = masked_softmax(logits, mask);
  const double u = rng.uniform01();
  double cum = 0.0;
  int chosen = -1;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (!mask[i]) continue;
    cum += probs[i];
    if (u < cum) {
      chosen = static_cast<int>(i);
      break;
    }
  }
  if (chosen < 0) {  // numerical slack: fall back to the last legal action
    for (std::size_t i = probs.size(); i-- > 0;) {
      if (mask[i]) {
        chosen = static_cast<int>(i);
        break;
      }
    }
  }
  if (chosen < 0) throw ContractViolation("sample_action requires at least one legal action");
  return SampledAction{Action{obs.role, chosen}, std::log(probs[static_cast<std::size_t>(chosen)])};
}

}  // namespace orchestra
