#include "orchestra/sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "orchestra/csv.hpp"
#include "orchestra/errors.hpp"

namespace orchestra {

namespace {

constexpr std::uint64_t kSimStreamSalt = 0x5157;

bool fits(double demand, double residual) { return demand <= residual + kCapacityEps; }

double safe_div(double num, double den) { return den > 0.0 ? num / den : 0.0; }

double machine_cpu_util(const MachineState& m) { return safe_div(m.cpu_allocated, m.cpu_capacity); }
double machine_mem_util(const MachineState& m) { return safe_div(m.mem_allocated, m.mem_capacity); }
double machine_io_util(const MachineState& m) { return safe_div(m.io_allocated, m.io_capacity); }

void release_allocation(MachineState& machine, const TaskState& task) {
  machine.cpu_allocated = std::max(0.0, machine.cpu_allocated - task.cpu_demand);
  machine.mem_allocated = std::max(0.0, machine.mem_allocated - task.mem_demand);
  machine.io_allocated = std::max(0.0, machine.io_allocated - task.io_demand);
  machine.resident_tasks.erase(task.task_id);
}

void log_event(ClusterState& state, const std::string& event, const std::string& task_id,
               const std::string& machine_id, int agent_id) {
  if (!state.log_enabled) return;
  state.episode_log.push_back(EpisodeLogRow{state.clock, event, task_id, machine_id, agent_id});
}

// Bounced/evicted tasks go back to the queue front, preserving their order.
void requeue_front(ClusterState& state, const std::vector<std::string>& task_ids) {
  for (auto it = task_ids.rbegin(); it != task_ids.rend(); ++it) {
    state.pending_queue.push_front(*it);
    state.tasks.at(*it).status = TaskStatus::Pending;
    state.tasks.at(*it).machine_id.clear();
  }
}

// Evicts residents (ascending task id) until the machine fits its capacities
// again; used when an UPDATE shrinks a loaded machine.
void evict_until_fits(ClusterState& state, MachineState& machine) {
  std::vector<std::string> evicted;
  while (machine.cpu_allocated > machine.cpu_capacity + kCapacityEps ||
         machine.mem_allocated > machine.mem_capacity + kCapacityEps ||
         machine.io_allocated > machine.io_capacity + kCapacityEps) {
    if (machine.resident_tasks.empty()) {
      machine.cpu_allocated = machine.mem_allocated = machine.io_allocated = 0.0;
      break;
    }
    const std::string victim = *machine.resident_tasks.begin();
    release_allocation(machine, state.tasks.at(victim));
    evicted.push_back(victim);
    log_event(state, "evict", victim, machine.machine_id, -1);
  }
  requeue_front(state, evicted);
}

void apply_machine_event(ClusterState& state, const MachineEvent& ev) {
  auto it = state.machine_index.find(ev.machine_id);
  if (it == state.machine_index.end()) {
    throw ConfigError("machine '" + ev.machine_id + "' appears in the trace but has no role owner");
  }
  MachineState& machine = state.machines[it->second];
  switch (ev.kind) {
    case MachineEventKind::Add:
      machine.cpu_capacity = ev.cpu_capacity;
      machine.mem_capacity = ev.mem_capacity;
      machine.io_capacity = ev.io_capacity;
      if (!machine.present) {
        machine.present = true;
        machine.cpu_allocated = machine.mem_allocated = machine.io_allocated = 0.0;
        machine.resident_tasks.clear();
      } else {
        evict_until_fits(state, machine);
      }
      break;
    case MachineEventKind::Update:
      machine.cpu_capacity = ev.cpu_capacity;
      machine.mem_capacity = ev.mem_capacity;
      machine.io_capacity = ev.io_capacity;
      evict_until_fits(state, machine);
      break;
    case MachineEventKind::Remove: {
      std::vector<std::string> evicted(machine.resident_tasks.begin(), machine.resident_tasks.end());
      for (const auto& task_id : evicted) {
        release_allocation(machine, state.tasks.at(task_id));
        log_event(state, "evict", task_id, machine.machine_id, -1);
      }
      requeue_front(state, evicted);
      machine.present = false;
      machine.cpu_allocated = machine.mem_allocated = machine.io_allocated = 0.0;
      break;
    }
  }
}

void apply_task_event(ClusterState& state, const TaskEvent& ev) {
  switch (ev.kind) {
    case TaskEventKind::Submit: {
      if (!ev.duration.has_value()) {
        throw ContractViolation("SUBMIT for task '" + ev.task_id + "' has no resolved duration");
      }
      TaskState task;
      task.task_id = ev.task_id;
      task.tenant_id = ev.tenant_id;
      task.cpu_demand = ev.cpu_demand;
      task.mem_demand = ev.mem_demand;
      task.io_demand = ev.io_demand;
      task.submit_time = ev.timestamp;
      task.remaining_work = *ev.duration;
      task.status = TaskStatus::Pending;
      state.tasks[ev.task_id] = std::move(task);
      state.pending_queue.push_back(ev.task_id);
      log_event(state, "submit", ev.task_id, "", -1);
      break;
    }
    case TaskEventKind::Finish:
      // The simulator's own dynamics decide completion; trace FINISH rows only
      // served to derive durations at parse time.
      break;
    case TaskEventKind::Kill: {
      auto it = state.tasks.find(ev.task_id);
      if (it == state.tasks.end()) break;
      TaskState& task = it->second;
      if (task.status == TaskStatus::Finished) break;
      if (task.status == TaskStatus::Running) {
        release_allocation(state.machine(task.machine_id), task);
        task.machine_id.clear();
      } else {
        auto pos = std::find(state.pending_queue.begin(), state.pending_queue.end(), ev.task_id);
        if (pos != state.pending_queue.end()) state.pending_queue.erase(pos);
      }
      task.status = TaskStatus::Finished;
      task.finish_time = state.clock;
      task.remaining_work = 0.0;
      log_event(state, "kill", ev.task_id, "", -1);
      break;
    }
  }
}

void inject_events(ClusterState& state) {
  const auto& mev = state.trace.machine_events;
  while (state.machine_cursor < mev.size() && mev[state.machine_cursor].timestamp <= state.clock) {
    apply_machine_event(state, mev[state.machine_cursor]);
    ++state.machine_cursor;
  }
  const auto& tev = state.trace.task_events;
  while (state.task_cursor < tev.size() && tev[state.task_cursor].timestamp <= state.clock) {
    apply_task_event(state, tev[state.task_cursor]);
    ++state.task_cursor;
  }
}

double horizon_denominator(const ClusterState& state) { return std::max(state.horizon, 1.0); }

}  // namespace

std::string to_string(TaskStatus status) {
  switch (status) {
    case TaskStatus::Pending: return "PENDING";
    case TaskStatus::Running: return "RUNNING";
    case TaskStatus::Finished: return "FINISHED";
  }
  throw ContractViolation("unhandled task status");
}

const MachineState& ClusterState::machine(const std::string& id) const {
  auto it = machine_index.find(id);
  if (it == machine_index.end()) throw LookupError("unknown machine '" + id + "'");
  return machines[it->second];
}

MachineState& ClusterState::machine(const std::string& id) {
  auto it = machine_index.find(id);
  if (it == machine_index.end()) throw LookupError("unknown machine '" + id + "'");
  return machines[it->second];
}

bool ClusterState::has_machine(const std::string& id) const { return machine_index.count(id) > 0; }

int ClusterState::running_count() const {
  int n = 0;
  for (const auto& [id, task] : tasks) n += task.status == TaskStatus::Running ? 1 : 0;
  return n;
}

int ClusterState::finished_count() const {
  int n = 0;
  for (const auto& [id, task] : tasks) n += task.status == TaskStatus::Finished ? 1 : 0;
  return n;
}

double ClusterState::cluster_cpu_utilization() const {
  double used = 0.0, cap = 0.0;
  for (const auto& m : machines) {
    if (!m.present) continue;
    used += m.cpu_allocated;
    cap += m.cpu_capacity;
  }
  return safe_div(used, cap);
}

ClusterState init_state(const Trace& trace, const RoleMap& role_map, std::uint64_t seed) {
  if (trace.machine_events.empty()) throw ValidationError("trace has no machine events");
  ClusterState state;
  state.trace = trace;
  state.role_map = role_map;
  state.horizon = trace.horizon;
  state.rng_stream = Rng(derive_seed(seed, kSimStreamSalt));

  state.machines.reserve(role_map.machine_order.size());
  for (const auto& machine_id : role_map.machine_order) {
    MachineState m;
    m.machine_id = machine_id;
    m.role_owner = role_map.machine_ownership.at(machine_id);
    m.storage_owner = role_map.storage_ownership.at(machine_id);
    state.machine_index[machine_id] = state.machines.size();
    state.machines.push_back(std::move(m));
  }
  for (const auto& ev : trace.machine_events) {
    if (!state.machine_index.count(ev.machine_id)) {
      throw ConfigError("machine '" + ev.machine_id + "' appears in the trace but has no role owner");
    }
  }

  std::set<std::string> tenants;
  for (const auto& ev : trace.task_events) {
    if (ev.kind == TaskEventKind::Submit) {
      state.total_tasks += 1;
      tenants.insert(ev.tenant_id);
    }
  }
  state.tenants.assign(tenants.begin(), tenants.end());

  for (int agent : role_map.storage_agents) state.storage_throttle[agent] = 1.0;

  // Only machine events at t <= 0 apply at init; tasks arrive with the first step.
  const auto& mev = state.trace.machine_events;
  while (state.machine_cursor < mev.size() && mev[state.machine_cursor].timestamp <= 0.0) {
    apply_machine_event(state, mev[state.machine_cursor]);
    ++state.machine_cursor;
  }
  return state;
}

PlaceResult place_task(ClusterState& state, const std::string& task_id, const std::string& machine_id) {
  auto task_it = state.tasks.find(task_id);
  if (task_it == state.tasks.end()) throw LookupError("unknown task '" + task_id + "'");
  TaskState& task = task_it->second;
  if (task.status != TaskStatus::Pending) {
    throw ContractViolation("task '" + task_id + "' is not PENDING");
  }
  MachineState& machine = state.machine(machine_id);
  if (!machine.present) return PlaceResult{false, "absent"};
  if (!fits(task.cpu_demand, machine.residual_cpu()) || !fits(task.mem_demand, machine.residual_mem()) ||
      !fits(task.io_demand, machine.residual_io())) {
    return PlaceResult{false, "capacity"};
  }
  machine.cpu_allocated += task.cpu_demand;
  machine.mem_allocated += task.mem_demand;
  machine.io_allocated += task.io_demand;
  machine.resident_tasks.insert(task_id);
  task.status = TaskStatus::Running;
  task.place_time = state.clock;
  task.machine_id = machine_id;
  state.latency_samples.push_back(state.clock - task.submit_time);
  log_event(state, "place", task_id, machine_id, -1);
  return PlaceResult{true, ""};
}

StepOutcome step(ClusterState& state, const std::map<int, Action>& joint_action) {
  const RoleMap& rm = state.role_map;
  for (const auto& [agent, role] : rm.assignments) {
    if (!joint_action.count(agent)) {
      throw ContractViolation("agent " + std::to_string(agent) + " has no action this step");
    }
  }
  for (const auto& [agent, action] : joint_action) {
    if (!rm.assignments.count(agent)) {
      throw ContractViolation("action supplied for unknown agent " + std::to_string(agent));
    }
  }

  StepOutcome out;
  for (const auto& [agent, role] : rm.assignments) out.local_rewards[agent] = 0.0;
  std::map<int, double> latency_penalty;
  std::map<int, int> invalid_count;
  std::map<int, int> overload_rejections;
  std::map<int, int> churned;

  auto flag_invalid = [&](int agent) {
    invalid_count[agent] += 1;
    out.invalid_actions.push_back(agent);
  };

  // Phase 1: schedulers pull from the queue head and propose placements.
  struct Proposal {
    int scheduler;
    std::string task_id;
    std::size_t machine_slot;
  };
  std::vector<Proposal> proposals;
  const int n_machines = static_cast<int>(rm.machine_order.size());
  for (int agent : rm.scheduler_agents) {
    const Action& action = joint_action.at(agent);
    const Role& role = rm.role_of(agent);
    if (action.role != RoleTag::Scheduler || action.index < 0 || action.index >= role.action_space_size) {
      flag_invalid(agent);
      continue;
    }
    if (action.index == n_machines) continue;  // defer
    if (state.pending_queue.empty()) {
      flag_invalid(agent);
      log_event(state, "reject", "", rm.machine_order[static_cast<std::size_t>(action.index)], agent);
      continue;
    }
    const auto slot = static_cast<std::size_t>(action.index);
    if (!state.machines[slot].present) {
      flag_invalid(agent);
      log_event(state, "reject", state.pending_queue.front(), rm.machine_order[slot], agent);
      continue;
    }
    Proposal p{agent, state.pending_queue.front(), slot};
    state.pending_queue.pop_front();
    proposals.push_back(std::move(p));
  }

  // Phase 2: compute owners admit or bounce the proposals for their machines.
  std::map<int, int> compute_choice;  // agent -> admit/defer
  for (int agent : rm.compute_agents) {
    const Action& action = joint_action.at(agent);
    if (action.role != RoleTag::Compute || action.index < 0 || action.index > 1) {
      flag_invalid(agent);
      compute_choice[agent] = kComputeActionDefer;
    } else {
      compute_choice[agent] = action.index;
    }
  }
  std::vector<std::string> bounced;
  for (const auto& proposal : proposals) {
    const std::string& machine_id = rm.machine_order[proposal.machine_slot];
    const int owner = state.machines[proposal.machine_slot].role_owner;
    if (compute_choice.at(owner) == kComputeActionDefer) {
      bounced.push_back(proposal.task_id);
      log_event(state, "defer_bounce", proposal.task_id, machine_id, owner);
      continue;
    }
    const PlaceResult result = place_task(state, proposal.task_id, machine_id);
    if (result.placed) {
      out.placed.emplace_back(proposal.task_id, machine_id);
      const TaskState& task = state.tasks.at(proposal.task_id);
      latency_penalty[proposal.scheduler] -=
          (state.clock - task.submit_time) / horizon_denominator(state);
    } else {
      bounced.push_back(proposal.task_id);
      flag_invalid(proposal.scheduler);
      if (result.reason == "capacity") overload_rejections[owner] += 1;
      log_event(state, "reject", proposal.task_id, machine_id, proposal.scheduler);
    }
  }
  requeue_front(state, bounced);

  // Phase 3: storage agents set their group's io throttle.
  for (int agent : rm.storage_agents) {
    const Action& action = joint_action.at(agent);
    if (action.role != RoleTag::Storage || action.index < 0 || action.index > 2) {
      flag_invalid(agent);
      continue;
    }
    const double level = kThrottleLevels[action.index];
    if (state.storage_throttle.at(agent) != level) churned[agent] = 1;
    state.storage_throttle[agent] = level;
  }

  // Clock advance, event injection, then task progress at the throttled rate.
  state.clock += 1.0;
  inject_events(state);

  std::map<int, int> progressed;  // storage agent -> governed running tasks
  std::vector<std::string> finished_now;
  for (auto& [task_id, task] : state.tasks) {
    if (task.status != TaskStatus::Running) continue;
    const MachineState& machine = state.machine(task.machine_id);
    const double rate = state.storage_throttle.at(machine.storage_owner);
    progressed[machine.storage_owner] += 1;
    task.remaining_work -= rate;
    if (task.remaining_work <= kCapacityEps) finished_now.push_back(task_id);
  }
  for (const auto& task_id : finished_now) {
    TaskState& task = state.tasks.at(task_id);
    release_allocation(state.machine(task.machine_id), task);
    task.status = TaskStatus::Finished;
    task.finish_time = state.clock;
    task.remaining_work = 0.0;
    task.machine_id.clear();
    log_event(state, "finish", task_id, "", -1);
  }

  // Rewards from the post-transition state.
  for (int agent : rm.scheduler_agents) {
    out.local_rewards[agent] = latency_penalty[agent] - static_cast<double>(invalid_count[agent]);
  }
  for (int agent : rm.compute_agents) {
    double util_sum = 0.0;
    int owned_present = 0;
    for (const auto& m : state.machines) {
      if (m.role_owner != agent || !m.present) continue;
      util_sum += machine_cpu_util(m);
      owned_present += 1;
    }
    const double mean_util = owned_present > 0 ? util_sum / owned_present : 0.0;
    out.local_rewards[agent] = mean_util - 2.0 * overload_rejections[agent] -
                               static_cast<double>(invalid_count[agent]);
  }
  for (int agent : rm.storage_agents) {
    const double rate_term = progressed[agent] > 0 ? state.storage_throttle.at(agent) : 0.0;
    out.local_rewards[agent] =
        rate_term - 0.1 * churned[agent] - static_cast<double>(invalid_count[agent]);
  }

  const double pending_term =
      state.total_tasks > 0
          ? static_cast<double>(state.pending_queue.size()) / static_cast<double>(state.total_tasks)
          : 0.0;
  out.global_signal = state.cluster_cpu_utilization() - pending_term;
  out.done = state.finished_count() == state.total_tasks || state.clock > state.horizon;
  return out;
}

Observation observe_local(ClusterState& state, int agent_id, double info_loss_rate, Rng& rng) {
  if (info_loss_rate < 0.0 || info_loss_rate > 1.0) {
    throw ContractViolation("info_loss_rate must lie in [0, 1]");
  }
  const RoleMap& rm = state.role_map;
  const Role& role = rm.role_of(agent_id);
  const double h = horizon_denominator(state);
  const double total = std::max(1, state.total_tasks);
  const int n_machines = static_cast<int>(rm.machine_order.size());

  std::vector<double> truth;
  truth.reserve(static_cast<std::size_t>(role.observation_size));
  switch (role.tag) {
    case RoleTag::Scheduler: {
      const bool empty = state.pending_queue.empty();
      const TaskState* head = empty ? nullptr : &state.tasks.at(state.pending_queue.front());
      truth.push_back(static_cast<double>(state.pending_queue.size()) / total);
      truth.push_back(empty ? 0.0 : (state.clock - head->submit_time) / h);
      truth.push_back(empty ? 0.0 : head->cpu_demand);
      truth.push_back(empty ? 0.0 : head->mem_demand);
      truth.push_back(empty ? 0.0 : head->io_demand);
      truth.push_back(state.clock / h);
      for (const auto& m : state.machines) {
        if (m.present) {
          truth.push_back(m.residual_cpu());
          truth.push_back(m.residual_mem());
          truth.push_back(m.residual_io());
        } else {
          truth.insert(truth.end(), {-1.0, -1.0, -1.0});
        }
      }
      break;
    }
    case RoleTag::Compute: {
      std::vector<const MachineState*> owned;
      for (const auto& m : state.machines) {
        if (m.role_owner == agent_id) owned.push_back(&m);
      }
      double cpu = 0.0, mem = 0.0, io = 0.0;
      int present = 0;
      for (const auto* m : owned) {
        if (!m->present) continue;
        cpu += machine_cpu_util(*m);
        mem += machine_mem_util(*m);
        io += machine_io_util(*m);
        present += 1;
      }
      truth.push_back(n_machines > 0 ? static_cast<double>(owned.size()) / n_machines : 0.0);
      truth.push_back(present > 0 ? cpu / present : 0.0);
      truth.push_back(present > 0 ? mem / present : 0.0);
      truth.push_back(present > 0 ? io / present : 0.0);
      truth.push_back(static_cast<double>(state.pending_queue.size()) / total);
      truth.push_back(state.clock / h);
      for (int slot = 0; slot < rm.max_owned_machines; ++slot) {
        if (static_cast<std::size_t>(slot) < owned.size()) {
          const MachineState& m = *owned[static_cast<std::size_t>(slot)];
          if (m.present) {
            truth.push_back(m.residual_cpu());
            truth.push_back(m.residual_mem());
            truth.push_back(m.residual_io());
            truth.push_back(static_cast<double>(m.resident_tasks.size()) / total);
          } else {
            truth.insert(truth.end(), {-1.0, -1.0, -1.0, 0.0});
          }
        } else {
          truth.insert(truth.end(), {0.0, 0.0, 0.0, 0.0});
        }
      }
      break;
    }
    case RoleTag::Storage: {
      const auto& group = rm.storage_groups.at(agent_id);
      double io = 0.0, cpu = 0.0;
      int present = 0, governed_running = 0;
      for (const auto& machine_id : group) {
        const MachineState& m = state.machine(machine_id);
        if (!m.present) continue;
        io += machine_io_util(m);
        cpu += machine_cpu_util(m);
        present += 1;
        governed_running += static_cast<int>(m.resident_tasks.size());
      }
      truth.push_back(n_machines > 0 ? static_cast<double>(group.size()) / n_machines : 0.0);
      truth.push_back(present > 0 ? io / present : 0.0);
      truth.push_back(present > 0 ? cpu / present : 0.0);
      truth.push_back(governed_running / total);
      truth.push_back(state.storage_throttle.at(agent_id));
      truth.push_back(state.clock / h);
      break;
    }
  }
  if (truth.size() != static_cast<std::size_t>(role.observation_size)) {
    throw ContractViolation("observation layout does not match the role's declared size");
  }

  auto& memory = state.last_observed[agent_id];
  if (memory.size() != truth.size()) memory.assign(truth.size(), 0.0);

  Observation obs;
  obs.role = role.tag;
  obs.features.resize(truth.size());
  obs.staleness.resize(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (rng.bernoulli(info_loss_rate)) {
      obs.features[i] = memory[i];
      obs.staleness[i] = 1;
    } else {
      obs.features[i] = truth[i];
      obs.staleness[i] = 0;
      memory[i] = truth[i];
    }
  }
  return obs;
}

std::vector<double> observe_global(const ClusterState& state) {
  std::vector<double> out;
  out.reserve(state.machines.size() + state.tenants.size() + 2);
  for (const auto& m : state.machines) out.push_back(m.present ? machine_cpu_util(m) : 0.0);
  out.push_back(static_cast<double>(state.pending_queue.size()) / std::max(1, state.total_tasks));
  double running_cpu = 0.0;
  std::map<std::string, double> tenant_cpu;
  for (const auto& [task_id, task] : state.tasks) {
    if (task.status != TaskStatus::Running) continue;
    running_cpu += task.cpu_demand;
    tenant_cpu[task.tenant_id] += task.cpu_demand;
  }
  for (const auto& tenant : state.tenants) {
    out.push_back(safe_div(tenant_cpu.count(tenant) ? tenant_cpu[tenant] : 0.0, running_cpu));
  }
  out.push_back(state.clock / horizon_denominator(state));
  return out;
}

int global_state_size(const RoleMap& role_map, const Trace& trace) {
  std::set<std::string> tenants;
  for (const auto& ev : trace.task_events) {
    if (ev.kind == TaskEventKind::Submit) tenants.insert(ev.tenant_id);
  }
  return static_cast<int>(role_map.machine_order.size()) + 1 + static_cast<int>(tenants.size()) + 1;
}

void write_episode_log(const ClusterState& state, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << "clock,event,task_id,machine_id,agent_id\n";
  for (const auto& row : state.episode_log) {
    out << format_double(row.clock) << ',' << row.event << ',' << row.task_id << ','
        << row.machine_id << ',' << row.agent_id << '\n';
  }
}

}  // namespace orchestra
