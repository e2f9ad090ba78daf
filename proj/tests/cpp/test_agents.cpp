#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "orchestra/agents.hpp"
#include "orchestra/errors.hpp"
#include "orchestra/sim.hpp"
#include "orchestra/trace.hpp"

using namespace orchestra;

namespace {

const std::vector<std::string> kFourMachines = {"m-0", "m-1", "m-2", "m-3"};

Trace four_machine_trace(std::vector<TaskEvent> tasks = {}) {
  Trace trace;
  for (const auto& id : kFourMachines) {
    trace.machine_events.push_back({0, id, MachineEventKind::Add, 1.0, 1.0, 1.0});
  }
  trace.task_events = std::move(tasks);
  trace.horizon = 100;
  return trace;
}

TaskEvent submit(std::int64_t ts, const std::string& id, double cpu, double mem, double io,
                 double duration, const std::string& tenant = "tenant-1") {
  TaskEvent ev;
  ev.timestamp = ts;
  ev.job_id = "j-" + id;
  ev.task_id = id;
  ev.tenant_id = tenant;
  ev.kind = TaskEventKind::Submit;
  ev.cpu_demand = cpu;
  ev.mem_demand = mem;
  ev.io_demand = io;
  ev.duration = duration;
  return ev;
}

}  // namespace

TEST_CASE("role assignment partitions machines deterministically") {
  const RoleMap map = assign_roles({2, 1, 1}, kFourMachines);
  CHECK(map.assignments.size() == 4);
  CHECK(map.scheduler_agents.size() == 1);
  CHECK(map.compute_agents.size() == 2);
  CHECK(map.storage_agents.size() == 1);

  // schedulers first, then compute, then storage
  CHECK(map.tag_of(0) == RoleTag::Scheduler);
  CHECK(map.tag_of(1) == RoleTag::Compute);
  CHECK(map.tag_of(2) == RoleTag::Compute);
  CHECK(map.tag_of(3) == RoleTag::Storage);

  // each compute agent owns 2 of the 4 machines, dealt round-robin
  int owned1 = 0, owned2 = 0;
  for (const auto& [machine, owner] : map.machine_ownership) {
    if (owner == 1) ++owned1;
    if (owner == 2) ++owned2;
  }
  CHECK(owned1 == 2);
  CHECK(owned2 == 2);
  CHECK(map.max_owned_machines == 2);

  // single storage agent governs everything
  CHECK(map.storage_groups.at(3).size() == 4);

  const RoleMap again = assign_roles({2, 1, 1}, kFourMachines);
  CHECK(again.machine_ownership == map.machine_ownership);
  CHECK(again.storage_groups == map.storage_groups);
}

TEST_CASE("role assignment distributes a remainder round-robin") {
  const RoleMap map = assign_roles({3, 1, 1}, kFourMachines);
  std::map<int, int> counts;
  for (const auto& [machine, owner] : map.machine_ownership) counts[owner]++;
  // 4 machines over 3 compute agents: 2/1/1
  CHECK(counts.size() == 3);
  CHECK(map.max_owned_machines == 2);
  int total = 0;
  for (const auto& [agent, n] : counts) {
    CHECK(n >= 1);
    total += n;
  }
  CHECK(total == 4);
}

TEST_CASE("every role needs at least one agent") {
  CHECK_THROWS_AS(assign_roles({1, 1, 0}, kFourMachines), ConfigError);
  CHECK_THROWS_AS(assign_roles({0, 1, 1}, kFourMachines), ConfigError);
  CHECK_THROWS_AS(assign_roles({1, 0, 1}, kFourMachines), ConfigError);
  CHECK_THROWS_AS(assign_roles({1, 1, 1}, {}), ConfigError);
}

TEST_CASE("action and observation sizes are role specific") {
  const RoleMap map = assign_roles({2, 1, 1}, kFourMachines);
  // scheduler: one placement per machine + defer
  CHECK(map.role_of(0).action_space_size == 5);
  CHECK(map.role_of(0).observation_size == scheduler_observation_size(4));
  CHECK(scheduler_observation_size(4) == 6 + 3 * 4);
  // compute: admit / defer
  CHECK(map.role_of(1).action_space_size == 2);
  CHECK(map.role_of(1).observation_size == compute_observation_size(2));
  CHECK(compute_observation_size(2) == 6 + 4 * 2);
  // storage: one throttle level per entry
  CHECK(map.role_of(3).action_space_size == 3);
  CHECK(map.role_of(3).observation_size == kStorageFeatures);

  CHECK_THROWS_AS(map.role_of(99), LookupError);
}

TEST_CASE("scheduler mask tracks head-of-queue fit") {
  const RoleMap map = assign_roles({2, 1, 1}, kFourMachines);
  ClusterState state = init_state(four_machine_trace(), map, 1);
  // Pre-fill m-1 and m-3 by placing filler tasks via the primitive.
  state.tasks["f-1"] = TaskState{"f-1", "tenant-1", 0.9, 0.0, 0.0, 0.0, {}, {}, 5.0,
                                 TaskStatus::Pending, ""};
  state.tasks["f-3"] = TaskState{"f-3", "tenant-1", 0.5, 0.0, 0.0, 0.0, {}, {}, 5.0,
                                 TaskStatus::Pending, ""};
  REQUIRE(place_task(state, "f-1", "m-1").placed);
  REQUIRE(place_task(state, "f-3", "m-3").placed);

  // Queue head needs 0.6 cpu: fits m-0 (1.0 free) and m-2 (1.0 free), not m-1
  // (0.1 free) or m-3 (0.5 free).
  state.tasks["t-0"] = TaskState{"t-0", "tenant-1", 0.6, 0.1, 0.1, 0.0, {}, {}, 5.0,
                                 TaskStatus::Pending, ""};
  state.pending_queue.push_back("t-0");

  const auto mask = legal_mask(state, 0, map);
  REQUIRE(mask.size() == 5);
  CHECK(mask[0] == 1);
  CHECK(mask[1] == 0);
  CHECK(mask[2] == 1);
  CHECK(mask[3] == 0);
  CHECK(mask[4] == 1);  // defer always legal
}

TEST_CASE("empty queue leaves only defer legal") {
  const RoleMap map = assign_roles({2, 1, 1}, kFourMachines);
  ClusterState state = init_state(four_machine_trace(), map, 1);
  const auto mask = legal_mask(state, 0, map);
  REQUIRE(mask.size() == 5);
  CHECK(mask[0] == 0);
  CHECK(mask[1] == 0);
  CHECK(mask[2] == 0);
  CHECK(mask[3] == 0);
  CHECK(mask[4] == 1);
}

TEST_CASE("compute and storage masks are all ones") {
  const RoleMap map = assign_roles({2, 1, 1}, kFourMachines);
  ClusterState state = init_state(four_machine_trace(), map, 1);
  CHECK(legal_mask(state, 1, map) == std::vector<std::uint8_t>{1, 1});
  CHECK(legal_mask(state, 3, map) == std::vector<std::uint8_t>{1, 1, 1});
}

TEST_CASE("observation-derived mask equals state mask at zero loss") {
  const RoleMap map = assign_roles({2, 1, 1}, kFourMachines);
  Trace trace = four_machine_trace({submit(0, "t-0", 0.6, 0.1, 0.1, 5.0)});
  ClusterState state = init_state(trace, map, 1);
  Rng rng(42);
  for (int agent = 0; agent < 4; ++agent) {
    const Observation obs = observe_local(state, agent, 0.0, rng);
    CHECK(mask_from_observation(obs, map, agent) == legal_mask(state, agent, map));
  }

  // After one all-defer step the t=0 submit is in the queue; masks still agree.
  const std::map<int, Action> defer_all = {{0, {RoleTag::Scheduler, 4}},
                                           {1, {RoleTag::Compute, kComputeActionDefer}},
                                           {2, {RoleTag::Compute, kComputeActionDefer}},
                                           {3, {RoleTag::Storage, 2}}};
  step(state, defer_all);
  REQUIRE(state.pending_queue.size() == 1);
  for (int agent = 0; agent < 4; ++agent) {
    const Observation obs = observe_local(state, agent, 0.0, rng);
    CHECK(mask_from_observation(obs, map, agent) == legal_mask(state, agent, map));
  }
}

TEST_CASE("network input doubles the feature vector") {
  Observation obs;
  obs.role = RoleTag::Storage;
  obs.features = {0.5, 0.25, 0.0, 1.0, 0.75, 0.1};
  obs.staleness = {0, 1, 0, 0, 1, 0};
  const auto input = network_input(obs);
  REQUIRE(input.size() == 12);
  CHECK(input[0] == 0.5);
  CHECK(input[6] == 0.0);
  CHECK(input[7] == 1.0);
}

TEST_CASE("sample_action respects masks and is reproducible") {
  // 6-feature storage observation, 12-input net (features + staleness).
  NetParams net = init_params({12, 8, 3}, 7);
  Observation obs;
  obs.role = RoleTag::Storage;
  obs.features = {0.5, 0.2, 0.1, 0.0, 0.75, 0.3};
  obs.staleness.assign(6, 0);

  const std::vector<std::uint8_t> only1 = {0, 1, 0};
  Rng rng(5);
  const SampledAction forced = sample_action(net, obs, only1, rng);
  CHECK(forced.action.index == 1);
  CHECK(forced.log_prob == doctest::Approx(0.0).epsilon(1e-12));

  // 10k-sample mask fuzz: a masked action never comes back.
  const std::vector<std::uint8_t> no2 = {1, 1, 0};
  Rng fuzz_rng(6);
  int counts[3] = {0, 0, 0};
  for (int i = 0; i < 10000; ++i) {
    const SampledAction s = sample_action(net, obs, no2, fuzz_rng);
    counts[s.action.index]++;
  }
  CHECK(counts[2] == 0);
  CHECK(counts[0] > 0);
  CHECK(counts[1] > 0);

  // same seed, same sequence
  Rng rng_a(9), rng_b(9);
  for (int i = 0; i < 100; ++i) {
    const SampledAction a = sample_action(net, obs, no2, rng_a);
    const SampledAction b = sample_action(net, obs, no2, rng_b);
    CHECK(a.action.index == b.action.index);
    CHECK(a.log_prob == b.log_prob);
  }
}

TEST_CASE("zero net samples uniformly over legal actions") {
  NetParams net = init_params({12, 3}, 1);
  for (auto& layer : net.w)
    for (double& v : layer) v = 0.0;
  Observation obs;
  obs.role = RoleTag::Storage;
  obs.features = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
  obs.staleness.assign(6, 0);
  const std::vector<std::uint8_t> all = {1, 1, 1};
  Rng rng(77);
  int counts[3] = {0, 0, 0};
  const int kDraws = 30000;
  for (int i = 0; i < kDraws; ++i) {
    const SampledAction s = sample_action(net, obs, all, rng);
    CHECK(s.log_prob == doctest::Approx(std::log(1.0 / 3.0)).epsilon(1e-9));
    counts[s.action.index]++;
  }
  for (int a = 0; a < 3; ++a) {
    CHECK(counts[a] > kDraws / 3 - 600);
    CHECK(counts[a] < kDraws / 3 + 600);
  }
}

TEST_CASE("agents of one role share the policy distribution") {
  const RoleMap map = assign_roles({2, 1, 1}, kFourMachines);
  ClusterState state = init_state(four_machine_trace(), map, 3);
  NetParams net = init_params({compute_observation_size(2) * 2, 16, 2}, 21);

  Rng obs_rng(1);
  Observation obs1 = observe_local(state, 1, 0.0, obs_rng);
  Observation obs2 = observe_local(state, 2, 0.0, obs_rng);
  // Identical machines: identical observations, so identical distributions.
  REQUIRE(obs1.features == obs2.features);
  const auto logits1 = forward_actor(net, network_input(obs1));
  const auto logits2 = forward_actor(net, network_input(obs2));
  CHECK(logits1 == logits2);
}
