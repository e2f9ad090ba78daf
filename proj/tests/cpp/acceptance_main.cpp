// End-to-end acceptance harness. Each numbered check prints one [PASS]/[FAIL]
// line; the exit code counts unexpected failures only, so a documented
// impossibility can stay visibly red without breaking the build gate.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "orchestra/agents.hpp"
#include "orchestra/commands.hpp"
#include "orchestra/config.hpp"
#include "orchestra/errors.hpp"
#include "orchestra/marl.hpp"
#include "orchestra/metrics.hpp"
#include "orchestra/policy.hpp"
#include "orchestra/rng.hpp"
#include "orchestra/sim.hpp"
#include "orchestra/trace.hpp"

#ifndef ORCHESTRA_SOURCE_DIR
#define ORCHESTRA_SOURCE_DIR "."
#endif

namespace fs = std::filesystem;
using namespace orchestra;
using Clock = std::chrono::steady_clock;

namespace {

struct CriterionResult {
  int id = 0;
  std::string name;
  bool pass = false;
  bool documented_failure = false;  // red line that the repo explains and accepts
  std::string detail;
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(precision);
  out << v;
  return out.str();
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

std::vector<std::string> machine_ids(const Trace& trace) {
  std::vector<std::string> ids;
  for (const auto& ev : trace.machine_events) {
    if (std::find(ids.begin(), ids.end(), ev.machine_id) == ids.end()) {
      ids.push_back(ev.machine_id);
    }
  }
  return ids;
}

// ---------------------------------------------------------------------------
// toy experiment scaffolding

fs::path source_dir() { return fs::path(ORCHESTRA_SOURCE_DIR); }

RunConfig toy_config(const fs::path& workload_file, const std::string& out_dir, std::uint64_t seed,
                     int total_epochs, int episodes_per_epoch) {
  RunConfig config;
  config.seed = seed;
  config.seeds = {seed};
  config.out_dir = out_dir;
  config.workload = workload_from_json_file(workload_file.string());
  config.roles = RoleCounts{2, 1, 1};
  config.train.seed = seed;
  // Desk-scale fusion weight: the global signal has to dominate or schedulers
  // fall into the defer-forever local optimum (placing a waited task costs
  // latency penalty now; the utilization payoff only shows up cluster-wide).
  config.train.alpha_fusion = 0.1;
  config.train.total_epochs = total_epochs;
  config.train.episodes_per_epoch = episodes_per_epoch;
  config.train.updates_per_epoch = 8;
  config.train.batch_size = 32;
  config.train.buffer_capacity = 60000;
  config.train.hidden_layers = {32, 32};
  config.train.lr = LrSchedule{1e-4, 1e-5, total_epochs};
  config.train.roles = config.roles;
  config.eval_episodes = 10;
  config.validate();
  return config;
}

// ---------------------------------------------------------------------------
// criterion 1: finite-difference gradient oracle

bool grads_close(const NetGrads& analytic, const NetParams& params,
                 const std::function<double(const NetParams&)>& f) {
  const double h = 1e-5;
  for (std::size_t layer = 0; layer < params.w.size(); ++layer) {
    for (std::size_t k = 0; k < params.w[layer].size(); ++k) {
      NetParams hi = params, lo = params;
      hi.w[layer][k] += h;
      lo.w[layer][k] -= h;
      const double fd = (f(hi) - f(lo)) / (2.0 * h);
      if (std::abs(fd - analytic.w[layer][k]) > std::max(1e-7, 1e-4 * std::abs(fd))) return false;
    }
    for (std::size_t k = 0; k < params.b[layer].size(); ++k) {
      NetParams hi = params, lo = params;
      hi.b[layer][k] += h;
      lo.b[layer][k] -= h;
      const double fd = (f(hi) - f(lo)) / (2.0 * h);
      if (std::abs(fd - analytic.b[layer][k]) > std::max(1e-7, 1e-4 * std::abs(fd))) return false;
    }
  }
  return true;
}

CriterionResult criterion_gradient_oracle() {
  CriterionResult result{1, "gradient oracle vs central finite differences"};
  const auto start = Clock::now();
  int checked = 0;
  bool all_ok = true;

  for (int trial = 0; trial < 10 && all_ok; ++trial) {
    Rng rng(1000 + static_cast<std::uint64_t>(trial));
    NetParams actor = init_params({5, 10, 8, 4}, 500 + static_cast<std::uint64_t>(trial));
    std::vector<double> x(5);
    for (double& v : x) v = rng.uniform(-1.0, 1.0);
    std::vector<std::uint8_t> mask(4, 0);
    while (std::accumulate(mask.begin(), mask.end(), 0) < 2) {
      for (auto& m : mask) m = rng.bernoulli(0.7) ? 1 : 0;
    }
    int action = 0;
    do {
      action = rng.uniform_int(4);
    } while (!mask[static_cast<std::size_t>(action)]);

    const NetGrads g = grad_log_prob(actor, x, mask, action);
    all_ok = grads_close(g, actor, [&](const NetParams& p) {
      return masked_log_prob(forward_actor(p, x), mask, action);
    });
    ++checked;

    if (!all_ok) break;
    NetParams critic = init_params({6, 8, 8, 1}, 700 + static_cast<std::uint64_t>(trial));
    std::vector<double> y(6);
    for (double& v : y) v = rng.uniform(-1.0, 1.0);
    const NetGrads gv = grad_value(critic, y);
    all_ok = grads_close(gv, critic, [&](const NetParams& p) { return forward_critic(p, y); });
    ++checked;
  }

  const double elapsed = seconds_since(start);
  result.pass = all_ok && elapsed < 60.0;
  result.detail = std::to_string(checked) + " networks checked in " + fmt(elapsed, 2) + "s";
  return result;
}

// ---------------------------------------------------------------------------
// criterion 2: reward normalization properties

CriterionResult criterion_reward_normalization() {
  CriterionResult result{2, "per-role reward normalization is standard"};
  bool ok = true;
  Rng rng(99);
  for (int trial = 0; trial < 100 && ok; ++trial) {
    std::vector<double> batch(64);
    for (double& r : batch) r = rng.uniform(-5.0, 5.0);
    const auto out = normalize_rewards(batch, 1e-8);
    const double n = static_cast<double>(out.size());
    const double mean = std::accumulate(out.begin(), out.end(), 0.0) / n;
    double acc = 0.0;
    for (double r : out) acc += (r - mean) * (r - mean);
    const double sigma = std::sqrt(acc / n);
    ok = std::abs(mean) <= 1e-6 && std::abs(sigma - 1.0) <= 1e-3;
  }

  const auto flat = normalize_rewards({3.0, 3.0, 3.0, 3.0}, 1e-8);
  for (double r : flat) ok = ok && r == 0.0;

  const auto hand = normalize_rewards({1.0, 2.0, 3.0}, 1e-8);
  ok = ok && std::abs(hand[0] + 1.2247) <= 1e-3 && std::abs(hand[1]) <= 1e-9 &&
       std::abs(hand[2] - 1.2247) <= 1e-3;

  result.pass = ok;
  result.detail = "100 random batches + constant + hand case [1,2,3] -> [" + fmt(hand[0]) + ", " +
                  fmt(hand[1]) + ", " + fmt(hand[2]) + "]";
  return result;
}

// ---------------------------------------------------------------------------
// criterion 3: simulator safety fuzz

CriterionResult criterion_simulator_fuzz() {
  CriterionResult result{3, "10000-step random-action safety fuzz"};
  WorkloadSpec spec;
  spec.n_machines = 8;
  spec.machine_capacity_distribution = {DistSpec::Kind::Uniform, 0, 0.7, 1.0, 0};
  spec.task_arrival_rate = 1.5;
  spec.n_tasks = 80;
  spec.demand_cpu = {DistSpec::Kind::Uniform, 0, 0.05, 0.45, 0};
  spec.demand_mem = {DistSpec::Kind::Uniform, 0, 0.05, 0.4, 0};
  spec.demand_io = {DistSpec::Kind::Uniform, 0, 0.05, 0.3, 0};
  spec.duration_distribution = {DistSpec::Kind::Exponential, 0, 0, 0, 7.0};
  spec.n_tenants = 3;
  spec.tenant_skew = 1.2;

  Rng rng(2024);
  int steps_done = 0;
  int episodes = 0;
  std::uint64_t trace_seed = 1;
  while (steps_done < 10000) {
    Trace trace = generate_synthetic(spec, trace_seed++);
    RoleMap rm = assign_roles(RoleCounts{4, 2, 2}, machine_ids(trace));
    const int n_machines = static_cast<int>(rm.machine_order.size());
    ClusterState state = init_state(trace, rm, trace_seed);
    ++episodes;
    bool done = false;
    while (!done && steps_done < 10000) {
      std::map<int, Action> joint;
      for (int a : rm.scheduler_agents) {
        joint[a] = Action{RoleTag::Scheduler, rng.uniform_int(n_machines + 1)};
      }
      for (int a : rm.compute_agents) joint[a] = Action{RoleTag::Compute, rng.uniform_int(2)};
      for (int a : rm.storage_agents) joint[a] = Action{RoleTag::Storage, rng.uniform_int(3)};
      const StepOutcome out = step(state, joint);
      done = out.done;
      ++steps_done;

      for (const auto& m : state.machines) {
        if (!m.present) continue;
        if (m.cpu_allocated > m.cpu_capacity + kCapacityEps ||
            m.mem_allocated > m.mem_capacity + kCapacityEps ||
            m.io_allocated > m.io_capacity + kCapacityEps) {
          result.detail = "capacity violated on " + m.machine_id + " at step " +
                          std::to_string(steps_done);
          return result;
        }
      }
      int submitted = 0;
      for (const auto& ev : state.trace.task_events) {
        if (ev.kind == TaskEventKind::Submit && static_cast<double>(ev.timestamp) <= state.clock) {
          ++submitted;
        }
      }
      int accounted = 0;
      for (const auto& [id, task] : state.tasks) {
        (void)task;
        ++accounted;
      }
      if (accounted != submitted) {
        result.detail = "conservation broke at step " + std::to_string(steps_done) + " (" +
                        std::to_string(accounted) + " tracked vs " + std::to_string(submitted) +
                        " submitted)";
        return result;
      }
    }
  }
  result.pass = true;
  result.detail = "10000 steps across " + std::to_string(episodes) + " random episodes, clean";
  return result;
}

// ---------------------------------------------------------------------------
// criterion 4: byte-identical training runs, including across worker counts

CriterionResult criterion_determinism(const fs::path& work) {
  CriterionResult result{4, "byte-identical curves across reruns and worker counts"};
  const fs::path wl = source_dir() / "workloads" / "toy.json";
  const int epochs = 8;

  const std::string dir_a = (work / "det_a").string();
  const std::string dir_b = (work / "det_b").string();
  const std::string dir_c = (work / "det_c").string();
  RunConfig a = toy_config(wl, dir_a, 7, epochs, 2);
  RunConfig b = toy_config(wl, dir_b, 7, epochs, 2);
  RunConfig c = toy_config(wl, dir_c, 7, epochs, 2);
  c.train.rollout_workers = 4;

  run_train(a, dir_a);
  run_train(b, dir_b);
  run_train(c, dir_c);

  const std::string curve_a = slurp(fs::path(dir_a) / "curve.csv");
  const bool rerun_same = curve_a == slurp(fs::path(dir_b) / "curve.csv");
  const bool workers_same = curve_a == slurp(fs::path(dir_c) / "curve.csv");
  result.pass = rerun_same && workers_same && !curve_a.empty();
  result.detail = std::string("rerun ") + (rerun_same ? "identical" : "DIFFERS") +
                  ", R=1 vs R=4 " + (workers_same ? "identical" : "DIFFERS");
  return result;
}

// ---------------------------------------------------------------------------
// criterion 5: desk-scale learning against scripted oracles

struct ToyRun {
  Trace trace;
  RoleMap role_map;
  SharedLayout layout;
  PolicySet policies;
  double final_window_utilization = 0.0;
};

CriterionResult criterion_learning(const fs::path& work, ToyRun& out_run) {
  CriterionResult result{5, "toy-workload learning beats random, approaches greedy"};
  const auto start = Clock::now();
  const fs::path wl = source_dir() / "workloads" / "toy.json";
  const int epochs = 220;

  const std::string run_dir = (work / "learn_full").string();
  RunConfig config = toy_config(wl, run_dir, 11, epochs, 2);
  config.train = ablation_variant(config.train, Variant::Full);
  TrainResult trained = run_train(config, run_dir);

  const std::size_t window = std::min<std::size_t>(50, trained.curve.size());
  double acc = 0.0;
  for (std::size_t i = trained.curve.size() - window; i < trained.curve.size(); ++i) {
    acc += trained.curve[i].mean_utilization;
  }
  const double full_util = acc / static_cast<double>(window);

  out_run.trace = resolve_trace(config);
  out_run.role_map = role_map_for(config, out_run.trace);
  out_run.layout = shared_layout(out_run.role_map);
  out_run.policies = trained.policies;
  out_run.final_window_utilization = full_util;

  const EvalSummary random_eval =
      evaluate_scripted(BaselinePolicy::Random, out_run.trace, out_run.role_map, 20, 77);
  const EvalSummary greedy_eval =
      evaluate_scripted(BaselinePolicy::Greedy, out_run.trace, out_run.role_map, 20, 77);

  const double elapsed = seconds_since(start);
  const bool beats_random = full_util >= 1.15 * random_eval.mean_utilization;
  const bool near_greedy = full_util >= 0.90 * greedy_eval.mean_utilization;
  result.pass = beats_random && near_greedy && epochs <= 500 && elapsed <= 600.0;
  result.detail = "full=" + fmt(full_util) + " random=" + fmt(random_eval.mean_utilization) +
                  " greedy=" + fmt(greedy_eval.mean_utilization) + " (need >=" +
                  fmt(1.15 * random_eval.mean_utilization) + " and >=" +
                  fmt(0.90 * greedy_eval.mean_utilization) + "), " + std::to_string(epochs) +
                  " epochs in " + fmt(elapsed, 1) + "s";
  return result;
}

// ---------------------------------------------------------------------------
// criterion 6: ablation ordering over seeds

CriterionResult criterion_ablation(const fs::path& work) {
  CriterionResult result{6, "ablation ordering FULL >= BASELINE and both mechanisms"};
  const fs::path wl = source_dir() / "workloads" / "toy.json";
  const std::string out_dir = (work / "ablate").string();

  RunConfig config = toy_config(wl, out_dir, 1, 120, 2);
  config.seeds = {1, 2, 3, 4, 5};

  const std::vector<AblationRow> rows = run_ablate(config, out_dir);
  double baseline = 0.0, hrac = 0.0, lgrs = 0.0, full = 0.0;
  for (const auto& row : rows) {
    if (row.label == "BASELINE") baseline = row.utilization_pct;
    if (row.label == "+HRAC") hrac = row.utilization_pct;
    if (row.label == "+LGRS") lgrs = row.utilization_pct;
    if (row.label == "FULL") full = row.utilization_pct;
  }

  const bool beats_baseline = full > baseline;
  const bool tops_mechanisms = full >= std::max(hrac, lgrs);
  result.pass = beats_baseline && tops_mechanisms;
  result.detail = "BASELINE=" + fmt(baseline, 2) + " +HRAC=" + fmt(hrac, 2) + " +LGRS=" +
                  fmt(lgrs, 2) + " FULL=" + fmt(full, 2) + " over 5 seeds";
  if (hrac < baseline || lgrs < baseline) {
    result.detail += " [flag: single-mechanism variant below BASELINE at desk scale]";
  }
  return result;
}

// ---------------------------------------------------------------------------
// criterion 7: information-loss degradation trend

CriterionResult criterion_info_loss(const ToyRun& run) {
  CriterionResult result{7, "latency and usage spread grow with information loss"};
  std::vector<double> losses, latencies, stddevs;
  for (int i = 0; i <= 7; ++i) {
    const double loss = 0.1 * i;
    const EvalSummary summary = evaluate(run.policies.actors, run.layout, run.trace, run.role_map,
                                         12, derive_seed(4242, static_cast<std::uint64_t>(i)),
                                         loss);
    losses.push_back(loss);
    latencies.push_back(summary.mean_latency_s);
    stddevs.push_back(usage_stddev(summary.merged));
  }
  const double rho_latency = spearman(losses, latencies);
  const double rho_stddev = spearman(losses, stddevs);
  result.pass = rho_latency >= 0.8 && rho_stddev >= 0.6;
  result.detail = "spearman(loss, latency)=" + fmt(rho_latency, 3) +
                  " (need >=0.8), spearman(loss, usage_stddev)=" + fmt(rho_stddev, 3) +
                  " (need >=0.6)";
  return result;
}

// ---------------------------------------------------------------------------
// criterion 8: tenant-fairness trend

CriterionResult criterion_tenant_sweep(const fs::path& work) {
  CriterionResult result{8, "tenant sweep: min share falls, allocation variance rises"};
  const fs::path wl = source_dir() / "workloads" / "toy.json";
  const std::string out_dir = (work / "tenants").string();

  RunConfig config = toy_config(wl, out_dir, 1, 60, 2);
  config.seeds = {1, 2};

  SweepSpec spec;
  spec.axis = SweepAxis::Tenants;
  spec.values = {2, 4, 8, 16};
  spec.seeds = config.seeds;

  const SweepResult sweep = run_sweep(config, spec, out_dir);
  const double rho_min_share = sweep.spearman_by_metric.at("min_tenant_share_pct");
  const double rho_variance = sweep.spearman_by_metric.at("allocation_variance");

  const bool min_share_ok = rho_min_share <= -0.6;
  const bool variance_ok = rho_variance >= 0.6;
  result.pass = min_share_ok && variance_ok;
  // The variance half cannot hold under this metric definition: share variance
  // is bounded by (n-1)/n^2, which itself falls as tenants are added, so every
  // allocator trends down. Documented in the repo notes; kept honest here.
  result.documented_failure = min_share_ok && !variance_ok;
  result.detail = "spearman(tenants, min_share)=" + fmt(rho_min_share, 3) +
                  " (need <=-0.6), spearman(tenants, variance)=" + fmt(rho_variance, 3) +
                  " (need >=0.6)";
  if (result.documented_failure) {
    result.detail += " [documented: population share variance shrinks as tenants grow]";
  }
  return result;
}

// ---------------------------------------------------------------------------
// criterion 9: agent-count scaling trend

CriterionResult criterion_agent_sweep(const fs::path& work) {
  CriterionResult result{9, "agent sweep: throughput saturates, update time climbs"};
  const fs::path wl = source_dir() / "workloads" / "toy_burst.json";
  const std::string out_dir = (work / "agents").string();

  RunConfig config = toy_config(wl, out_dir, 1, 50, 2);
  config.seeds = {1, 2};

  SweepSpec spec;
  spec.axis = SweepAxis::Agents;
  spec.values = {4, 8, 16, 24};
  spec.seeds = config.seeds;

  const SweepResult sweep = run_sweep(config, spec, out_dir);
  std::vector<double> throughput, update_time;
  for (const auto& point : sweep.points) {
    throughput.push_back(point.report.throughput_tasks_per_s);
    if (!point.report.policy_update_time_s) {
      result.detail = "policy update time missing at value " + fmt(point.value, 0);
      return result;
    }
    update_time.push_back(*point.report.policy_update_time_s);
  }

  bool nondecreasing = true;
  for (std::size_t i = 1; i < throughput.size(); ++i) {
    nondecreasing = nondecreasing && throughput[i] >= throughput[i - 1];
  }
  const double first_gain = throughput[1] - throughput[0];
  const double last_gain = throughput[3] - throughput[2];
  const bool saturating = last_gain < first_gain;
  bool updates_climb = true;
  for (std::size_t i = 1; i < update_time.size(); ++i) {
    updates_climb = updates_climb && update_time[i] > update_time[i - 1];
  }

  result.pass = nondecreasing && saturating && updates_climb;
  std::ostringstream detail;
  detail << "throughput=[";
  for (std::size_t i = 0; i < throughput.size(); ++i) {
    detail << (i ? " " : "") << fmt(throughput[i], 3);
  }
  detail << "] update_s=[";
  for (std::size_t i = 0; i < update_time.size(); ++i) {
    detail << (i ? " " : "") << fmt(update_time[i], 4);
  }
  detail << "]";
  result.detail = detail.str();
  return result;
}

// ---------------------------------------------------------------------------
// criterion 10: enumerable bandit sanity

CriterionResult criterion_bandit() {
  CriterionResult result{10, "two-armed bandit reaches 0.99 on the rewarding arm"};
  NetParams net = init_params({2, 4, 2}, 33);
  AdamState adam = make_adam_state(net);

  Transition arm0, arm1;
  arm0.role = arm1.role = RoleTag::Scheduler;
  arm0.obs_features = arm1.obs_features = {1.0};
  arm0.obs_staleness = arm1.obs_staleness = {0};
  arm0.mask = arm1.mask = {1, 1};
  arm0.action = 0;
  arm1.action = 1;

  auto prob0 = [&]() {
    const std::vector<double> input = {1.0, 0.0};
    const std::vector<std::uint8_t> mask = {1, 1};
    return masked_softmax(forward_actor(net, input), mask)[0];
  };

  int steps = 0;
  while (prob0() < 0.99 && steps < 2000) {
    const double p0 = prob0();
    update_actor(RoleTag::Scheduler, net, adam, {&arm0, &arm1}, {2.0 * p0, -2.0 * (1.0 - p0)},
                 5e-2);
    ++steps;
  }
  result.pass = prob0() >= 0.99 && steps < 2000;
  result.detail = "p(arm0)=" + fmt(prob0(), 4) + " after " + std::to_string(steps) + " steps";
  return result;
}

}  // namespace

int main() {
  const fs::path work =
      fs::temp_directory_path() / ("orchestra-acceptance-" + std::to_string(::getpid()));
  fs::create_directories(work);

  std::vector<CriterionResult> results;
  const auto total_start = Clock::now();

  results.push_back(criterion_gradient_oracle());
  results.push_back(criterion_reward_normalization());
  results.push_back(criterion_simulator_fuzz());
  results.push_back(criterion_determinism(work));

  ToyRun toy_run;
  results.push_back(criterion_learning(work, toy_run));
  results.push_back(criterion_ablation(work));
  results.push_back(criterion_info_loss(toy_run));
  results.push_back(criterion_tenant_sweep(work));
  results.push_back(criterion_agent_sweep(work));
  results.push_back(criterion_bandit());

  int unexpected_failures = 0;
  for (const auto& r : results) {
    std::cout << (r.pass ? "[PASS] " : "[FAIL] ") << r.id << ". " << r.name;
    if (!r.detail.empty()) std::cout << " — " << r.detail;
    std::cout << '\n';
    if (!r.pass && !r.documented_failure) ++unexpected_failures;
  }
  std::cout << results.size() - std::count_if(results.begin(), results.end(),
                                             [](const CriterionResult& r) { return !r.pass; })
            << "/" << results.size() << " criteria pass ("
            << std::count_if(results.begin(), results.end(),
                             [](const CriterionResult& r) {
                               return !r.pass && r.documented_failure;
                             })
            << " documented failure(s)) in " << fmt(seconds_since(total_start), 1) << "s\n";

  std::error_code ec;
  fs::remove_all(work, ec);
  return unexpected_failures;
}
