#include "orchestra/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "orchestra/csv.hpp"
#include "orchestra/errors.hpp"

namespace orchestra {

namespace {

using json = nlohmann::json;

void reject_unknown_keys(const json& j, const std::unordered_set<std::string>& known,
                         const std::string& ctx) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) throw ConfigError(ctx + ": unknown key '" + it.key() + "'");
  }
}

RoleCounts roles_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("roles: expected an object");
  reject_unknown_keys(j, {"compute", "storage", "scheduler"}, "roles");
  RoleCounts counts;
  try {
    counts.compute = j.at("compute").get<int>();
    counts.storage = j.at("storage").get<int>();
    counts.scheduler = j.at("scheduler").get<int>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("roles: ") + e.what());
  }
  return counts;
}

void train_from_json(const json& j, TrainConfig& train) {
  if (!j.is_object()) throw ConfigError("train: expected an object");
  static const std::unordered_set<std::string> known = {
      "gamma",          "alpha_fusion",      "eps_norm",          "batch_size",
      "buffer_capacity", "staleness_limit",  "total_epochs",      "episodes_per_epoch",
      "updates_per_epoch", "rollout_workers", "hidden_layers",    "lr_initial",
      "lr_floor",       "info_loss_rate",    "variant"};
  reject_unknown_keys(j, known, "train");
  try {
    if (j.contains("gamma")) train.gamma = j.at("gamma").get<double>();
    if (j.contains("alpha_fusion")) train.alpha_fusion = j.at("alpha_fusion").get<double>();
    if (j.contains("eps_norm")) train.eps_norm = j.at("eps_norm").get<double>();
    if (j.contains("batch_size")) train.batch_size = j.at("batch_size").get<int>();
    if (j.contains("buffer_capacity")) train.buffer_capacity = j.at("buffer_capacity").get<int>();
    if (j.contains("staleness_limit")) train.staleness_limit = j.at("staleness_limit").get<int>();
    if (j.contains("total_epochs")) train.total_epochs = j.at("total_epochs").get<int>();
    if (j.contains("episodes_per_epoch")) {
      train.episodes_per_epoch = j.at("episodes_per_epoch").get<int>();
    }
    if (j.contains("updates_per_epoch")) {
      train.updates_per_epoch = j.at("updates_per_epoch").get<int>();
    }
    if (j.contains("rollout_workers")) train.rollout_workers = j.at("rollout_workers").get<int>();
    if (j.contains("hidden_layers")) {
      train.hidden_layers = j.at("hidden_layers").get<std::vector<int>>();
    }
    if (j.contains("lr_initial")) train.lr.initial = j.at("lr_initial").get<double>();
    if (j.contains("lr_floor")) train.lr.floor = j.at("lr_floor").get<double>();
    if (j.contains("info_loss_rate")) train.info_loss_rate = j.at("info_loss_rate").get<double>();
    if (j.contains("variant")) train.variant = variant_from_string(j.at("variant").get<std::string>());
  } catch (const json::exception& e) {
    throw ConfigError(std::string("train: ") + e.what());
  }
}

json dist_to_json(const DistSpec& d) {
  json j;
  switch (d.kind) {
    case DistSpec::Kind::Constant:
      j["kind"] = "constant";
      j["value"] = d.value;
      break;
    case DistSpec::Kind::Uniform:
      j["kind"] = "uniform";
      j["low"] = d.low;
      j["high"] = d.high;
      break;
    case DistSpec::Kind::Exponential:
      j["kind"] = "exponential";
      j["mean"] = d.mean;
      break;
  }
  return j;
}

json workload_to_json(const WorkloadSpec& spec) {
  json j;
  j["n_machines"] = spec.n_machines;
  j["machine_capacity_distribution"] = dist_to_json(spec.machine_capacity_distribution);
  j["task_arrival_rate"] = spec.task_arrival_rate;
  j["n_tasks"] = spec.n_tasks;
  j["demand_distribution"] = {{"cpu", dist_to_json(spec.demand_cpu)},
                              {"mem", dist_to_json(spec.demand_mem)},
                              {"io", dist_to_json(spec.demand_io)}};
  j["duration_distribution"] = dist_to_json(spec.duration_distribution);
  j["n_tenants"] = spec.n_tenants;
  j["tenant_skew"] = spec.tenant_skew;
  return j;
}

}  // namespace

void RunConfig::validate() const {
  if (!trace_dir.has_value() && !workload.has_value()) {
    throw ConfigError("config needs either 'trace_dir' or 'workload'");
  }
  if (trace_dir.has_value() && workload.has_value()) {
    throw ConfigError("'trace_dir' and 'workload' are mutually exclusive");
  }
  if (seeds.empty()) throw ConfigError("seed list must not be empty");
  if (eval_episodes < 1) throw ConfigError("eval_episodes must be positive");
  if (convergence_window < 1) throw ConfigError("convergence_window must be positive");
  if (convergence_tol <= 0.0) throw ConfigError("convergence_tol must be positive");
  if (n_tenants.has_value() && *n_tenants < 1) throw ConfigError("n_tenants must be positive");
  train.validate();
}

RunConfig run_config_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("run config json: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("run config json: expected an object");
  static const std::unordered_set<std::string> known = {
      "seed",           "seeds",     "out_dir",        "trace_dir",
      "workload",       "n_tenants", "roles",          "train",
      "eval_episodes",  "convergence_window", "convergence_tol", "episode_log"};
  reject_unknown_keys(j, known, "run config");

  RunConfig config;
  try {
    if (j.contains("seed")) config.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("seeds")) config.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("out_dir")) config.out_dir = j.at("out_dir").get<std::string>();
    if (j.contains("trace_dir")) config.trace_dir = j.at("trace_dir").get<std::string>();
    if (j.contains("workload")) {
      if (j.at("workload").is_string()) {
        config.workload = workload_from_json_file(j.at("workload").get<std::string>());
      } else {
        config.workload = workload_from_json_text(j.at("workload").dump());
      }
    }
    if (j.contains("n_tenants")) config.n_tenants = j.at("n_tenants").get<int>();
    if (j.contains("roles")) config.roles = roles_from_json(j.at("roles"));
    if (j.contains("train")) train_from_json(j.at("train"), config.train);
    if (j.contains("eval_episodes")) config.eval_episodes = j.at("eval_episodes").get<int>();
    if (j.contains("convergence_window")) {
      config.convergence_window = j.at("convergence_window").get<int>();
    }
    if (j.contains("convergence_tol")) config.convergence_tol = j.at("convergence_tol").get<double>();
    if (j.contains("episode_log")) config.episode_log = j.at("episode_log").get<bool>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }

  if (config.seeds.empty()) config.seeds = {config.seed};
  config.train.seed = config.seed;
  config.train.roles = config.roles;
  config.train.lr.total_epochs = config.train.total_epochs;
  config.train = ablation_variant(config.train, config.train.variant);
  config.validate();
  return config;
}

RunConfig run_config_from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return run_config_from_json_text(ss.str());
}

std::string config_fingerprint(const RunConfig& config) {
  json j;
  j["seed"] = config.seed;
  j["seeds"] = config.seeds;
  if (config.trace_dir) j["trace_dir"] = *config.trace_dir;
  if (config.workload) j["workload"] = workload_to_json(*config.workload);
  if (config.n_tenants) j["n_tenants"] = *config.n_tenants;
  j["roles"] = {{"compute", config.roles.compute},
                {"storage", config.roles.storage},
                {"scheduler", config.roles.scheduler}};
  const TrainConfig& t = config.train;
  j["train"] = {{"gamma", t.gamma},
                {"alpha_fusion", t.alpha_fusion},
                {"eps_norm", t.eps_norm},
                {"batch_size", t.batch_size},
                {"buffer_capacity", t.buffer_capacity},
                {"staleness_limit", t.staleness_limit},
                {"total_epochs", t.total_epochs},
                {"episodes_per_epoch", t.episodes_per_epoch},
                {"updates_per_epoch", t.updates_per_epoch},
                {"hidden_layers", t.hidden_layers},
                {"lr_initial", t.lr.initial},
                {"lr_floor", t.lr.floor},
                {"info_loss_rate", t.info_loss_rate},
                {"variant", to_string(t.variant)}};
  // rollout_workers deliberately omitted: worker count must not change results
  return j.dump();
}

Trace resolve_trace(const RunConfig& config) {
  if (config.trace_dir.has_value()) {
    const std::string machines = *config.trace_dir + "/" + kMachineEventsFile;
    const std::string tasks = *config.trace_dir + "/" + kTaskEventsFile;
    return parse_trace_files(machines, tasks);
  }
  WorkloadSpec spec = *config.workload;
  if (config.n_tenants.has_value()) spec.n_tenants = *config.n_tenants;
  return generate_synthetic(spec, config.seed);
}

std::string to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::InfoLoss: return "info_loss";
    case SweepAxis::Tenants: return "tenants";
    case SweepAxis::Agents: return "agents";
  }
  throw ContractViolation("unhandled sweep axis");
}

SweepAxis sweep_axis_from_string(const std::string& s) {
  if (s == "info_loss") return SweepAxis::InfoLoss;
  if (s == "tenants") return SweepAxis::Tenants;
  if (s == "agents") return SweepAxis::Agents;
  throw ParseError("unknown sweep axis '" + s + "' (expected info_loss, tenants, or agents)");
}

void SweepSpec::validate() const {
  if (values.size() < 2) throw ConfigError("sweep needs at least two axis values");
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] <= values[i - 1]) throw ConfigError("sweep values must be strictly increasing");
  }
  if (seeds.empty()) throw ConfigError("sweep needs at least one seed");
  if (axis == SweepAxis::Tenants || axis == SweepAxis::Agents) {
    for (double v : values) {
      if (v < 1.0 || v != std::floor(v)) {
        throw ConfigError("sweep axis '" + to_string(axis) + "' needs positive integer values");
      }
    }
  }
  if (axis == SweepAxis::InfoLoss) {
    for (double v : values) {
      if (v < 0.0 || v > 1.0) throw ConfigError("info_loss values must lie in [0, 1]");
    }
  }
}

std::vector<double> parse_values_list(const std::string& csv_list) {
  std::vector<double> values;
  std::string token;
  std::istringstream in(csv_list);
  while (std::getline(in, token, ',')) {
    const auto begin = token.find_first_not_of(" \t");
    if (begin == std::string::npos) throw ParseError("empty entry in values list");
    const auto end = token.find_last_not_of(" \t");
    values.push_back(parse_double(token.substr(begin, end - begin + 1), "values list"));
  }
  if (values.empty()) throw ParseError("values list is empty");
  return values;
}

RoleCounts role_counts_for_agents(int total_agents) {
  if (total_agents < 3) throw ConfigError("agent sweep needs at least 3 agents (one per role)");
  RoleCounts counts;
  counts.scheduler = std::max(1, total_agents / 4);
  counts.storage = std::max(1, total_agents / 6);
  counts.compute = total_agents - counts.scheduler - counts.storage;
  if (counts.compute < 1) {
    counts.compute = 1;
    counts.scheduler = std::max(1, total_agents - 2);
    counts.storage = 1;
  }
  return counts;
}

}  // namespace orchestra
