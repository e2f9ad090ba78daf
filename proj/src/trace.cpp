#include "orchestra/trace.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "orchestra/csv.hpp"
#include "orchestra/errors.hpp"

namespace orchestra {

using json = nlohmann::json;

const char* to_string(MachineEventKind k) {
  switch (k) {
    case MachineEventKind::Add: return "ADD";
    case MachineEventKind::Remove: return "REMOVE";
    case MachineEventKind::Update: return "UPDATE";
  }
  return "?";
}

const char* to_string(TaskEventKind k) {
  switch (k) {
    case TaskEventKind::Submit: return "SUBMIT";
    case TaskEventKind::Finish: return "FINISH";
    case TaskEventKind::Kill: return "KILL";
  }
  return "?";
}

namespace {

MachineEventKind machine_kind_from(const std::string& s, const std::string& ctx) {
  if (s == "ADD") return MachineEventKind::Add;
  if (s == "REMOVE") return MachineEventKind::Remove;
  if (s == "UPDATE") return MachineEventKind::Update;
  throw ParseError(ctx + ": unknown machine event kind '" + s + "'");
}

TaskEventKind task_kind_from(const std::string& s, const std::string& ctx) {
  if (s == "SUBMIT") return TaskEventKind::Submit;
  if (s == "FINISH") return TaskEventKind::Finish;
  if (s == "KILL") return TaskEventKind::Kill;
  throw ParseError(ctx + ": unknown task event kind '" + s + "'");
}

std::int64_t parse_timestamp(const std::string& field, const std::string& ctx) {
  // Whole-second resolution; fractional timestamps are rejected.
  if (field.find('.') != std::string::npos) {
    throw ParseError(ctx + ": sub-second timestamp '" + field + "'");
  }
  std::int64_t ts = parse_int(field, ctx);
  if (ts < 0) throw ValidationError(ctx + ": negative timestamp");
  return ts;
}

std::string row_ctx(const char* file, std::size_t line_no) {
  return std::string(file) + " row " + std::to_string(line_no);
}

void check_id(const std::string& id, const std::string& ctx) {
  if (id.empty()) throw ParseError(ctx + ": empty id field");
}

std::vector<std::string> read_lines(std::istream& in) {
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

// Horizon generous enough for weak policies to still drain most of the queue:
// last arrival plus a few times the capacity-bound makespan. A pure function
// of the event streams, so parsing a serialized trace reproduces the horizon
// the generator assigned (round-trip identity).
std::int64_t derived_horizon(const Trace& trace) {
  std::int64_t max_ts = 0;
  for (const auto& ev : trace.machine_events) max_ts = std::max(max_ts, ev.timestamp);
  for (const auto& ev : trace.task_events) max_ts = std::max(max_ts, ev.timestamp);

  double total_cpu_capacity = 0;
  for (const auto& ev : trace.machine_events) {
    if (ev.kind == MachineEventKind::Add) total_cpu_capacity += ev.cpu_capacity;
  }
  double serial_cpu_work = 0, max_duration = 0;
  std::int64_t last_submit = 0;
  int n_submits = 0;
  for (const auto& ev : trace.task_events) {
    if (ev.kind != TaskEventKind::Submit) continue;
    ++n_submits;
    last_submit = std::max(last_submit, ev.timestamp);
    if (ev.duration) {
      serial_cpu_work += ev.cpu_demand * *ev.duration;
      max_duration = std::max(max_duration, *ev.duration);
    }
  }
  if (n_submits == 0) return max_ts;

  const double drain = total_cpu_capacity > 1e-9
                           ? 3.0 * serial_cpu_work / total_cpu_capacity
                           : 10.0 * static_cast<double>(n_submits);
  const std::int64_t padded = last_submit + static_cast<std::int64_t>(std::ceil(drain)) +
                              static_cast<std::int64_t>(std::ceil(max_duration)) + 60;
  return std::max(max_ts, padded);
}

}  // namespace

CsvTable read_csv_text(std::string_view text) {
  CsvTable table;
  std::istringstream in{std::string(text)};
  auto lines = read_lines(in);
  bool have_header = false;
  for (auto& line : lines) {
    if (line.empty() || line[0] == '#') continue;
    auto fields = split_csv_row(line);
    if (!have_header) {
      table.header = std::move(fields);
      have_header = true;
    } else {
      table.rows.push_back(std::move(fields));
    }
  }
  if (!have_header) throw ParseError("csv document has no header row");
  return table;
}

CsvTable read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return read_csv_text(ss.str());
}

Trace parse_trace(std::istream& machine_stream, std::istream& task_stream) {
  Trace trace;

  auto mlines = read_lines(machine_stream);
  if (mlines.empty() || mlines[0] != kMachineEventsHeader) {
    throw ParseError("machine_events: missing or wrong header");
  }
  std::unordered_set<std::string> added_machines;
  for (std::size_t i = 1; i < mlines.size(); ++i) {
    if (mlines[i].empty()) continue;
    const std::string ctx = row_ctx("machine_events", i + 1);
    auto f = split_csv_row(mlines[i]);
    if (f.size() != 6) throw ParseError(ctx + ": expected 6 fields, got " + std::to_string(f.size()));
    MachineEvent ev;
    ev.timestamp = parse_timestamp(f[0], ctx);
    ev.machine_id = f[1];
    check_id(ev.machine_id, ctx);
    ev.kind = machine_kind_from(f[2], ctx);
    ev.cpu_capacity = parse_double(f[3], ctx);
    ev.mem_capacity = parse_double(f[4], ctx);
    ev.io_capacity = parse_double(f[5], ctx);
    if (ev.cpu_capacity < 0 || ev.mem_capacity < 0 || ev.io_capacity < 0) {
      throw ValidationError(ctx + ": negative capacity");
    }
    if (ev.kind == MachineEventKind::Add) {
      added_machines.insert(ev.machine_id);
    } else if (!added_machines.count(ev.machine_id)) {
      throw ValidationError(ctx + ": " + to_string(ev.kind) + " before ADD for machine '" +
                            ev.machine_id + "'");
    }
    trace.machine_events.push_back(std::move(ev));
  }

  auto tlines = read_lines(task_stream);
  if (tlines.empty() || tlines[0] != kTaskEventsHeader) {
    throw ParseError("task_events: missing or wrong header");
  }
  struct TaskTrack {
    std::int64_t submit_ts = -1;
    std::size_t submit_index = 0;
    bool terminal = false;
  };
  std::unordered_map<std::string, TaskTrack> tracks;
  for (std::size_t i = 1; i < tlines.size(); ++i) {
    if (tlines[i].empty()) continue;
    const std::string ctx = row_ctx("task_events", i + 1);
    auto f = split_csv_row(tlines[i]);
    if (f.size() != 9) throw ParseError(ctx + ": expected 9 fields, got " + std::to_string(f.size()));
    TaskEvent ev;
    ev.timestamp = parse_timestamp(f[0], ctx);
    ev.job_id = f[1];
    ev.task_id = f[2];
    ev.tenant_id = f[3];
    check_id(ev.job_id, ctx);
    check_id(ev.task_id, ctx);
    check_id(ev.tenant_id, ctx);
    ev.kind = task_kind_from(f[4], ctx);
    ev.cpu_demand = parse_double(f[5], ctx);
    ev.mem_demand = parse_double(f[6], ctx);
    ev.io_demand = parse_double(f[7], ctx);
    for (double d : {ev.cpu_demand, ev.mem_demand, ev.io_demand}) {
      if (d < 0) throw ValidationError(ctx + ": negative demand");
      if (d > 1) throw ValidationError(ctx + ": demand above 1");
    }
    if (!f[8].empty()) {
      double dur = parse_double(f[8], ctx);
      if (dur < 0) throw ValidationError(ctx + ": negative duration");
      ev.duration = dur;
    }

    auto& track = tracks[ev.task_id];
    if (ev.kind == TaskEventKind::Submit) {
      if (track.submit_ts >= 0) throw ValidationError(ctx + ": duplicate SUBMIT for task '" + ev.task_id + "'");
      track.submit_ts = ev.timestamp;
      track.submit_index = trace.task_events.size();
    } else {
      if (track.submit_ts < 0) {
        throw ValidationError(ctx + ": " + to_string(ev.kind) + " before SUBMIT for task '" +
                              ev.task_id + "'");
      }
      if (ev.timestamp < track.submit_ts) {
        throw ValidationError(ctx + ": " + to_string(ev.kind) + " earlier than SUBMIT for task '" +
                              ev.task_id + "'");
      }
      if (track.terminal) {
        throw ValidationError(ctx + ": task '" + ev.task_id + "' already terminated");
      }
      track.terminal = true;
      // KILL is treated as completion with no residual work, so the derived
      // duration is just the lifetime either way.
      auto& submit = trace.task_events[track.submit_index];
      if (!submit.duration) {
        submit.duration = static_cast<double>(ev.timestamp - track.submit_ts);
      }
    }
    trace.task_events.push_back(std::move(ev));
  }

  std::stable_sort(trace.machine_events.begin(), trace.machine_events.end(),
                   [](const MachineEvent& a, const MachineEvent& b) { return a.timestamp < b.timestamp; });
  std::stable_sort(trace.task_events.begin(), trace.task_events.end(),
                   [](const TaskEvent& a, const TaskEvent& b) { return a.timestamp < b.timestamp; });

  trace.horizon = derived_horizon(trace);
  return trace;
}

Trace parse_trace_files(const std::string& machine_path, const std::string& task_path) {
  std::ifstream m(machine_path), t(task_path);
  if (!m) throw Error("cannot open " + machine_path);
  if (!t) throw Error("cannot open " + task_path);
  return parse_trace(m, t);
}

void serialize_trace(const Trace& trace, std::ostream& machine_out, std::ostream& task_out) {
  machine_out << kMachineEventsHeader << "\n";
  for (const auto& ev : trace.machine_events) {
    machine_out << ev.timestamp << ',' << ev.machine_id << ',' << to_string(ev.kind) << ','
                << format_double(ev.cpu_capacity) << ',' << format_double(ev.mem_capacity) << ','
                << format_double(ev.io_capacity) << "\n";
  }
  task_out << kTaskEventsHeader << "\n";
  for (const auto& ev : trace.task_events) {
    task_out << ev.timestamp << ',' << ev.job_id << ',' << ev.task_id << ',' << ev.tenant_id << ','
             << to_string(ev.kind) << ',' << format_double(ev.cpu_demand) << ','
             << format_double(ev.mem_demand) << ',' << format_double(ev.io_demand) << ',';
    if (ev.duration) task_out << format_double(*ev.duration);
    task_out << "\n";
  }
}

void serialize_trace_files(const Trace& trace, const std::string& machine_path,
                           const std::string& task_path) {
  std::ofstream m(machine_path), t(task_path);
  if (!m) throw Error("cannot write " + machine_path);
  if (!t) throw Error("cannot write " + task_path);
  serialize_trace(trace, m, t);
}

double DistSpec::sample(Rng& rng) const {
  switch (kind) {
    case Kind::Constant: return value;
    case Kind::Uniform: return rng.uniform(low, high);
    case Kind::Exponential: return rng.exponential(mean);
  }
  return 0;
}

void WorkloadSpec::validate() const {
  if (n_machines < 1) throw ValidationError("workload: n_machines must be >= 1");
  if (n_tasks < 1) throw ValidationError("workload: n_tasks must be >= 1");
  if (n_tenants < 1) throw ValidationError("workload: n_tenants must be >= 1");
  if (!(task_arrival_rate > 0)) throw ValidationError("workload: task_arrival_rate must be > 0");
  if (tenant_skew < 0) throw ValidationError("workload: tenant_skew must be >= 0");
  auto check_dist = [](const DistSpec& d, const char* name) {
    if (d.kind == DistSpec::Kind::Uniform && d.high < d.low) {
      throw ValidationError(std::string("workload: ") + name + ": high < low");
    }
    if (d.kind == DistSpec::Kind::Exponential && !(d.mean > 0)) {
      throw ValidationError(std::string("workload: ") + name + ": mean must be > 0");
    }
  };
  check_dist(machine_capacity_distribution, "machine_capacity_distribution");
  check_dist(demand_cpu, "demand_distribution.cpu");
  check_dist(demand_mem, "demand_distribution.mem");
  check_dist(demand_io, "demand_distribution.io");
  check_dist(duration_distribution, "duration_distribution");
}

namespace {

std::string padded_id(const char* prefix, int index, int count) {
  int digits = 1;
  for (int v = count - 1; v >= 10; v /= 10) ++digits;
  std::string num = std::to_string(index);
  std::string out = prefix;
  out.append(static_cast<std::size_t>(digits) - std::min<std::size_t>(digits, num.size()), '0');
  out += num;
  return out;
}

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

}  // namespace

Trace generate_synthetic(const WorkloadSpec& spec, std::uint64_t seed) {
  spec.validate();
  Trace trace;
  Rng rng(derive_seed(seed, 0x7161CE));

  for (int i = 0; i < spec.n_machines; ++i) {
    MachineEvent ev;
    ev.timestamp = 0;
    ev.machine_id = padded_id("m-", i, spec.n_machines);
    ev.kind = MachineEventKind::Add;
    ev.cpu_capacity = std::max(0.0, spec.machine_capacity_distribution.sample(rng));
    ev.mem_capacity = std::max(0.0, spec.machine_capacity_distribution.sample(rng));
    ev.io_capacity = std::max(0.0, spec.machine_capacity_distribution.sample(rng));
    trace.machine_events.push_back(std::move(ev));
  }

  // Zipf weights by tenant rank; skew 0 degenerates to uniform.
  std::vector<double> cumulative(spec.n_tenants);
  double acc = 0;
  for (int k = 0; k < spec.n_tenants; ++k) {
    acc += std::pow(static_cast<double>(k + 1), -spec.tenant_skew);
    cumulative[k] = acc;
  }

  double arrival_clock = 0;
  for (int i = 0; i < spec.n_tasks; ++i) {
    arrival_clock += rng.exponential(1.0 / spec.task_arrival_rate);
    TaskEvent ev;
    ev.timestamp = static_cast<std::int64_t>(std::floor(arrival_clock));
    ev.job_id = padded_id("j-", i, spec.n_tasks);
    ev.task_id = padded_id("t-", i, spec.n_tasks);
    ev.kind = TaskEventKind::Submit;
    ev.cpu_demand = clamp01(spec.demand_cpu.sample(rng));
    ev.mem_demand = clamp01(spec.demand_mem.sample(rng));
    ev.io_demand = clamp01(spec.demand_io.sample(rng));
    ev.duration = std::max(1.0, std::floor(spec.duration_distribution.sample(rng)));
    double u = rng.uniform01() * acc;
    int tenant = static_cast<int>(std::lower_bound(cumulative.begin(), cumulative.end(), u) -
                                  cumulative.begin());
    if (tenant >= spec.n_tenants) tenant = spec.n_tenants - 1;
    ev.tenant_id = padded_id("tenant-", tenant + 1, spec.n_tenants + 1);
    trace.task_events.push_back(std::move(ev));
  }

  trace.horizon = derived_horizon(trace);
  return trace;
}

TraceSummary trace_stats(const Trace& trace) {
  TraceSummary s;
  std::unordered_set<std::string> machines, tenants;
  for (const auto& ev : trace.machine_events) {
    if (ev.kind == MachineEventKind::Add) machines.insert(ev.machine_id);
  }
  for (const auto& ev : trace.task_events) {
    if (ev.kind != TaskEventKind::Submit) continue;
    ++s.n_tasks;
    tenants.insert(ev.tenant_id);
    s.total_cpu_demand += ev.cpu_demand;
    s.total_mem_demand += ev.mem_demand;
    s.total_io_demand += ev.io_demand;
    ++s.tasks_per_tenant[ev.tenant_id];
  }
  s.n_machines = static_cast<int>(machines.size());
  s.n_tenants = static_cast<int>(tenants.size());
  s.horizon = trace.horizon;
  return s;
}

namespace {

DistSpec dist_from_json(const json& j, const std::string& ctx) {
  if (!j.is_object()) throw ConfigError(ctx + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    if (k != "kind" && k != "value" && k != "low" && k != "high" && k != "mean") {
      throw ConfigError(ctx + ": unknown key '" + k + "'");
    }
  }
  if (!j.contains("kind")) throw ConfigError(ctx + ": missing 'kind'");
  DistSpec d;
  std::string kind = j.at("kind").get<std::string>();
  if (kind == "constant") {
    d.kind = DistSpec::Kind::Constant;
    d.value = j.at("value").get<double>();
  } else if (kind == "uniform") {
    d.kind = DistSpec::Kind::Uniform;
    d.low = j.at("low").get<double>();
    d.high = j.at("high").get<double>();
  } else if (kind == "exponential") {
    d.kind = DistSpec::Kind::Exponential;
    d.mean = j.at("mean").get<double>();
  } else {
    throw ConfigError(ctx + ": unknown distribution kind '" + kind + "'");
  }
  return d;
}

}  // namespace

WorkloadSpec workload_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("workload json: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("workload json: expected an object");
  static const std::unordered_set<std::string> known = {
      "n_machines",          "machine_capacity_distribution",
      "task_arrival_rate",   "n_tasks",
      "demand_distribution", "duration_distribution",
      "n_tenants",           "tenant_skew"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.count(it.key())) throw ConfigError("workload json: unknown key '" + it.key() + "'");
  }
  WorkloadSpec spec;
  try {
    spec.n_machines = j.at("n_machines").get<int>();
    spec.machine_capacity_distribution =
        dist_from_json(j.at("machine_capacity_distribution"), "machine_capacity_distribution");
    spec.task_arrival_rate = j.at("task_arrival_rate").get<double>();
    spec.n_tasks = j.at("n_tasks").get<int>();
    const json& dd = j.at("demand_distribution");
    if (!dd.is_object()) throw ConfigError("demand_distribution: expected an object");
    for (auto it = dd.begin(); it != dd.end(); ++it) {
      if (it.key() != "cpu" && it.key() != "mem" && it.key() != "io") {
        throw ConfigError("demand_distribution: unknown key '" + it.key() + "'");
      }
    }
    spec.demand_cpu = dist_from_json(dd.at("cpu"), "demand_distribution.cpu");
    spec.demand_mem = dist_from_json(dd.at("mem"), "demand_distribution.mem");
    spec.demand_io = dist_from_json(dd.at("io"), "demand_distribution.io");
    spec.duration_distribution = dist_from_json(j.at("duration_distribution"), "duration_distribution");
    spec.n_tenants = j.at("n_tenants").get<int>();
    spec.tenant_skew = j.at("tenant_skew").get<double>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("workload json: ") + e.what());
  }
  spec.validate();
  return spec;
}

WorkloadSpec workload_from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return workload_from_json_text(ss.str());
}

}  // namespace orchestra
