#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "orchestra/commands.hpp"
#include "orchestra/config.hpp"
#include "orchestra/errors.hpp"
#include "orchestra/marl.hpp"
#include "orchestra/metrics.hpp"
#include "orchestra/trace.hpp"

namespace py = pybind11;
using namespace orchestra;

namespace {

RunConfig config_from_text(const std::string& text, const std::optional<std::string>& out_dir) {
  RunConfig config = run_config_from_json_text(text);
  if (out_dir) config.out_dir = *out_dir;
  return config;
}

py::dict report_to_dict(const MetricsReport& r) {
  py::dict d;
  d["resource_utilization_pct"] = r.resource_utilization_pct;
  d["avg_scheduling_latency_ms"] =
      r.avg_scheduling_latency_ms ? py::object(py::float_(*r.avg_scheduling_latency_ms))
                                  : py::object(py::none());
  d["convergence_epoch"] = r.convergence_epoch ? py::object(py::int_(*r.convergence_epoch))
                                               : py::object(py::none());
  d["usage_stddev"] = r.usage_stddev;
  d["allocation_variance"] = r.allocation_variance;
  d["min_tenant_share_pct"] = r.min_tenant_share_pct;
  d["throughput_tasks_per_s"] = r.throughput_tasks_per_s;
  d["policy_update_time_s"] = r.policy_update_time_s
                                  ? py::object(py::float_(*r.policy_update_time_s))
                                  : py::object(py::none());
  return d;
}

py::dict curve_row_to_dict(const EpochStats& s) {
  py::dict d;
  d["epoch"] = s.epoch;
  d["lr"] = s.lr;
  d["mean_utilization"] = s.mean_utilization;
  d["mean_latency_s"] = s.mean_latency_s;
  d["actor_loss"] = s.actor_loss;
  d["critic_loss"] = s.critic_loss;
  d["episodes"] = s.episodes;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Trace-driven cluster scheduling simulator with role-based multi-agent training";

  py::register_exception<Error>(m, "OrchestraError");

  m.def(
      "generate_trace",
      [](const std::string& workload_json, const std::string& out_dir, std::uint64_t seed) {
        const WorkloadSpec spec = workload_from_json_text(workload_json);
        const Trace trace = generate_synthetic(spec, seed);
        std::filesystem::create_directories(out_dir);
        serialize_trace_files(
            trace, (std::filesystem::path(out_dir) / kMachineEventsFile).string(),
            (std::filesystem::path(out_dir) / kTaskEventsFile).string());
      },
      py::arg("workload_json"), py::arg("out_dir"), py::arg("seed") = 1,
      "Generate a synthetic trace from a workload spec JSON string.");

  m.def(
      "trace_summary",
      [](const std::string& trace_dir) {
        const std::filesystem::path dir(trace_dir);
        const Trace trace = parse_trace_files((dir / kMachineEventsFile).string(),
                                              (dir / kTaskEventsFile).string());
        const TraceSummary s = trace_stats(trace);
        py::dict d;
        d["n_tasks"] = s.n_tasks;
        d["n_machines"] = s.n_machines;
        d["n_tenants"] = s.n_tenants;
        d["total_cpu_demand"] = s.total_cpu_demand;
        d["total_mem_demand"] = s.total_mem_demand;
        d["total_io_demand"] = s.total_io_demand;
        d["horizon"] = s.horizon;
        d["tasks_per_tenant"] = s.tasks_per_tenant;
        return d;
      },
      py::arg("trace_dir"), "Parse a trace directory and return aggregate statistics.");

  m.def(
      "train",
      [](const std::string& config_json, const std::optional<std::string>& out_dir,
         std::optional<int> stop_after) {
        const RunConfig config = config_from_text(config_json, out_dir);
        TrainResult result;
        {
          py::gil_scoped_release release;
          result = run_train(config, config.out_dir, stop_after);
        }
        py::list curve;
        for (const auto& row : result.curve) curve.append(curve_row_to_dict(row));
        py::dict d;
        d["epochs_completed"] = result.epochs_completed;
        d["episodes"] = result.episodes;
        d["curve"] = curve;
        d["out_dir"] = config.out_dir;
        return d;
      },
      py::arg("config_json"), py::arg("out_dir") = std::nullopt,
      py::arg("stop_after") = std::nullopt,
      "Train (or resume) into the run directory and return the learning curve.");

  m.def(
      "evaluate",
      [](const std::string& config_json, const std::optional<std::string>& out_dir) {
        const RunConfig config = config_from_text(config_json, out_dir);
        MetricsReport report;
        {
          py::gil_scoped_release release;
          report = run_eval(config, config.out_dir);
        }
        return report_to_dict(report);
      },
      py::arg("config_json"), py::arg("out_dir") = std::nullopt,
      "Evaluate the checkpoint in the run directory and return the metrics report.");

  m.def(
      "rollout_scripted",
      [](const std::string& config_json, const std::string& policy, int episodes,
         std::uint64_t seed) {
        const RunConfig config = run_config_from_json_text(config_json);
        BaselinePolicy p;
        if (policy == "random") {
          p = BaselinePolicy::Random;
        } else if (policy == "greedy") {
          p = BaselinePolicy::Greedy;
        } else {
          throw ConfigError("unknown scripted policy '" + policy + "'");
        }
        EvalSummary summary;
        {
          py::gil_scoped_release release;
          const Trace trace = resolve_trace(config);
          const RoleMap role_map = role_map_for(config, trace);
          summary = evaluate_scripted(p, trace, role_map, episodes, seed);
        }
        py::dict d;
        d["mean_utilization"] = summary.mean_utilization;
        d["mean_latency_s"] = summary.mean_latency_s;
        d["episodes"] = summary.episodes;
        return d;
      },
      py::arg("config_json"), py::arg("policy") = "random", py::arg("episodes") = 1,
      py::arg("seed") = 1,
      "Run episodes under a scripted baseline policy ('random' or 'greedy').");

  m.def(
      "ablate",
      [](const std::string& config_json, const std::optional<std::string>& out_dir) {
        const RunConfig config = config_from_text(config_json, out_dir);
        std::vector<AblationRow> rows;
        {
          py::gil_scoped_release release;
          rows = run_ablate(config, config.out_dir);
        }
        py::list out;
        for (const auto& row : rows) {
          py::dict d;
          d["variant"] = row.label;
          d["resource_utilization_pct"] = row.utilization_pct;
          d["avg_scheduling_latency_ms"] =
              row.latency_ms ? py::object(py::float_(*row.latency_ms)) : py::object(py::none());
          d["convergence_epoch"] = row.convergence_epoch
                                       ? py::object(py::float_(*row.convergence_epoch))
                                       : py::object(py::none());
          out.append(d);
        }
        return out;
      },
      py::arg("config_json"), py::arg("out_dir") = std::nullopt,
      "Run the four-variant ablation and return one row per variant.");

  m.def(
      "sweep",
      [](const std::string& config_json, const std::string& axis,
         const std::vector<double>& values, const std::optional<std::string>& out_dir) {
        const RunConfig config = config_from_text(config_json, out_dir);
        SweepSpec spec;
        spec.axis = sweep_axis_from_string(axis);
        spec.values = values;
        spec.seeds = config.seeds;
        SweepResult result;
        {
          py::gil_scoped_release release;
          result = run_sweep(config, spec, config.out_dir);
        }
        py::list points;
        for (const auto& point : result.points) {
          py::dict d;
          d["value"] = point.value;
          d["report"] = report_to_dict(point.report);
          points.append(d);
        }
        py::dict d;
        d["axis"] = to_string(result.axis);
        d["points"] = points;
        d["spearman"] = result.spearman_by_metric;
        return d;
      },
      py::arg("config_json"), py::arg("axis"), py::arg("values"),
      py::arg("out_dir") = std::nullopt,
      "Sweep an experiment axis ('info_loss', 'tenants', or 'agents').");

  m.def("report", &run_report, py::arg("run_dir"), py::arg("format") = "csv",
        "Render report files (csv or svg) from run artifacts.");

  m.def(
      "spearman",
      [](const std::vector<double>& x, const std::vector<double>& y) {
        return spearman(std::span<const double>(x), std::span<const double>(y));
      },
      py::arg("x"), py::arg("y"), "Spearman rank correlation (0.0 when either series is flat).");

  m.def("fuse_reward", &shape_reward, py::arg("local"), py::arg("global_signal"),
        py::arg("alpha"), "Convex fusion of a local reward with the global signal.");

  m.def("normalize_rewards", &normalize_rewards, py::arg("rewards"), py::arg("eps") = 1e-8,
        "Batch-normalize fused rewards (population statistics).");

  m.attr("__version__") = "0.1.0";
}
