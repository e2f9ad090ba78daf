#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "orchestra/commands.hpp"
#include "orchestra/config.hpp"
#include "orchestra/csv.hpp"
#include "orchestra/errors.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::string trace_dir;
  std::optional<std::uint64_t> seed;
};

orchestra::RunConfig load_config(const CommonArgs& args) {
  orchestra::RunConfig config = orchestra::run_config_from_file(args.config_path);
  if (args.seed.has_value()) {
    config.seed = *args.seed;
    config.seeds = {*args.seed};
    config.train.seed = *args.seed;
  }
  if (!args.trace_dir.empty()) {
    config.trace_dir = args.trace_dir;
    config.workload.reset();
  }
  if (!args.out_dir.empty()) config.out_dir = args.out_dir;
  if (config.out_dir.empty()) {
    throw orchestra::ConfigError("no output directory: set 'out_dir' in the config or pass --out");
  }
  config.validate();
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"orchestra: trace-driven cluster scheduling with role-based multi-agent RL"};
  app.require_subcommand(1);

  // gen-trace
  std::string gen_spec, gen_out;
  std::uint64_t gen_seed = 1;
  auto* gen = app.add_subcommand("gen-trace", "Generate a synthetic workload trace");
  gen->add_option("--config", gen_spec, "Workload spec JSON")->required();
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--seed", gen_seed, "Generator seed");

  // train
  CommonArgs train_args;
  auto* train = app.add_subcommand("train", "Train policies on a trace");
  train->add_option("--config", train_args.config_path, "Run config JSON")->required();
  train->add_option("--out", train_args.out_dir, "Run directory (defaults to config out_dir)");
  train->add_option("--trace", train_args.trace_dir, "Trace directory override");
  train->add_option("--seed", train_args.seed, "Seed override");
  std::optional<int> stop_after;
  train->add_option("--stop-after", stop_after,
                    "Stop once this many total epochs are complete (run stays resumable)");

  // eval
  CommonArgs eval_args;
  auto* eval = app.add_subcommand("eval", "Evaluate the checkpoint in a run directory");
  eval->add_option("--config", eval_args.config_path, "Run config JSON")->required();
  eval->add_option("--out", eval_args.out_dir, "Run directory (defaults to config out_dir)");
  eval->add_option("--trace", eval_args.trace_dir, "Trace directory override");
  eval->add_option("--seed", eval_args.seed, "Seed override");

  // ablate
  CommonArgs ablate_args;
  auto* ablate = app.add_subcommand("ablate", "Run the four-variant ablation");
  ablate->add_option("--config", ablate_args.config_path, "Run config JSON")->required();
  ablate->add_option("--out", ablate_args.out_dir, "Output directory (defaults to config out_dir)");

  // sweep
  CommonArgs sweep_args;
  std::string sweep_axis, sweep_values;
  auto* sweep = app.add_subcommand("sweep", "Sweep an experiment axis");
  sweep->add_option("--config", sweep_args.config_path, "Run config JSON")->required();
  sweep->add_option("--out", sweep_args.out_dir, "Output directory (defaults to config out_dir)");
  sweep->add_option("--axis", sweep_axis, "Axis: info_loss, tenants, or agents")->required();
  sweep->add_option("--values", sweep_values, "Comma-separated axis values")->required();

  // report
  std::string report_dir, report_format = "csv";
  auto* report = app.add_subcommand("report", "Render reports from run artifacts");
  report->add_option("--out", report_dir, "Run directory")->required();
  report->add_option("--format", report_format, "Output format: csv or svg");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      orchestra::run_gen_trace(gen_spec, gen_out, gen_seed);
      std::cout << "trace written to " << gen_out << "\n";
    } else if (train->parsed()) {
      const orchestra::RunConfig config = load_config(train_args);
      const orchestra::TrainResult result = orchestra::run_train(config, config.out_dir, stop_after);
      std::cout << "trained " << result.epochs_completed << " epochs; artifacts in "
                << config.out_dir << "\n";
    } else if (eval->parsed()) {
      const orchestra::RunConfig config = load_config(eval_args);
      const orchestra::MetricsReport r = orchestra::run_eval(config, config.out_dir);
      std::cout << "utilization_pct=" << orchestra::format_double(r.resource_utilization_pct);
      if (r.avg_scheduling_latency_ms) {
        std::cout << " latency_ms=" << orchestra::format_double(*r.avg_scheduling_latency_ms);
      }
      std::cout << "\nreport written to " << config.out_dir << "/eval.csv\n";
    } else if (ablate->parsed()) {
      const orchestra::RunConfig config = load_config(ablate_args);
      const auto table = orchestra::run_ablate(config, config.out_dir);
      for (const auto& row : table) {
        std::cout << row.label << ": utilization_pct="
                  << orchestra::format_double(row.utilization_pct) << "\n";
      }
      std::cout << "table written to " << config.out_dir << "/ablation.csv\n";
    } else if (sweep->parsed()) {
      const orchestra::RunConfig config = load_config(sweep_args);
      orchestra::SweepSpec spec;
      spec.axis = orchestra::sweep_axis_from_string(sweep_axis);
      spec.values = orchestra::parse_values_list(sweep_values);
      spec.seeds = config.seeds;
      const auto result = orchestra::run_sweep(config, spec, config.out_dir);
      for (const auto& [metric, rho] : result.spearman_by_metric) {
        std::cout << "spearman " << metric << " = " << orchestra::format_double(rho) << "\n";
      }
      std::cout << "sweep written to " << config.out_dir << "\n";
    } else if (report->parsed()) {
      orchestra::run_report(report_dir, report_format);
      std::cout << "report written to " << report_dir << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
