#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <unistd.h>

#include "orchestra/commands.hpp"
#include "orchestra/config.hpp"
#include "orchestra/errors.hpp"
#include "orchestra/marl.hpp"

using namespace orchestra;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
  fs::path path;

  TempDir() {
    static std::atomic<int> counter{0};
    path = fs::temp_directory_path() /
           ("orchestra-cli-test-" + std::to_string(::getpid()) + "-" +
            std::to_string(counter.fetch_add(1)));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

json tiny_workload() {
  return json{
      {"n_machines", 3},
      {"machine_capacity_distribution", {{"kind", "uniform"}, {"low", 0.8}, {"high", 1.0}}},
      {"task_arrival_rate", 1.0},
      {"n_tasks", 10},
      {"demand_distribution",
       {{"cpu", {{"kind", "uniform"}, {"low", 0.1}, {"high", 0.35}}},
        {"mem", {{"kind", "uniform"}, {"low", 0.1}, {"high", 0.35}}},
        {"io", {{"kind", "uniform"}, {"low", 0.05}, {"high", 0.25}}}}},
      {"duration_distribution", {{"kind", "exponential"}, {"mean", 4.0}}},
      {"n_tenants", 2},
      {"tenant_skew", 1.0},
  };
}

json tiny_config_json(const std::string& out_dir, std::uint64_t seed = 11, int total_epochs = 2) {
  return json{
      {"seed", seed},
      {"out_dir", out_dir},
      {"workload", tiny_workload()},
      {"roles", {{"compute", 2}, {"storage", 1}, {"scheduler", 1}}},
      {"train",
       {{"total_epochs", total_epochs},
        {"episodes_per_epoch", 2},
        {"batch_size", 8},
        {"updates_per_epoch", 2},
        {"buffer_capacity", 1000},
        {"hidden_layers", {8, 8}}}},
      {"eval_episodes", 2},
  };
}

RunConfig tiny_config(const std::string& out_dir, std::uint64_t seed = 11, int total_epochs = 2) {
  return run_config_from_json_text(tiny_config_json(out_dir, seed, total_epochs).dump());
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

int line_count(const std::string& text) {
  int n = 0;
  for (char c : text) n += c == '\n';
  return n;
}

}  // namespace

TEST_CASE("run configs parse from json and reject junk") {
  TempDir tmp;
  RunConfig config = tiny_config((tmp.path / "run").string());
  CHECK(config.seed == 11);
  CHECK(config.roles.compute == 2);
  CHECK(config.roles.storage == 1);
  CHECK(config.roles.scheduler == 1);
  CHECK(config.train.total_epochs == 2);
  CHECK(config.train.hidden_layers == std::vector<int>{8, 8});
  CHECK(config.eval_episodes == 2);
  REQUIRE(config.workload.has_value());
  CHECK(config.workload->n_tasks == 10);
  CHECK(config.seeds == std::vector<std::uint64_t>{11});  // defaults to {seed}

  json bad = tiny_config_json((tmp.path / "run").string());
  bad["not_a_key"] = 1;
  CHECK_THROWS_AS(run_config_from_json_text(bad.dump()), ConfigError);

  json bad_train = tiny_config_json((tmp.path / "run").string());
  bad_train["train"]["total_epochs"] = -4;
  CHECK_THROWS_AS(run_config_from_json_text(bad_train.dump()), ConfigError);

  CHECK_THROWS_AS(run_config_from_json_text("this is not json"), ParseError);
  CHECK_THROWS_AS(run_config_from_file((tmp.path / "missing.json").string()), Error);
}

TEST_CASE("config fingerprints ignore run placement but track semantics") {
  TempDir tmp;
  RunConfig base = tiny_config((tmp.path / "a").string());
  const std::string fp = config_fingerprint(base);

  RunConfig moved = base;
  moved.out_dir = (tmp.path / "b").string();
  CHECK(config_fingerprint(moved) == fp);

  RunConfig more_workers = base;
  more_workers.train.rollout_workers = 4;
  CHECK(config_fingerprint(more_workers) == fp);

  RunConfig reseeded = base;
  reseeded.seed = 12;
  reseeded.seeds = {12};
  reseeded.train.seed = 12;
  CHECK(config_fingerprint(reseeded) != fp);

  RunConfig longer = base;
  longer.train.total_epochs = 3;
  CHECK(config_fingerprint(longer) != fp);
}

TEST_CASE("gen-trace writes deterministic event files") {
  TempDir tmp;
  const fs::path spec_path = tmp.path / "workload.json";
  std::ofstream(spec_path) << tiny_workload().dump(2);

  run_gen_trace(spec_path.string(), (tmp.path / "t1").string(), 7);
  CHECK(fs::exists(tmp.path / "t1" / "machine_events.csv"));
  CHECK(fs::exists(tmp.path / "t1" / "task_events.csv"));

  run_gen_trace(spec_path.string(), (tmp.path / "t2").string(), 7);
  CHECK(slurp(tmp.path / "t1" / "machine_events.csv") ==
        slurp(tmp.path / "t2" / "machine_events.csv"));
  CHECK(slurp(tmp.path / "t1" / "task_events.csv") == slurp(tmp.path / "t2" / "task_events.csv"));

  run_gen_trace(spec_path.string(), (tmp.path / "t3").string(), 8);
  CHECK(slurp(tmp.path / "t1" / "task_events.csv") != slurp(tmp.path / "t3" / "task_events.csv"));

  CHECK_THROWS_AS(run_gen_trace((tmp.path / "nope.json").string(), (tmp.path / "t4").string(), 1),
                  Error);
}

TEST_CASE("run_train writes a curve, checkpoint, and snapshots") {
  TempDir tmp;
  const std::string run_dir = (tmp.path / "run").string();
  RunConfig config = tiny_config(run_dir);

  TrainResult result = run_train(config, run_dir);
  CHECK(result.epochs_completed == 2);
  CHECK(result.episodes == 4);
  REQUIRE(result.curve.size() == 2);
  CHECK(result.curve[0].epoch == 0);
  CHECK(result.curve[1].epoch == 1);
  for (const auto& row : result.curve) {
    CHECK(std::isfinite(row.actor_loss));
    CHECK(std::isfinite(row.critic_loss));
  }

  const std::string curve = slurp(fs::path(run_dir) / "curve.csv");
  CHECK(line_count(curve) == 3);  // header + one row per epoch
  CHECK(curve.rfind(kCurveHeader, 0) == 0);
  CHECK(fs::exists(fs::path(run_dir) / "checkpoint.json"));
  CHECK(fs::exists(fs::path(run_dir) / "snapshots" / "epoch_0.json"));
  CHECK(fs::exists(fs::path(run_dir) / "snapshots" / "epoch_1.json"));

  // a second invocation of a finished run is a cheap no-op with the same curve
  TrainResult again = run_train(config, run_dir);
  CHECK(again.epochs_completed == 2);
  REQUIRE(again.curve.size() == 2);
  CHECK(slurp(fs::path(run_dir) / "curve.csv") == curve);
}

TEST_CASE("an interrupted training run resumes byte-identically") {
  TempDir tmp;
  const std::string straight_dir = (tmp.path / "straight").string();
  const std::string paused_dir = (tmp.path / "paused").string();
  RunConfig straight = tiny_config(straight_dir, 11, 3);
  RunConfig paused = tiny_config(paused_dir, 11, 3);

  run_train(straight, straight_dir);

  TrainResult head = run_train(paused, paused_dir, 2);
  CHECK(head.epochs_completed == 2);
  TrainResult tail = run_train(paused, paused_dir);
  CHECK(tail.epochs_completed == 3);
  REQUIRE(tail.curve.size() == 3);

  // timing columns are not written, so the files must match exactly
  CHECK(slurp(fs::path(paused_dir) / "curve.csv") ==
        slurp(fs::path(straight_dir) / "curve.csv"));
}

TEST_CASE("a run directory rejects a different configuration") {
  TempDir tmp;
  const std::string run_dir = (tmp.path / "run").string();
  run_train(tiny_config(run_dir, 11), run_dir);
  CHECK_THROWS_AS(run_train(tiny_config(run_dir, 12), run_dir), ConfigError);
}

TEST_CASE("run_eval writes eval.csv for a trained run") {
  TempDir tmp;
  const std::string run_dir = (tmp.path / "run").string();
  RunConfig config = tiny_config(run_dir);
  run_train(config, run_dir);

  MetricsReport report = run_eval(config, run_dir);
  CHECK(report.resource_utilization_pct >= 0.0);
  CHECK(report.resource_utilization_pct <= 100.0);
  CHECK(report.throughput_tasks_per_s >= 0.0);
  const std::string eval_csv = slurp(fs::path(run_dir) / "eval.csv");
  CHECK(line_count(eval_csv) == 2);
  CHECK(eval_csv.find("resource_utilization_pct") == 0);

  // same checkpoint, same evaluation
  MetricsReport again = run_eval(config, run_dir);
  CHECK(again.resource_utilization_pct == report.resource_utilization_pct);

  CHECK_THROWS_AS(run_eval(config, (tmp.path / "empty").string()), Error);
}

TEST_CASE("run_ablate produces one row per variant and matches a standalone run") {
  TempDir tmp;
  const std::string out_dir = (tmp.path / "ablate").string();
  RunConfig config = tiny_config(out_dir);

  std::vector<AblationRow> rows = run_ablate(config, out_dir);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].label == "BASELINE");
  CHECK(rows[1].label == "+HRAC");
  CHECK(rows[2].label == "+LGRS");
  CHECK(rows[3].label == "FULL");
  for (const auto& row : rows) {
    CHECK(std::isfinite(row.utilization_pct));
    CHECK(row.utilization_pct >= 0.0);
    CHECK(row.utilization_pct <= 100.0);
  }
  const std::string csv = slurp(fs::path(out_dir) / "ablation.csv");
  CHECK(csv.find("variant,resource_utilization_pct") == 0);
  CHECK(csv.find("BASELINE") != std::string::npos);
  CHECK(csv.find("FULL") != std::string::npos);

  // the FULL row must agree with training that variant directly
  const std::string solo_dir = (tmp.path / "solo").string();
  RunConfig solo = tiny_config(solo_dir);
  solo.train = ablation_variant(solo.train, Variant::Full);
  run_train(solo, solo_dir);
  MetricsReport solo_report = run_eval(solo, solo_dir);
  CHECK(rows[3].utilization_pct == solo_report.resource_utilization_pct);
  CHECK(rows[3].latency_ms.has_value() == solo_report.avg_scheduling_latency_ms.has_value());
  if (rows[3].latency_ms) {
    CHECK(*rows[3].latency_ms == *solo_report.avg_scheduling_latency_ms);
  }
}

TEST_CASE("run_sweep walks its axis and summarizes rank correlations") {
  TempDir tmp;
  const std::string out_dir = (tmp.path / "sweep").string();
  RunConfig config = tiny_config(out_dir);

  SweepSpec spec;
  spec.axis = SweepAxis::InfoLoss;
  spec.values = {0.0, 0.4};
  spec.seeds = {11};

  SweepResult result = run_sweep(config, spec, out_dir);
  CHECK(result.axis == SweepAxis::InfoLoss);
  REQUIRE(result.points.size() == 2);
  CHECK(result.points[0].value == 0.0);
  CHECK(result.points[1].value == 0.4);
  for (const auto& point : result.points) {
    CHECK(point.report.resource_utilization_pct >= 0.0);
    CHECK(point.report.resource_utilization_pct <= 100.0);
  }
  CHECK(!result.spearman_by_metric.empty());
  for (const auto& [metric, rho] : result.spearman_by_metric) {
    CHECK(rho >= -1.0);
    CHECK(rho <= 1.0);
  }
  CHECK(fs::exists(fs::path(out_dir) / "sweep_points.csv"));
  CHECK(fs::exists(fs::path(out_dir) / "sweep_summary.csv"));

  SweepSpec empty = spec;
  empty.values = {};
  CHECK_THROWS_AS(empty.validate(), ConfigError);

  SweepSpec bad_loss = spec;
  bad_loss.values = {0.0, 1.5};  // info loss is a probability
  CHECK_THROWS_AS(run_sweep(config, bad_loss, out_dir), ConfigError);
}

TEST_CASE("run_report renders csv and svg artifacts deterministically") {
  TempDir tmp;
  const std::string run_dir = (tmp.path / "run").string();
  RunConfig config = tiny_config(run_dir);
  run_train(config, run_dir);
  run_eval(config, run_dir);

  CHECK_THROWS_AS(run_report((tmp.path / "nothing").string(), "csv"), Error);
  CHECK_THROWS_AS(run_report(run_dir, "pdf"), ConfigError);

  run_report(run_dir, "csv");
  const std::string report = slurp(fs::path(run_dir) / "report.csv");
  CHECK(report.find("# learning curve summary") != std::string::npos);
  CHECK(report.find("# evaluation") != std::string::npos);

  run_report(run_dir, "svg");
  const fs::path chart = fs::path(run_dir) / "curve_mean_utilization.svg";
  REQUIRE(fs::exists(chart));
  const std::string svg = slurp(chart);
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("polyline") != std::string::npos);

  const std::string first = svg;
  run_report(run_dir, "svg");
  CHECK(slurp(chart) == first);
}

TEST_CASE("the worker cap follows the environment override") {
  const char* saved = std::getenv("ORCHESTRA_WORKERS");
  const std::string saved_value = saved ? saved : "";

  ::unsetenv("ORCHESTRA_WORKERS");
  CHECK(effective_workers(8) == 8);

  ::setenv("ORCHESTRA_WORKERS", "2", 1);
  CHECK(effective_workers(8) == 2);
  CHECK(effective_workers(1) == 1);  // never raises the configured count

  ::setenv("ORCHESTRA_WORKERS", "0", 1);
  CHECK_THROWS_AS(effective_workers(8), ConfigError);
  ::setenv("ORCHESTRA_WORKERS", "lots", 1);
  CHECK_THROWS_AS(effective_workers(8), ConfigError);

  if (saved) {
    ::setenv("ORCHESTRA_WORKERS", saved_value.c_str(), 1);
  } else {
    ::unsetenv("ORCHESTRA_WORKERS");
  }
}

TEST_CASE("the agents axis splits totals into valid role counts") {
  for (int total : {3, 4, 6, 8, 12, 16, 24}) {
    RoleCounts counts = role_counts_for_agents(total);
    CHECK(counts.total() == total);
    CHECK(counts.compute >= 1);
    CHECK(counts.storage >= 1);
    CHECK(counts.scheduler >= 1);
  }
  CHECK(role_counts_for_agents(3).compute == 1);
  CHECK(role_counts_for_agents(16).scheduler == 4);
  CHECK(role_counts_for_agents(16).storage == 2);
  CHECK(role_counts_for_agents(16).compute == 10);
  CHECK_THROWS_AS(role_counts_for_agents(2), ConfigError);
}

TEST_CASE("sweep axis names and value lists parse strictly") {
  for (SweepAxis axis : {SweepAxis::InfoLoss, SweepAxis::Tenants, SweepAxis::Agents}) {
    CHECK(sweep_axis_from_string(to_string(axis)) == axis);
  }
  CHECK_THROWS_AS(sweep_axis_from_string("altitude"), ParseError);

  CHECK(parse_values_list("0.1, 0.2,0.3") == std::vector<double>{0.1, 0.2, 0.3});
  CHECK_THROWS_AS(parse_values_list(""), ParseError);
  CHECK_THROWS_AS(parse_values_list("0.1,,0.3"), ParseError);
  CHECK_THROWS_AS(parse_values_list("0.1,banana"), ParseError);
}

TEST_CASE("checkpoints round-trip through json") {
  TempDir tmp;
  RunConfig config = tiny_config((tmp.path / "run").string());
  const Trace trace = resolve_trace(config);
  const RoleMap rm = role_map_for(config, trace);

  Checkpoint ckpt;
  ckpt.epoch = 5;
  ckpt.episodes = 20;
  ckpt.variant = Variant::HracOnly;
  ckpt.fingerprint = config_fingerprint(config);
  ckpt.policies = init_policies(config.train, rm, trace);

  Checkpoint back = checkpoint_from_json(checkpoint_to_json(ckpt));
  CHECK(back.version == kCheckpointVersion);
  CHECK(back.epoch == 5);
  CHECK(back.episodes == 20);
  CHECK(back.variant == Variant::HracOnly);
  CHECK(back.fingerprint == ckpt.fingerprint);
  CHECK_FALSE(back.policies.actors.shared);
  for (RoleTag tag : {RoleTag::Scheduler, RoleTag::Compute, RoleTag::Storage}) {
    const NetParams& a = ckpt.policies.actors.net_for(tag);
    const NetParams& b = back.policies.actors.net_for(tag);
    CHECK(a.sizes == b.sizes);
    CHECK(a.w == b.w);  // bit-exact parameters
    CHECK(a.b == b.b);
  }
  CHECK(ckpt.policies.critic.w == back.policies.critic.w);
  CHECK(ckpt.policies.critic_adam.t == back.policies.critic_adam.t);
}
