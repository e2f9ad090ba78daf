#include "orchestra/commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>

#include "orchestra/csv.hpp"
#include "orchestra/errors.hpp"
#include "orchestra/rng.hpp"
#include "orchestra/sim.hpp"

namespace fs = std::filesystem;

namespace orchestra {

namespace {

using json = nlohmann::json;

void write_text_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << content;
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json_file(const fs::path& path) {
  try {
    return json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::vector<std::string> trace_machine_ids(const Trace& trace) {
  std::vector<std::string> ids;
  for (const auto& ev : trace.machine_events) ids.push_back(ev.machine_id);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

std::string curve_row(const EpochStats& s) {
  std::ostringstream out;
  out << s.epoch << ',' << format_double(s.lr) << ',' << format_double(s.mean_utilization) << ','
      << format_double(s.mean_latency_s) << ',' << format_double(s.actor_loss) << ','
      << format_double(s.critic_loss) << ',' << s.episodes;
  return out.str();
}

void write_curve(const fs::path& path, const std::vector<EpochStats>& curve) {
  std::ostringstream out;
  out << kCurveHeader << '\n';
  for (const auto& row : curve) out << curve_row(row) << '\n';
  write_text_file(path, out.str());
}

std::vector<EpochStats> read_curve(const fs::path& path) {
  const CsvTable table = read_csv_file(path.string());
  const std::vector<std::string> expected = {"epoch",      "lr",          "mean_utilization",
                                             "mean_latency_s", "actor_loss", "critic_loss",
                                             "episodes"};
  if (table.header != expected) throw ParseError(path.string() + ": unexpected curve header");
  std::vector<EpochStats> curve;
  for (const auto& row : table.rows) {
    if (row.size() != expected.size()) throw ParseError(path.string() + ": short curve row");
    EpochStats s;
    s.epoch = static_cast<int>(parse_int(row[0], "curve epoch"));
    s.lr = parse_double(row[1], "curve lr");
    s.mean_utilization = parse_double(row[2], "curve mean_utilization");
    s.mean_latency_s = parse_double(row[3], "curve mean_latency_s");
    s.actor_loss = parse_double(row[4], "curve actor_loss");
    s.critic_loss = parse_double(row[5], "curve critic_loss");
    s.episodes = parse_int(row[6], "curve episodes");
    curve.push_back(s);
  }
  return curve;
}

const char* role_key(RoleTag tag) {
  switch (tag) {
    case RoleTag::Scheduler: return "scheduler";
    case RoleTag::Compute: return "compute";
    case RoleTag::Storage: return "storage";
  }
  throw ContractViolation("unhandled role tag");
}

json adams_to_json(const PolicySet& policies) {
  json j;
  if (policies.actors.shared) {
    j["actors"]["shared"] = adam_to_json(policies.shared_adam);
  } else {
    for (const auto& [tag, adam] : policies.per_role_adams) {
      j["actors"][role_key(tag)] = adam_to_json(adam);
    }
  }
  j["critic"] = adam_to_json(policies.critic_adam);
  return j;
}

fs::path snapshot_path(const fs::path& out_dir, int epoch) {
  return out_dir / "snapshots" / ("epoch_" + std::to_string(epoch) + ".json");
}

std::optional<double> mean_of_present(const std::vector<std::optional<double>>& values) {
  double sum = 0.0;
  int n = 0;
  for (const auto& v : values) {
    if (!v) continue;
    sum += *v;
    n += 1;
  }
  if (n == 0) return std::nullopt;
  return sum / n;
}

double mean_of(const std::vector<double>& values) {
  if (values.empty()) return 0.0;
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

// Seed-averaged report: plain mean per field, optionals averaged where present.
MetricsReport average_reports(const std::vector<MetricsReport>& reports) {
  MetricsReport out;
  std::vector<double> util, stddev, var, min_share, throughput;
  std::vector<std::optional<double>> latency, conv, update_time;
  for (const auto& r : reports) {
    util.push_back(r.resource_utilization_pct);
    stddev.push_back(r.usage_stddev);
    var.push_back(r.allocation_variance);
    min_share.push_back(r.min_tenant_share_pct);
    throughput.push_back(r.throughput_tasks_per_s);
    latency.push_back(r.avg_scheduling_latency_ms);
    conv.push_back(r.convergence_epoch ? std::optional<double>(*r.convergence_epoch) : std::nullopt);
    update_time.push_back(r.policy_update_time_s);
  }
  out.resource_utilization_pct = mean_of(util);
  out.usage_stddev = mean_of(stddev);
  out.allocation_variance = mean_of(var);
  out.min_tenant_share_pct = mean_of(min_share);
  out.throughput_tasks_per_s = mean_of(throughput);
  out.avg_scheduling_latency_ms = mean_of_present(latency);
  if (const auto c = mean_of_present(conv)) out.convergence_epoch = static_cast<int>(std::lround(*c));
  out.policy_update_time_s = mean_of_present(update_time);
  return out;
}

MetricsReport report_for_run(const EpisodeRecord& merged, const std::vector<EpochStats>& curve,
                             const RunConfig& config) {
  std::vector<double> util_curve;
  for (const auto& row : curve) util_curve.push_back(row.mean_utilization);
  EpisodeRecord record = merged;
  for (const auto& row : curve) {
    if (row.update_seconds > 0.0) record.update_durations_s.push_back(row.update_seconds);
  }
  return build_report(record, util_curve, config.convergence_window, config.convergence_tol);
}

struct LoadedRun {
  Checkpoint checkpoint;
  std::vector<EpochStats> curve;
};

LoadedRun load_run(const fs::path& run_dir) {
  const fs::path ckpt = run_dir / "checkpoint.json";
  if (!fs::exists(ckpt)) throw Error("no checkpoint.json in '" + run_dir.string() + "'");
  LoadedRun loaded;
  loaded.checkpoint = checkpoint_from_json(read_json_file(ckpt));
  const fs::path curve = run_dir / "curve.csv";
  if (fs::exists(curve)) loaded.curve = read_curve(curve);
  return loaded;
}

std::string sweep_points_header() {
  return std::string("axis,value,") +
         "resource_utilization_pct,avg_scheduling_latency_ms,convergence_epoch,usage_stddev,"
         "allocation_variance,min_tenant_share_pct,throughput_tasks_per_s,policy_update_time_s";
}

std::string sweep_point_row(SweepAxis axis, const SweepPoint& p) {
  std::ostringstream out;
  out << to_string(axis) << ',' << format_double(p.value) << ','
      << format_double(p.report.resource_utilization_pct) << ',';
  if (p.report.avg_scheduling_latency_ms) out << format_double(*p.report.avg_scheduling_latency_ms);
  out << ',';
  if (p.report.convergence_epoch) out << *p.report.convergence_epoch;
  out << ',' << format_double(p.report.usage_stddev) << ','
      << format_double(p.report.allocation_variance) << ','
      << format_double(p.report.min_tenant_share_pct) << ','
      << format_double(p.report.throughput_tasks_per_s) << ',';
  if (p.report.policy_update_time_s) out << format_double(*p.report.policy_update_time_s);
  return out.str();
}

// Minimal deterministic line chart.
std::string svg_line_chart(const std::string& title, const std::string& x_label,
                           const std::string& y_label, const std::vector<double>& xs,
                           const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.empty()) {
    throw ValidationError("chart needs matching nonempty series");
  }
  const double width = 640.0, height = 400.0;
  const double left = 70.0, right = 20.0, top = 40.0, bottom = 50.0;
  const double plot_w = width - left - right;
  const double plot_h = height - top - bottom;
  double xmin = *std::min_element(xs.begin(), xs.end());
  double xmax = *std::max_element(xs.begin(), xs.end());
  double ymin = *std::min_element(ys.begin(), ys.end());
  double ymax = *std::max_element(ys.begin(), ys.end());
  if (xmax == xmin) xmax = xmin + 1.0;
  if (ymax == ymin) ymax = ymin + 1.0;

  auto px = [&](double x) { return left + (x - xmin) / (xmax - xmin) * plot_w; };
  auto py = [&](double y) { return top + plot_h - (y - ymin) / (ymax - ymin) * plot_h; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 " << format_double(width) << ' '
      << format_double(height) << "\">\n";
  svg << "  <rect x=\"0\" y=\"0\" width=\"" << format_double(width) << "\" height=\""
      << format_double(height) << "\" fill=\"white\"/>\n";
  svg << "  <text x=\"" << format_double(width / 2) << "\" y=\"24\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"16\">"
      << title << "</text>\n";
  svg << "  <line x1=\"" << format_double(left) << "\" y1=\"" << format_double(top + plot_h)
      << "\" x2=\"" << format_double(left + plot_w) << "\" y2=\"" << format_double(top + plot_h)
      << "\" stroke=\"black\"/>\n";
  svg << "  <line x1=\"" << format_double(left) << "\" y1=\"" << format_double(top) << "\" x2=\""
      << format_double(left) << "\" y2=\"" << format_double(top + plot_h)
      << "\" stroke=\"black\"/>\n";
  svg << "  <text x=\"" << format_double(left + plot_w / 2) << "\" y=\""
      << format_double(height - 12) << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"12\">"
      << x_label << "</text>\n";
  svg << "  <text x=\"16\" y=\"" << format_double(top + plot_h / 2)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
         "transform=\"rotate(-90 16 "
      << format_double(top + plot_h / 2) << ")\">" << y_label << "</text>\n";
  svg << "  <text x=\"" << format_double(left) << "\" y=\"" << format_double(top + plot_h + 16)
      << "\" font-family=\"sans-serif\" font-size=\"10\">" << format_double(xmin) << "</text>\n";
  svg << "  <text x=\"" << format_double(left + plot_w) << "\" y=\""
      << format_double(top + plot_h + 16)
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">"
      << format_double(xmax) << "</text>\n";
  svg << "  <text x=\"" << format_double(left - 6) << "\" y=\"" << format_double(top + plot_h)
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">"
      << format_double(ymin) << "</text>\n";
  svg << "  <text x=\"" << format_double(left - 6) << "\" y=\"" << format_double(top + 10)
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">"
      << format_double(ymax) << "</text>\n";
  svg << "  <polyline fill=\"none\" stroke=\"#1f6fb2\" stroke-width=\"1.5\" points=\"";
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i > 0) svg << ' ';
    svg << format_double(px(xs[i])) << ',' << format_double(py(ys[i]));
  }
  svg << "\"/>\n</svg>\n";
  return svg.str();
}

}  // namespace

RoleMap role_map_for(const RunConfig& config, const Trace& trace) {
  return assign_roles(config.roles, trace_machine_ids(trace));
}

json actor_bank_to_json(const ActorBank& bank) {
  json j;
  j["shared"] = bank.shared;
  if (bank.shared) {
    j["nets"]["shared"] = params_to_json(bank.shared_net);
  } else {
    for (const auto& [tag, params] : bank.per_role) {
      j["nets"][role_key(tag)] = params_to_json(params);
    }
  }
  return j;
}

ActorBank actor_bank_from_json(const json& j) {
  ActorBank bank;
  if (!j.contains("shared") || !j.at("shared").is_boolean()) {
    throw ParseError("actor bank json missing 'shared'");
  }
  bank.shared = j.at("shared").get<bool>();
  if (!j.contains("nets") || !j.at("nets").is_object()) {
    throw ParseError("actor bank json missing 'nets'");
  }
  const json& nets = j.at("nets");
  if (bank.shared) {
    if (!nets.contains("shared")) throw ParseError("shared actor bank json missing 'nets.shared'");
    bank.shared_net = params_from_json(nets.at("shared"));
  } else {
    for (RoleTag tag : kRoleOrder) {
      if (!nets.contains(role_key(tag))) {
        throw ParseError(std::string("actor bank json missing role '") + role_key(tag) + "'");
      }
      bank.per_role[tag] = params_from_json(nets.at(role_key(tag)));
    }
  }
  return bank;
}

json checkpoint_to_json(const Checkpoint& checkpoint) {
  json j;
  j["version"] = checkpoint.version;
  j["epoch"] = checkpoint.epoch;
  j["episodes"] = checkpoint.episodes;
  j["variant"] = to_string(checkpoint.variant);
  j["fingerprint"] = checkpoint.fingerprint;
  j["actors"] = actor_bank_to_json(checkpoint.policies.actors);
  j["critic"] = params_to_json(checkpoint.policies.critic);
  j["adam"] = adams_to_json(checkpoint.policies);
  return j;
}

Checkpoint checkpoint_from_json(const json& j) {
  Checkpoint out;
  try {
    out.version = j.at("version").get<int>();
    if (out.version != kCheckpointVersion) {
      throw ParseError("unsupported checkpoint version " + std::to_string(out.version));
    }
    out.epoch = j.at("epoch").get<int>();
    out.episodes = j.at("episodes").get<long>();
    out.variant = variant_from_string(j.at("variant").get<std::string>());
    out.fingerprint = j.at("fingerprint").get<std::string>();
    out.policies.actors = actor_bank_from_json(j.at("actors"));
    out.policies.critic = params_from_json(j.at("critic"));
    const json& adam = j.at("adam");
    if (out.policies.actors.shared) {
      out.policies.shared_adam =
          adam_from_json(adam.at("actors").at("shared"), out.policies.actors.shared_net);
    } else {
      for (RoleTag tag : kRoleOrder) {
        out.policies.per_role_adams[tag] =
            adam_from_json(adam.at("actors").at(role_key(tag)), out.policies.actors.per_role.at(tag));
      }
    }
    out.policies.critic_adam = adam_from_json(adam.at("critic"), out.policies.critic);
  } catch (const json::exception& e) {
    throw ParseError(std::string("checkpoint json: ") + e.what());
  }
  return out;
}

int effective_workers(int configured) {
  const char* env = std::getenv("ORCHESTRA_WORKERS");
  if (env == nullptr || *env == '\0') return configured;
  int cap = 0;
  try {
    cap = static_cast<int>(parse_int(env, "ORCHESTRA_WORKERS"));
  } catch (const ParseError&) {
    throw ConfigError("ORCHESTRA_WORKERS must be a positive integer");
  }
  if (cap < 1) throw ConfigError("ORCHESTRA_WORKERS must be a positive integer");
  return std::min(configured, cap);
}

void run_gen_trace(const std::string& spec_path, const std::string& out_dir, std::uint64_t seed) {
  const WorkloadSpec spec = workload_from_json_file(spec_path);
  const Trace trace = generate_synthetic(spec, seed);
  fs::create_directories(out_dir);
  serialize_trace_files(trace, (fs::path(out_dir) / kMachineEventsFile).string(),
                        (fs::path(out_dir) / kTaskEventsFile).string());
}

TrainResult run_train(const RunConfig& config, const std::string& out_dir,
                      std::optional<int> stop_after) {
  config.validate();
  const fs::path out(out_dir);
  fs::create_directories(out / "snapshots");
  const std::string fingerprint = config_fingerprint(config);

  const Trace trace = resolve_trace(config);
  const RoleMap role_map = role_map_for(config, trace);

  TrainConfig train_config = config.train;
  train_config.rollout_workers = effective_workers(train_config.rollout_workers);

  std::optional<TrainResume> resume;
  std::vector<EpochStats> base_curve;
  if (fs::exists(out / "checkpoint.json")) {
    LoadedRun loaded = load_run(out);
    if (loaded.checkpoint.fingerprint != fingerprint) {
      throw ConfigError("existing checkpoint in '" + out_dir +
                        "' was produced by a different configuration");
    }
    TrainResume r;
    r.policies = std::move(loaded.checkpoint.policies);
    r.completed_epochs = loaded.checkpoint.epoch;
    r.episodes_done = loaded.checkpoint.episodes;
    for (const auto& entry : fs::directory_iterator(out / "snapshots")) {
      if (entry.path().extension() != ".json") continue;
      const json sj = read_json_file(entry.path());
      ActorSnapshot snap;
      snap.epoch = sj.at("epoch").get<int>();
      snap.actors = actor_bank_from_json(sj.at("actors"));
      r.rollout_snapshots.push_back(std::move(snap));
    }
    for (const auto& row : loaded.curve) {
      if (row.epoch < r.completed_epochs) base_curve.push_back(row);
    }
    if (r.completed_epochs >= train_config.total_epochs) {
      TrainResult done;
      done.curve = std::move(base_curve);
      done.policies = std::move(r.policies);
      done.epochs_completed = r.completed_epochs;
      done.episodes = r.episodes_done;
      return done;
    }
    resume = std::move(r);
  }

  std::vector<EpochStats> full_curve = base_curve;
  auto on_epoch = [&](const EpochStats& stats, const PolicySet& policies,
                      const std::vector<ActorSnapshot>& snapshots) {
    full_curve.push_back(stats);
    write_curve(out / "curve.csv", full_curve);

    Checkpoint ckpt;
    ckpt.epoch = stats.epoch + 1;
    ckpt.episodes = stats.episodes;
    ckpt.variant = train_config.variant;
    ckpt.fingerprint = fingerprint;
    ckpt.policies = policies;
    write_text_file(out / "checkpoint.json", checkpoint_to_json(ckpt).dump());

    for (const auto& snap : snapshots) {
      const fs::path path = snapshot_path(out, snap.epoch);
      if (fs::exists(path)) continue;
      json sj;
      sj["version"] = kCheckpointVersion;
      sj["epoch"] = snap.epoch;
      sj["actors"] = actor_bank_to_json(snap.actors);
      write_text_file(path, sj.dump());
    }
    const int oldest_kept = snapshots.empty() ? 0 : snapshots.front().epoch;
    for (const auto& entry : fs::directory_iterator(out / "snapshots")) {
      const std::string stem = entry.path().stem().string();
      if (stem.rfind("epoch_", 0) != 0) continue;
      const int epoch = static_cast<int>(parse_int(stem.substr(6), "snapshot file name"));
      if (epoch < oldest_kept) fs::remove(entry.path());
    }
  };

  RunArtifacts artifacts = train(train_config, trace, role_map, on_epoch, resume, stop_after);

  TrainResult result;
  result.curve = std::move(full_curve);
  result.policies = std::move(artifacts.policies);
  result.epochs_completed = artifacts.epochs_completed;
  result.episodes = artifacts.episodes_done;
  if (result.curve.empty()) {
    // zero-epoch run: still leave a valid (empty) curve and initial checkpoint
    write_curve(out / "curve.csv", result.curve);
    Checkpoint ckpt;
    ckpt.epoch = 0;
    ckpt.episodes = 0;
    ckpt.variant = train_config.variant;
    ckpt.fingerprint = fingerprint;
    ckpt.policies = result.policies;
    write_text_file(out / "checkpoint.json", checkpoint_to_json(ckpt).dump());
  }
  return result;
}

MetricsReport run_eval(const RunConfig& config, const std::string& run_dir) {
  config.validate();
  const fs::path run(run_dir);
  LoadedRun loaded = load_run(run);

  const Trace trace = resolve_trace(config);
  const RoleMap role_map = role_map_for(config, trace);
  const SharedLayout layout = shared_layout(role_map);

  const EvalSummary summary =
      evaluate(loaded.checkpoint.policies.actors, layout, trace, role_map, config.eval_episodes,
               config.seed, config.train.info_loss_rate);
  const MetricsReport report = report_for_run(summary.merged, loaded.curve, config);
  write_text_file(run / "eval.csv", report_csv(report));
  return report;
}

std::vector<AblationRow> run_ablate(const RunConfig& config, const std::string& out_dir) {
  config.validate();
  const fs::path out(out_dir);
  fs::create_directories(out);

  const std::vector<std::pair<Variant, std::string>> rows = {
      {Variant::Baseline, "BASELINE"},
      {Variant::HracOnly, "+HRAC"},
      {Variant::LgrsOnly, "+LGRS"},
      {Variant::Full, "FULL"},
  };

  std::vector<AblationRow> table;
  for (const auto& [variant, label] : rows) {
    std::vector<double> utils;
    std::vector<std::optional<double>> latencies, convergences;
    for (std::uint64_t seed : config.seeds) {
      RunConfig point = config;
      point.seed = seed;
      point.seeds = {seed};
      point.train.seed = seed;
      point.train = ablation_variant(point.train, variant);
      const fs::path run_dir = out / to_string(variant) / ("seed_" + std::to_string(seed));
      run_train(point, run_dir.string());
      const MetricsReport report = run_eval(point, run_dir.string());
      utils.push_back(report.resource_utilization_pct);
      latencies.push_back(report.avg_scheduling_latency_ms);
      convergences.push_back(report.convergence_epoch
                                 ? std::optional<double>(*report.convergence_epoch)
                                 : std::nullopt);
    }
    AblationRow row;
    row.label = label;
    row.variant = variant;
    row.utilization_pct = mean_of(utils);
    row.latency_ms = mean_of_present(latencies);
    row.convergence_epoch = mean_of_present(convergences);
    table.push_back(std::move(row));
  }

  std::ostringstream csv;
  csv << "variant,resource_utilization_pct,avg_scheduling_latency_ms,convergence_epoch\n";
  for (const auto& row : table) {
    csv << row.label << ',' << format_double(row.utilization_pct) << ',';
    if (row.latency_ms) csv << format_double(*row.latency_ms);
    csv << ',';
    if (row.convergence_epoch) csv << format_double(*row.convergence_epoch);
    csv << '\n';
  }
  csv << "# reference production-scale results (not asserted at desk scale): "
         "BASELINE 76.2% / 294.7 ms / 910 ep; +HRAC 84.3% / 226.1 ms / 680 ep; "
         "+LGRS 82.5% / 213.4 ms / 710 ep; FULL 89.7% / 178.5 ms / 430 ep\n";
  write_text_file(out / "ablation.csv", csv.str());
  return table;
}

SweepResult run_sweep(const RunConfig& config, const SweepSpec& spec, const std::string& out_dir) {
  config.validate();
  spec.validate();
  const fs::path out(out_dir);
  fs::create_directories(out);

  SweepResult result;
  result.axis = spec.axis;

  if (spec.axis == SweepAxis::InfoLoss) {
    // One policy per seed, trained at the configured loss rate, then evaluated
    // under progressively degraded observations.
    struct TrainedBase {
      Trace trace;
      RoleMap role_map;
      SharedLayout layout;
      PolicySet policies;
      std::vector<EpochStats> curve;
    };
    std::vector<TrainedBase> bases;
    for (std::uint64_t seed : spec.seeds) {
      RunConfig point = config;
      point.seed = seed;
      point.seeds = {seed};
      point.train.seed = seed;
      const fs::path run_dir = out / "base" / ("seed_" + std::to_string(seed));
      TrainResult trained = run_train(point, run_dir.string());
      TrainedBase base{resolve_trace(point), RoleMap{}, SharedLayout{}, std::move(trained.policies),
                       std::move(trained.curve)};
      base.role_map = role_map_for(point, base.trace);
      base.layout = shared_layout(base.role_map);
      bases.push_back(std::move(base));
    }
    for (double value : spec.values) {
      std::vector<MetricsReport> reports;
      for (std::size_t i = 0; i < spec.seeds.size(); ++i) {
        const TrainedBase& base = bases[i];
        RunConfig point = config;
        point.seed = spec.seeds[i];
        const EvalSummary summary = evaluate(base.policies.actors, base.layout, base.trace,
                                             base.role_map, config.eval_episodes,
                                             derive_seed(spec.seeds[i], 0x10, 0), value);
        reports.push_back(report_for_run(summary.merged, base.curve, point));
      }
      result.points.push_back(SweepPoint{value, average_reports(reports)});
    }
  } else {
    for (double value : spec.values) {
      std::vector<MetricsReport> reports;
      for (std::uint64_t seed : spec.seeds) {
        RunConfig point = config;
        point.seed = seed;
        point.seeds = {seed};
        point.train.seed = seed;
        if (spec.axis == SweepAxis::Tenants) {
          if (!point.workload.has_value()) {
            throw ConfigError("the tenants sweep needs a generated workload, not a fixed trace");
          }
          point.n_tenants = static_cast<int>(value);
        } else {
          point.roles = role_counts_for_agents(static_cast<int>(value));
          point.train.roles = point.roles;
        }
        const fs::path run_dir = out / (to_string(spec.axis) + "_" + format_double(value)) /
                                 ("seed_" + std::to_string(seed));
        TrainResult trained = run_train(point, run_dir.string());
        const Trace trace = resolve_trace(point);
        const RoleMap role_map = role_map_for(point, trace);
        const SharedLayout layout = shared_layout(role_map);
        const EvalSummary summary =
            evaluate(trained.policies.actors, layout, trace, role_map, config.eval_episodes,
                     derive_seed(seed, 0x10, 0), point.train.info_loss_rate);
        reports.push_back(report_for_run(summary.merged, trained.curve, point));
      }
      result.points.push_back(SweepPoint{value, average_reports(reports)});
    }
  }

  // Rank correlations of the axis against every populated metric column.
  std::vector<double> xs;
  for (const auto& p : result.points) xs.push_back(p.value);
  auto corr = [&](const std::string& name, auto getter) {
    std::vector<double> ys;
    for (const auto& p : result.points) {
      const auto v = getter(p.report);
      if (!v.has_value()) return;
      ys.push_back(*v);
    }
    result.spearman_by_metric[name] = spearman(xs, ys);
  };
  corr("resource_utilization_pct", [](const MetricsReport& r) {
    return std::optional<double>(r.resource_utilization_pct);
  });
  corr("avg_scheduling_latency_ms",
       [](const MetricsReport& r) { return r.avg_scheduling_latency_ms; });
  corr("usage_stddev", [](const MetricsReport& r) { return std::optional<double>(r.usage_stddev); });
  corr("allocation_variance",
       [](const MetricsReport& r) { return std::optional<double>(r.allocation_variance); });
  corr("min_tenant_share_pct",
       [](const MetricsReport& r) { return std::optional<double>(r.min_tenant_share_pct); });
  corr("throughput_tasks_per_s",
       [](const MetricsReport& r) { return std::optional<double>(r.throughput_tasks_per_s); });
  corr("policy_update_time_s", [](const MetricsReport& r) { return r.policy_update_time_s; });

  std::ostringstream points_csv;
  points_csv << sweep_points_header() << '\n';
  for (const auto& p : result.points) points_csv << sweep_point_row(spec.axis, p) << '\n';
  write_text_file(out / "sweep_points.csv", points_csv.str());

  std::ostringstream summary_csv;
  summary_csv << "metric,spearman\n";
  for (const auto& [metric, rho] : result.spearman_by_metric) {
    summary_csv << metric << ',' << format_double(rho) << '\n';
  }
  write_text_file(out / "sweep_summary.csv", summary_csv.str());
  return result;
}

void run_report(const std::string& run_dir, const std::string& format) {
  const fs::path run(run_dir);
  if (format != "csv" && format != "svg") {
    throw ConfigError("report format must be 'csv' or 'svg'");
  }
  const fs::path curve_path = run / "curve.csv";
  const fs::path eval_path = run / "eval.csv";
  const fs::path ablation_path = run / "ablation.csv";
  const fs::path points_path = run / "sweep_points.csv";
  const fs::path summary_path = run / "sweep_summary.csv";
  const bool any = fs::exists(curve_path) || fs::exists(eval_path) || fs::exists(ablation_path) ||
                   fs::exists(points_path);
  if (!any) throw Error("'" + run_dir + "' holds no curve, eval, ablation, or sweep artifacts");

  if (format == "csv") {
    std::ostringstream out;
    if (fs::exists(curve_path)) {
      const auto curve = read_curve(curve_path);
      out << "# learning curve summary\n";
      out << "epochs,final_utilization,final_latency_s,final_actor_loss,final_critic_loss\n";
      if (curve.empty()) {
        out << "0,,,,\n";
      } else {
        const EpochStats& last = curve.back();
        out << curve.size() << ',' << format_double(last.mean_utilization) << ','
            << format_double(last.mean_latency_s) << ',' << format_double(last.actor_loss) << ','
            << format_double(last.critic_loss) << '\n';
      }
    }
    if (fs::exists(eval_path)) {
      out << "# evaluation\n" << read_text_file(eval_path);
    }
    if (fs::exists(ablation_path)) {
      out << "# ablation\n" << read_text_file(ablation_path);
    }
    if (fs::exists(points_path)) {
      out << "# sweep\n" << read_text_file(points_path);
      if (fs::exists(summary_path)) out << read_text_file(summary_path);
    }
    write_text_file(run / "report.csv", out.str());
    return;
  }

  bool wrote = false;
  if (fs::exists(curve_path)) {
    const auto curve = read_curve(curve_path);
    if (!curve.empty()) {
      std::vector<double> xs;
      for (const auto& row : curve) xs.push_back(static_cast<double>(row.epoch));
      const std::vector<std::pair<std::string, std::function<double(const EpochStats&)>>> series = {
          {"mean_utilization", [](const EpochStats& s) { return s.mean_utilization; }},
          {"mean_latency_s", [](const EpochStats& s) { return s.mean_latency_s; }},
          {"actor_loss", [](const EpochStats& s) { return s.actor_loss; }},
          {"critic_loss", [](const EpochStats& s) { return s.critic_loss; }},
      };
      for (const auto& [name, getter] : series) {
        std::vector<double> ys;
        for (const auto& row : curve) ys.push_back(getter(row));
        write_text_file(run / ("curve_" + name + ".svg"),
                        svg_line_chart(name + " by epoch", "epoch", name, xs, ys));
        wrote = true;
      }
    }
  }
  if (fs::exists(points_path)) {
    const CsvTable table = read_csv_file(points_path.string());
    std::vector<double> xs;
    for (const auto& row : table.rows) xs.push_back(parse_double(row.at(1), "sweep value"));
    for (std::size_t col = 2; col < table.header.size(); ++col) {
      std::vector<double> ys;
      bool complete = true;
      for (const auto& row : table.rows) {
        if (row.size() <= col || row[col].empty()) {
          complete = false;
          break;
        }
        ys.push_back(parse_double(row[col], "sweep metric"));
      }
      if (!complete || xs.size() < 2) continue;
      const std::string& name = table.header[col];
      write_text_file(run / ("sweep_" + name + ".svg"),
                      svg_line_chart(name + " by " + table.rows.front().at(0), "axis value", name,
                                     xs, ys));
      wrote = true;
    }
  }
  if (!wrote) throw Error("no chartable series found in '" + run_dir + "'");
}

}  // namespace orchestra
