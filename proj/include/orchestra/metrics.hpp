#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace orchestra {

// Raw measurements gathered while an episode (or a batch of episodes) runs.
struct EpisodeRecord {
  std::vector<double> utilization_samples;  // per-step cluster cpu utilization, [0,1]
  std::vector<double> latency_samples_s;
  std::map<std::string, double> tenant_cpu_time;  // demand x running seconds
  std::vector<double> update_durations_s;         // wall clock per parameter update
  int finished_tasks = 0;
  double simulated_seconds = 0.0;
};

struct FairnessResult {
  double allocation_variance = 0.0;
  double min_tenant_share_pct = 0.0;
};

struct ScalabilityResult {
  double throughput_tasks_per_s = 0.0;
  std::optional<double> policy_update_time_s;
};

struct MetricsReport {
  double resource_utilization_pct = 0.0;
  std::optional<double> avg_scheduling_latency_ms;
  std::optional<int> convergence_epoch;
  double usage_stddev = 0.0;
  double allocation_variance = 0.0;
  double min_tenant_share_pct = 0.0;
  double throughput_tasks_per_s = 0.0;
  std::optional<double> policy_update_time_s;
};

// Concatenates measurements; aggregate metrics over the result equal the
// sample-weighted combination of the per-episode metrics.
EpisodeRecord merge_records(const std::vector<EpisodeRecord>& records);

double utilization_pct(const EpisodeRecord& record);

// Absent (not zero) when nothing was placed.
std::optional<double> avg_latency_ms(const EpisodeRecord& record);

// First epoch whose trailing `window` utilization range is within
// tol x final value; absent if the curve never settles.
std::optional<int> convergence_epoch(std::span<const double> curve, int window = 20,
                                     double tol = 0.01);

double usage_stddev(const EpisodeRecord& record);

FairnessResult fairness(const EpisodeRecord& record);

ScalabilityResult scalability(const EpisodeRecord& record);

MetricsReport build_report(const EpisodeRecord& record,
                           std::span<const double> utilization_curve = {}, int window = 20,
                           double tol = 0.01);

// One header line plus one data row; absent values serialize as empty cells.
std::string report_csv(const MetricsReport& report);

// Spearman rank correlation with average ranks on ties; needs >= 2 pairs.
double spearman(std::span<const double> x, std::span<const double> y);

}  // namespace orchestra
