#include "orchestra/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "orchestra/csv.hpp"
#include "orchestra/errors.hpp"

namespace orchestra {

namespace {

double population_stddev(std::span<const double> xs) {
  const double n = static_cast<double>(xs.size());
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  double acc = 0.0;
  for (double x : xs) acc += (x - mean) * (x - mean);
  return std::sqrt(acc / n);
}

}  // namespace

EpisodeRecord merge_records(const std::vector<EpisodeRecord>& records) {
  EpisodeRecord out;
  for (const auto& r : records) {
    out.utilization_samples.insert(out.utilization_samples.end(), r.utilization_samples.begin(),
                                   r.utilization_samples.end());
    out.latency_samples_s.insert(out.latency_samples_s.end(), r.latency_samples_s.begin(),
                                 r.latency_samples_s.end());
    for (const auto& [tenant, cpu_time] : r.tenant_cpu_time) out.tenant_cpu_time[tenant] += cpu_time;
    out.update_durations_s.insert(out.update_durations_s.end(), r.update_durations_s.begin(),
                                  r.update_durations_s.end());
    out.finished_tasks += r.finished_tasks;
    out.simulated_seconds += r.simulated_seconds;
  }
  return out;
}

double utilization_pct(const EpisodeRecord& record) {
  if (record.utilization_samples.empty()) {
    throw ValidationError("utilization needs at least one sample");
  }
  const double mean =
      std::accumulate(record.utilization_samples.begin(), record.utilization_samples.end(), 0.0) /
      static_cast<double>(record.utilization_samples.size());
  return mean * 100.0;
}

std::optional<double> avg_latency_ms(const EpisodeRecord& record) {
  if (record.latency_samples_s.empty()) return std::nullopt;
  const double mean =
      std::accumulate(record.latency_samples_s.begin(), record.latency_samples_s.end(), 0.0) /
      static_cast<double>(record.latency_samples_s.size());
  return mean * 1000.0;
}

std::optional<int> convergence_epoch(std::span<const double> curve, int window, double tol) {
  if (window < 1) throw ValidationError("convergence window must be positive");
  if (curve.size() < static_cast<std::size_t>(window)) {
    throw ValidationError("curve shorter than the convergence window");
  }
  const double final_value = curve.back();
  const double bound = tol * std::abs(final_value);
  for (std::size_t e = static_cast<std::size_t>(window) - 1; e < curve.size(); ++e) {
    const auto begin = curve.begin() + static_cast<std::ptrdiff_t>(e + 1 - window);
    const auto end = curve.begin() + static_cast<std::ptrdiff_t>(e + 1);
    const auto [lo, hi] = std::minmax_element(begin, end);
    if (*hi - *lo <= bound) return static_cast<int>(e);
  }
  return std::nullopt;
}

double usage_stddev(const EpisodeRecord& record) {
  if (record.utilization_samples.size() < 2) {
    throw ValidationError("usage stddev needs at least two samples");
  }
  return population_stddev(record.utilization_samples);
}

FairnessResult fairness(const EpisodeRecord& record) {
  double total = 0.0;
  for (const auto& [tenant, cpu_time] : record.tenant_cpu_time) {
    if (cpu_time < 0.0) throw ValidationError("negative tenant cpu time");
    total += cpu_time;
  }
  if (record.tenant_cpu_time.empty() || total <= 0.0) {
    throw ValidationError("fairness needs at least one tenant with nonzero allocation");
  }
  std::vector<double> shares;
  shares.reserve(record.tenant_cpu_time.size());
  for (const auto& [tenant, cpu_time] : record.tenant_cpu_time) shares.push_back(cpu_time / total);
  const double n = static_cast<double>(shares.size());
  const double mean = 1.0 / n;
  double var = 0.0;
  for (double s : shares) var += (s - mean) * (s - mean);
  var /= n;
  const double min_share = *std::min_element(shares.begin(), shares.end());
  return FairnessResult{var, min_share * 100.0};
}

ScalabilityResult scalability(const EpisodeRecord& record) {
  ScalabilityResult out;
  out.throughput_tasks_per_s = record.simulated_seconds > 0.0
                                   ? record.finished_tasks / record.simulated_seconds
                                   : 0.0;
  if (!record.update_durations_s.empty()) {
    out.policy_update_time_s =
        std::accumulate(record.update_durations_s.begin(), record.update_durations_s.end(), 0.0) /
        static_cast<double>(record.update_durations_s.size());
  }
  return out;
}

MetricsReport build_report(const EpisodeRecord& record, std::span<const double> utilization_curve,
                           int window, double tol) {
  MetricsReport report;
  report.resource_utilization_pct = utilization_pct(record);
  report.avg_scheduling_latency_ms = avg_latency_ms(record);
  if (utilization_curve.size() >= static_cast<std::size_t>(window)) {
    report.convergence_epoch = convergence_epoch(utilization_curve, window, tol);
  }
  if (record.utilization_samples.size() >= 2) report.usage_stddev = usage_stddev(record);
  bool has_allocation = false;
  for (const auto& [tenant, cpu_time] : record.tenant_cpu_time) has_allocation |= cpu_time > 0.0;
  if (has_allocation) {
    const FairnessResult f = fairness(record);
    report.allocation_variance = f.allocation_variance;
    report.min_tenant_share_pct = f.min_tenant_share_pct;
  }
  const ScalabilityResult s = scalability(record);
  report.throughput_tasks_per_s = s.throughput_tasks_per_s;
  report.policy_update_time_s = s.policy_update_time_s;
  return report;
}

namespace {

std::vector<double> average_ranks(std::span<const double> xs) {
  const std::size_t n = xs.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ValidationError("spearman needs equal-length series");
  if (x.size() < 2) throw ValidationError("spearman needs at least two pairs");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mean = (n + 1.0) / 2.0;
  double num = 0.0, dx = 0.0, dy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    num += (rx[i] - mean) * (ry[i] - mean);
    dx += (rx[i] - mean) * (rx[i] - mean);
    dy += (ry[i] - mean) * (ry[i] - mean);
  }
  if (dx == 0.0 || dy == 0.0) return 0.0;  // a constant series carries no ordering
  return num / std::sqrt(dx * dy);
}

std::string report_csv(const MetricsReport& report) {
  std::ostringstream out;
  out << "resource_utilization_pct,avg_scheduling_latency_ms,convergence_epoch,usage_stddev,"
         "allocation_variance,min_tenant_share_pct,throughput_tasks_per_s,policy_update_time_s\n";
  out << format_double(report.resource_utilization_pct) << ',';
  if (report.avg_scheduling_latency_ms) out << format_double(*report.avg_scheduling_latency_ms);
  out << ',';
  if (report.convergence_epoch) out << *report.convergence_epoch;
  out << ',';
  out << format_double(report.usage_stddev) << ',' << format_double(report.allocation_variance)
      << ',' << format_double(report.min_tenant_share_pct) << ','
      << format_double(report.throughput_tasks_per_s) << ',';
  if (report.policy_update_time_s) out << format_double(*report.policy_update_time_s);
  out << '\n';
  return out.str();
}

}  // namespace orchestra
