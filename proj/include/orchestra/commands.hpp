#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "orchestra/config.hpp"
#include "orchestra/marl.hpp"
#include "orchestra/metrics.hpp"

namespace orchestra {

inline constexpr int kCheckpointVersion = 1;
inline constexpr const char* kCurveHeader =
    "epoch,lr,mean_utilization,mean_latency_s,actor_loss,critic_loss,episodes";

nlohmann::json actor_bank_to_json(const ActorBank& bank);
ActorBank actor_bank_from_json(const nlohmann::json& j);

struct Checkpoint {
  int version = kCheckpointVersion;
  int epoch = 0;  // completed epochs
  long episodes = 0;
  Variant variant = Variant::Full;
  std::string fingerprint;
  PolicySet policies;
};

nlohmann::json checkpoint_to_json(const Checkpoint& checkpoint);
Checkpoint checkpoint_from_json(const nlohmann::json& j);

// Applies the ORCHESTRA_WORKERS environment cap to a configured worker count.
int effective_workers(int configured);

// Builds the role assignment for a config against the machines in a trace.
RoleMap role_map_for(const RunConfig& config, const Trace& trace);

void run_gen_trace(const std::string& spec_path, const std::string& out_dir, std::uint64_t seed);

struct TrainResult {
  std::vector<EpochStats> curve;  // full curve including rows restored on resume
  PolicySet policies;
  int epochs_completed = 0;
  long episodes = 0;
};

// Trains into out_dir, writing curve.csv, checkpoint.json, and rollout
// snapshots after every epoch; resumes from an existing checkpoint.
// stop_after caps the global epoch count completed by this invocation,
// leaving the run directory resumable; omit it to train to total_epochs.
TrainResult run_train(const RunConfig& config, const std::string& out_dir,
                      std::optional<int> stop_after = std::nullopt);

// Evaluates the checkpoint in run_dir and writes eval.csv there.
MetricsReport run_eval(const RunConfig& config, const std::string& run_dir);

struct AblationRow {
  std::string label;
  Variant variant = Variant::Full;
  double utilization_pct = 0.0;
  std::optional<double> latency_ms;
  std::optional<double> convergence_epoch;  // mean over seeds where defined
};

std::vector<AblationRow> run_ablate(const RunConfig& config, const std::string& out_dir);

struct SweepPoint {
  double value = 0.0;
  MetricsReport report;  // seed-averaged
};

struct SweepResult {
  SweepAxis axis = SweepAxis::InfoLoss;
  std::vector<SweepPoint> points;
  std::map<std::string, double> spearman_by_metric;
};

SweepResult run_sweep(const RunConfig& config, const SweepSpec& spec, const std::string& out_dir);

void run_report(const std::string& run_dir, const std::string& format);

}  // namespace orchestra
