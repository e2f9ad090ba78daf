#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "orchestra/agents.hpp"
#include "orchestra/metrics.hpp"
#include "orchestra/policy.hpp"
#include "orchestra/sim.hpp"
#include "orchestra/trace.hpp"

namespace orchestra {

enum class Variant { Baseline, HracOnly, LgrsOnly, Full };

std::string to_string(Variant variant);
Variant variant_from_string(const std::string& s);

struct Transition {
  int agent_id = -1;
  RoleTag role = RoleTag::Scheduler;
  std::vector<double> obs_features;
  std::vector<std::uint8_t> obs_staleness;
  std::vector<std::uint8_t> mask;  // legality at collection time
  std::vector<double> global_state;
  int action = 0;  // index within the role's own action space
  double log_prob = 0.0;
  double local_reward = 0.0;
  double global_signal = 0.0;
  std::vector<double> next_obs_features;
  std::vector<std::uint8_t> next_obs_staleness;
  std::vector<double> next_global_state;
  bool done = false;
  int epoch_collected = 0;
};

class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, int staleness_limit);

  void add(Transition t);
  // Drops transitions with current_epoch - epoch_collected >= staleness limit.
  void evict_stale(int current_epoch);
  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  const Transition& at(std::size_t i) const { return items_.at(i); }
  int staleness_limit() const { return staleness_limit_; }
  std::size_t capacity() const { return capacity_; }

 private:
  std::deque<Transition> items_;
  std::size_t capacity_;
  int staleness_limit_;
};

struct TrainConfig {
  double gamma = 0.99;
  double alpha_fusion = 0.5;
  double eps_norm = 1e-8;
  int batch_size = 64;  // per agent; the drawn batch holds batch_size x n_agents samples
  int buffer_capacity = 100000;
  int staleness_limit = 5;
  int total_epochs = 100;
  int episodes_per_epoch = 4;
  int updates_per_epoch = 8;
  int rollout_workers = 1;
  std::uint64_t seed = 1;
  std::vector<int> hidden_layers = {64, 64};
  LrSchedule lr{1e-4, 1e-5, 100};
  double info_loss_rate = 0.0;
  RoleCounts roles{2, 1, 1};
  bool per_role_policies = true;   // HRAC on
  bool normalize_rewards = true;   // Eq-3-style per-role batch normalization on
  Variant variant = Variant::Full;

  void validate() const;
};

// Union layout used when one policy serves every role: observations are
// zero-padded to a common width and action blocks are concatenated in role
// phase order (scheduler, compute, storage).
struct SharedLayout {
  int common_obs = 0;
  int union_actions = 0;
  std::map<RoleTag, int> offsets;

  int offset(RoleTag tag) const { return offsets.at(tag); }
};

SharedLayout shared_layout(const RoleMap& role_map);

struct ActorBank {
  bool shared = false;
  std::map<RoleTag, NetParams> per_role;
  NetParams shared_net;

  const NetParams& net_for(RoleTag tag) const;
  NetParams& net_for(RoleTag tag);
};

struct PolicySet {
  ActorBank actors;
  std::map<RoleTag, AdamState> per_role_adams;
  AdamState shared_adam;
  NetParams critic;
  AdamState critic_adam;
};

PolicySet init_policies(const TrainConfig& config, const RoleMap& role_map, const Trace& trace);

double shape_reward(double local, double global_signal, double alpha_fusion);

std::vector<double> normalize_rewards(const std::vector<double>& fused, double eps_norm);

double advantage(double fused_normalized_r, double v_t, double v_t1, double gamma, bool done);

// One descent step on the TD loss; returns the pre-update mean loss. Targets
// use the supplied (already fused/normalized) rewards and a frozen bootstrap.
double update_critic(NetParams& critic, AdamState& adam, const std::vector<Transition>& batch,
                     const std::vector<double>& rewards, double gamma, double lr);

// One Adam ascent step on mean(advantage x grad log pi) over the given role's
// transitions; returns the pre-update surrogate loss -mean(A log pi).
double update_actor(RoleTag role, NetParams& params, AdamState& adam,
                    const std::vector<const Transition*>& batch,
                    const std::vector<double>& advantages, double lr);

// Same update through the shared union-layout policy (role read per transition).
double update_actor_shared(const SharedLayout& layout, NetParams& params, AdamState& adam,
                           const std::vector<const Transition*>& batch,
                           const std::vector<double>& advantages, double lr);

TrainConfig ablation_variant(const TrainConfig& config, Variant variant);

struct EpisodeResult {
  std::vector<Transition> transitions;
  EpisodeRecord record;
};

// Runs one full episode with observation-derived action masks (decentralized
// execution). With info loss 0 those masks coincide with the true legal masks.
EpisodeResult run_episode(const ActorBank& actors, const SharedLayout& layout, const Trace& trace,
                          const RoleMap& role_map, std::uint64_t episode_seed,
                          double info_loss_rate, int epoch, bool collect_transitions = true);

enum class BaselinePolicy { Random, Greedy };

// Scripted reference policies used for evaluation floors/ceilings.
EpisodeResult run_scripted_episode(BaselinePolicy policy, const Trace& trace,
                                   const RoleMap& role_map, std::uint64_t episode_seed);

struct EpochStats {
  int epoch = 0;
  double lr = 0.0;
  double mean_utilization = 0.0;  // fraction of capacity, averaged over the epoch's episodes
  double mean_latency_s = 0.0;
  double actor_loss = 0.0;
  double critic_loss = 0.0;
  long episodes = 0;  // cumulative episodes collected so far
  double update_seconds = 0.0;
};

struct ActorSnapshot {
  int epoch = 0;
  ActorBank actors;
};

struct TrainResume {
  PolicySet policies;
  std::vector<ActorSnapshot> rollout_snapshots;  // actors as used for each recent epoch's rollouts
  int completed_epochs = 0;
  long episodes_done = 0;
};

struct RunArtifacts {
  std::vector<EpochStats> curve;  // rows for the epochs run in this call
  PolicySet policies;
  std::vector<ActorSnapshot> rollout_snapshots;
  int epochs_completed = 0;
  long episodes_done = 0;
};

using EpochCallback =
    std::function<void(const EpochStats&, const PolicySet&, const std::vector<ActorSnapshot>&)>;

// epoch_limit caps the global epoch index reached in this call (useful for
// time-boxed invocations); the run stays resumable and the lr schedule is
// unaffected because it depends only on total_epochs.
RunArtifacts train(const TrainConfig& config, const Trace& trace, const RoleMap& role_map,
                   const EpochCallback& on_epoch = {},
                   const std::optional<TrainResume>& resume = std::nullopt,
                   std::optional<int> epoch_limit = std::nullopt);

struct EvalSummary {
  EpisodeRecord merged;
  double mean_utilization = 0.0;  // fraction
  double mean_latency_s = 0.0;
  int episodes = 0;
};

EvalSummary evaluate(const ActorBank& actors, const SharedLayout& layout, const Trace& trace,
                     const RoleMap& role_map, int episodes, std::uint64_t seed,
                     double info_loss_rate);

EvalSummary evaluate_scripted(BaselinePolicy policy, const Trace& trace, const RoleMap& role_map,
                              int episodes, std::uint64_t seed);

}  // namespace orchestra
