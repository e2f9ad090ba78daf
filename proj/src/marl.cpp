#include "orchestra/marl.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <numeric>
#include <thread>

#include "orchestra/errors.hpp"

namespace orchestra {

namespace {

constexpr std::uint64_t kEpisodeSalt = 0x5EED0;
constexpr std::uint64_t kEpisodeStreamSalt = 0xE7150DE;
constexpr std::uint64_t kBatchSalt = 0xBA7C4;
constexpr std::uint64_t kCriticSalt = 0xC817;
constexpr std::uint64_t kSharedActorSalt = 0x54A8ED;
constexpr std::uint64_t kRoleActorSalt = 0xAC708;
constexpr std::uint64_t kEvalSalt = 0xE7A1;

void check_finite(double x, const char* what) {
  if (!std::isfinite(x)) throw ContractViolation(std::string(what) + " must be finite");
}

std::vector<int> actor_sizes(int input, const std::vector<int>& hidden, int output) {
  std::vector<int> sizes;
  sizes.push_back(input);
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(output);
  return sizes;
}

int role_index(RoleTag tag) {
  switch (tag) {
    case RoleTag::Scheduler: return 0;
    case RoleTag::Compute: return 1;
    case RoleTag::Storage: return 2;
  }
  throw ContractViolation("unhandled role tag");
}

// Union-layout network input: zero-padded features, then zero-padded staleness.
std::vector<double> shared_input(const SharedLayout& layout, std::span<const double> features,
                                 std::span<const std::uint8_t> staleness) {
  std::vector<double> input(2 * static_cast<std::size_t>(layout.common_obs), 0.0);
  std::copy(features.begin(), features.end(), input.begin());
  for (std::size_t i = 0; i < staleness.size(); ++i) {
    input[static_cast<std::size_t>(layout.common_obs) + i] = static_cast<double>(staleness[i]);
  }
  return input;
}

std::vector<std::uint8_t> shared_mask(const SharedLayout& layout, RoleTag role,
                                      const std::vector<std::uint8_t>& role_mask) {
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(layout.union_actions), 0);
  const int offset = layout.offset(role);
  std::copy(role_mask.begin(), role_mask.end(), mask.begin() + offset);
  return mask;
}

struct EpochCollection {
  std::vector<Transition> transitions;  // episode-index order
  std::vector<EpisodeRecord> records;
};

EpochCollection collect_epoch(const ActorBank& actors, const SharedLayout& layout,
                              const Trace& trace, const RoleMap& role_map,
                              const TrainConfig& config, int epoch) {
  const int episodes = config.episodes_per_epoch;
  const int workers = std::max(1, std::min(config.rollout_workers, episodes));
  std::vector<EpisodeResult> results(static_cast<std::size_t>(episodes));
  std::vector<std::exception_ptr> failures(static_cast<std::size_t>(workers));

  auto run_range = [&](int worker) {
    try {
      for (int e = worker; e < episodes; e += workers) {
        const std::uint64_t seed =
            derive_seed(config.seed, kEpisodeSalt + static_cast<std::uint64_t>(epoch),
                        static_cast<std::uint64_t>(e));
        results[static_cast<std::size_t>(e)] =
            run_episode(actors, layout, trace, role_map, seed, config.info_loss_rate, epoch);
      }
    } catch (...) {
      failures[static_cast<std::size_t>(worker)] = std::current_exception();
    }
  };

  if (workers == 1) {
    run_range(0);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(run_range, w);
    for (auto& t : pool) t.join();
  }
  for (auto& failure : failures) {
    if (failure) std::rethrow_exception(failure);
  }

  EpochCollection out;
  for (auto& result : results) {
    out.transitions.insert(out.transitions.end(),
                           std::make_move_iterator(result.transitions.begin()),
                           std::make_move_iterator(result.transitions.end()));
    out.records.push_back(std::move(result.record));
  }
  return out;
}

double mean_or_zero(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

void fill_record_from_state(EpisodeRecord& record, const ClusterState& state) {
  record.latency_samples_s = state.latency_samples;
  for (const auto& [task_id, task] : state.tasks) {
    if (!task.place_time.has_value()) continue;
    const double end = task.finish_time.value_or(state.clock);
    record.tenant_cpu_time[task.tenant_id] += task.cpu_demand * std::max(0.0, end - *task.place_time);
  }
  record.finished_tasks = state.finished_count();
  record.simulated_seconds = state.clock;
}

}  // namespace

std::string to_string(Variant variant) {
  switch (variant) {
    case Variant::Baseline: return "baseline";
    case Variant::HracOnly: return "hrac_only";
    case Variant::LgrsOnly: return "lgrs_only";
    case Variant::Full: return "full";
  }
  throw ContractViolation("unhandled variant");
}

Variant variant_from_string(const std::string& s) {
  if (s == "baseline") return Variant::Baseline;
  if (s == "hrac_only") return Variant::HracOnly;
  if (s == "lgrs_only") return Variant::LgrsOnly;
  if (s == "full") return Variant::Full;
  throw ParseError("unknown ablation variant '" + s + "'");
}

ReplayBuffer::ReplayBuffer(std::size_t capacity, int staleness_limit)
    : capacity_(capacity), staleness_limit_(staleness_limit) {
  if (capacity_ == 0) throw ConfigError("replay buffer capacity must be positive");
  if (staleness_limit_ < 1) throw ConfigError("staleness limit must be at least one epoch");
}

void ReplayBuffer::add(Transition t) {
  check_finite(t.local_reward, "transition local reward");
  check_finite(t.global_signal, "transition global signal");
  items_.push_back(std::move(t));
  while (items_.size() > capacity_) items_.pop_front();
}

void ReplayBuffer::evict_stale(int current_epoch) {
  while (!items_.empty() && current_epoch - items_.front().epoch_collected >= staleness_limit_) {
    items_.pop_front();
  }
}

void TrainConfig::validate() const {
  if (gamma < 0.0 || gamma > 1.0) throw ConfigError("gamma must lie in [0, 1]");
  if (alpha_fusion < 0.0 || alpha_fusion > 1.0) throw ConfigError("alpha_fusion must lie in [0, 1]");
  if (eps_norm <= 0.0) throw ConfigError("eps_norm must be positive");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (buffer_capacity < 1) throw ConfigError("buffer capacity must be positive");
  if (staleness_limit < 1) throw ConfigError("staleness limit must be at least one epoch");
  if (total_epochs < 0) throw ConfigError("total_epochs must be non-negative");
  if (episodes_per_epoch < 1) throw ConfigError("episodes_per_epoch must be positive");
  if (updates_per_epoch < 1) throw ConfigError("updates_per_epoch must be positive");
  if (rollout_workers < 1) throw ConfigError("rollout_workers must be positive");
  if (info_loss_rate < 0.0 || info_loss_rate > 1.0) throw ConfigError("info_loss_rate must lie in [0, 1]");
  for (int h : hidden_layers) {
    if (h < 1) throw ConfigError("hidden layer sizes must be positive");
  }
}

SharedLayout shared_layout(const RoleMap& role_map) {
  SharedLayout layout;
  int offset = 0;
  for (RoleTag tag : kRoleOrder) {
    int obs = 0, actions = 0;
    for (const auto& [agent, role] : role_map.assignments) {
      if (role.tag != tag) continue;
      obs = role.observation_size;
      actions = role.action_space_size;
      break;
    }
    layout.common_obs = std::max(layout.common_obs, obs);
    layout.offsets[tag] = offset;
    offset += actions;
  }
  layout.union_actions = offset;
  return layout;
}

const NetParams& ActorBank::net_for(RoleTag tag) const {
  if (shared) return shared_net;
  auto it = per_role.find(tag);
  if (it == per_role.end()) throw LookupError("no policy for role " + to_string(tag));
  return it->second;
}

NetParams& ActorBank::net_for(RoleTag tag) {
  if (shared) return shared_net;
  auto it = per_role.find(tag);
  if (it == per_role.end()) throw LookupError("no policy for role " + to_string(tag));
  return it->second;
}

PolicySet init_policies(const TrainConfig& config, const RoleMap& role_map, const Trace& trace) {
  PolicySet set;
  set.actors.shared = !config.per_role_policies;
  const SharedLayout layout = shared_layout(role_map);
  if (set.actors.shared) {
    set.actors.shared_net =
        init_params(actor_sizes(2 * layout.common_obs, config.hidden_layers, layout.union_actions),
                    derive_seed(config.seed, kSharedActorSalt));
    set.shared_adam = make_adam_state(set.actors.shared_net);
  } else {
    for (RoleTag tag : kRoleOrder) {
      int obs = 0, actions = 0;
      bool found = false;
      for (const auto& [agent, role] : role_map.assignments) {
        if (role.tag != tag) continue;
        obs = role.observation_size;
        actions = role.action_space_size;
        found = true;
        break;
      }
      if (!found) continue;
      set.actors.per_role[tag] =
          init_params(actor_sizes(2 * obs, config.hidden_layers, actions),
                      derive_seed(config.seed, kRoleActorSalt + static_cast<std::uint64_t>(role_index(tag))));
      set.per_role_adams[tag] = make_adam_state(set.actors.per_role[tag]);
    }
  }
  set.critic = init_params(actor_sizes(global_state_size(role_map, trace), config.hidden_layers, 1),
                           derive_seed(config.seed, kCriticSalt));
  set.critic_adam = make_adam_state(set.critic);
  return set;
}

double shape_reward(double local, double global_signal, double alpha_fusion) {
  check_finite(local, "local reward");
  check_finite(global_signal, "global signal");
  if (alpha_fusion < 0.0 || alpha_fusion > 1.0) {
    throw ContractViolation("alpha_fusion must lie in [0, 1]");
  }
  return alpha_fusion * local + (1.0 - alpha_fusion) * global_signal;
}

std::vector<double> normalize_rewards(const std::vector<double>& fused, double eps_norm) {
  if (fused.empty()) throw ContractViolation("cannot normalize an empty reward batch");
  const double n = static_cast<double>(fused.size());
  const double mean = std::accumulate(fused.begin(), fused.end(), 0.0) / n;
  double acc = 0.0;
  for (double r : fused) acc += (r - mean) * (r - mean);
  const double sigma = std::sqrt(acc / n);
  std::vector<double> out;
  out.reserve(fused.size());
  for (double r : fused) out.push_back((r - mean) / (sigma + eps_norm));
  return out;
}

double advantage(double fused_normalized_r, double v_t, double v_t1, double gamma, bool done) {
  check_finite(fused_normalized_r, "reward");
  check_finite(v_t, "value");
  check_finite(v_t1, "bootstrap value");
  return fused_normalized_r + gamma * v_t1 * (done ? 0.0 : 1.0) - v_t;
}

double update_critic(NetParams& critic, AdamState& adam, const std::vector<Transition>& batch,
                     const std::vector<double>& rewards, double gamma, double lr) {
  if (batch.empty()) throw ContractViolation("critic update needs a nonempty batch");
  if (rewards.size() != batch.size()) {
    throw ContractViolation("rewards must align with the batch");
  }
  const double n = static_cast<double>(batch.size());
  NetGrads grads = zero_grads_like(critic);
  double loss = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Transition& t = batch[i];
    const double v = forward_critic(critic, t.global_state);
    const double v1 = forward_critic(critic, t.next_global_state);
    const double target = rewards[i] + gamma * v1 * (t.done ? 0.0 : 1.0);
    const double err = v - target;
    loss += err * err;
    NetGrads gv = grad_value(critic, t.global_state);
    grads.add_scaled(gv, 2.0 * err / n);
  }
  loss /= n;
  if (!std::isfinite(loss)) throw Error("critic TD loss is not finite");
  adam_step(critic, grads, adam, lr);
  return loss;
}

namespace {

double actor_update_impl(NetParams& params, AdamState& adam,
                         const std::vector<const Transition*>& batch,
                         const std::vector<double>& advantages, double lr,
                         const SharedLayout* layout) {
  if (batch.empty()) throw ContractViolation("actor update needs a nonempty batch");
  if (advantages.size() != batch.size()) {
    throw ContractViolation("advantages must align with the batch");
  }
  const double n = static_cast<double>(batch.size());
  NetGrads ascent = zero_grads_like(params);
  double surrogate = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Transition& t = *batch[i];
    std::vector<double> input;
    std::vector<std::uint8_t> mask;
    int action = t.action;
    if (layout != nullptr) {
      input = shared_input(*layout, t.obs_features, t.obs_staleness);
      mask = shared_mask(*layout, t.role, t.mask);
      action += layout->offset(t.role);
    } else {
      Observation obs{t.role, t.obs_features, t.obs_staleness};
      input = network_input(obs);
      mask = t.mask;
    }
    const auto logits = forward_actor(params, input);
    surrogate += advantages[i] * masked_log_prob(logits, mask, action);
    NetGrads g = grad_log_prob(params, input, mask, action);
    ascent.add_scaled(g, advantages[i] / n);
  }
  surrogate /= n;
  ascent.scale(-1.0);  // adam_step descends; flip for ascent
  adam_step(params, ascent, adam, lr);
  return -surrogate;
}

}  // namespace

double update_actor(RoleTag role, NetParams& params, AdamState& adam,
                    const std::vector<const Transition*>& batch,
                    const std::vector<double>& advantages, double lr) {
  for (const Transition* t : batch) {
    if (t->role != role) {
      throw ContractViolation("transition role does not match the updated policy's role");
    }
  }
  return actor_update_impl(params, adam, batch, advantages, lr, nullptr);
}

double update_actor_shared(const SharedLayout& layout, NetParams& params, AdamState& adam,
                           const std::vector<const Transition*>& batch,
                           const std::vector<double>& advantages, double lr) {
  return actor_update_impl(params, adam, batch, advantages, lr, &layout);
}

TrainConfig ablation_variant(const TrainConfig& config, Variant variant) {
  TrainConfig out = config;
  out.variant = variant;
  switch (variant) {
    case Variant::Full:
      out.per_role_policies = true;
      out.normalize_rewards = true;
      break;
    case Variant::Baseline:
      out.per_role_policies = false;
      out.alpha_fusion = 1.0;
      out.normalize_rewards = false;
      break;
    case Variant::HracOnly:
      out.per_role_policies = true;
      out.alpha_fusion = 1.0;
      out.normalize_rewards = false;
      break;
    case Variant::LgrsOnly:
      out.per_role_policies = false;
      out.normalize_rewards = true;
      break;
  }
  return out;
}

EpisodeResult run_episode(const ActorBank& actors, const SharedLayout& layout, const Trace& trace,
                          const RoleMap& role_map, std::uint64_t episode_seed,
                          double info_loss_rate, int epoch, bool collect_transitions) {
  ClusterState state = init_state(trace, role_map, episode_seed);
  Rng rng(derive_seed(episode_seed, kEpisodeStreamSalt));
  EpisodeResult result;

  std::vector<int> agent_order;
  for (const auto& [agent, role] : role_map.assignments) agent_order.push_back(agent);

  auto observe_all = [&]() {
    std::map<int, Observation> obs;
    for (int agent : agent_order) obs[agent] = observe_local(state, agent, info_loss_rate, rng);
    return obs;
  };

  auto obs = observe_all();
  auto global_vec = observe_global(state);

  while (true) {
    std::map<int, Action> joint;
    std::map<int, SampledAction> sampled;
    std::map<int, std::vector<std::uint8_t>> masks;
    for (int agent : agent_order) {
      const RoleTag tag = role_map.tag_of(agent);
      auto mask = mask_from_observation(obs[agent], role_map, agent);
      SampledAction sa;
      if (actors.shared) {
        Observation padded;
        padded.role = tag;
        padded.features = shared_input(layout, obs[agent].features, {});
        padded.features.resize(static_cast<std::size_t>(layout.common_obs));
        padded.staleness.assign(static_cast<std::size_t>(layout.common_obs), 0);
        std::copy(obs[agent].staleness.begin(), obs[agent].staleness.end(), padded.staleness.begin());
        const auto union_m = shared_mask(layout, tag, mask);
        sa = sample_action(actors.shared_net, padded, union_m, rng);
        sa.action.role = tag;
        sa.action.index -= layout.offset(tag);
      } else {
        sa = sample_action(actors.net_for(tag), obs[agent], mask, rng);
      }
      joint[agent] = sa.action;
      sampled[agent] = sa;
      masks[agent] = std::move(mask);
    }

    const StepOutcome outcome = step(state, joint);
    result.record.utilization_samples.push_back(state.cluster_cpu_utilization());
    auto next_obs = observe_all();
    auto next_global = observe_global(state);

    if (collect_transitions) {
      for (int agent : agent_order) {
        Transition t;
        t.agent_id = agent;
        t.role = role_map.tag_of(agent);
        t.obs_features = obs[agent].features;
        t.obs_staleness = obs[agent].staleness;
        t.mask = masks[agent];
        t.global_state = global_vec;
        t.action = joint[agent].index;
        t.log_prob = sampled[agent].log_prob;
        t.local_reward = outcome.local_rewards.at(agent);
        t.global_signal = outcome.global_signal;
        t.next_obs_features = next_obs[agent].features;
        t.next_obs_staleness = next_obs[agent].staleness;
        t.next_global_state = next_global;
        t.done = outcome.done;
        t.epoch_collected = epoch;
        result.transitions.push_back(std::move(t));
      }
    }

    obs = std::move(next_obs);
    global_vec = std::move(next_global);
    if (outcome.done) break;
  }

  fill_record_from_state(result.record, state);
  return result;
}

EpisodeResult run_scripted_episode(BaselinePolicy policy, const Trace& trace,
                                   const RoleMap& role_map, std::uint64_t episode_seed) {
  ClusterState state = init_state(trace, role_map, episode_seed);
  Rng rng(derive_seed(episode_seed, kEpisodeStreamSalt));
  EpisodeResult result;

  std::vector<int> agent_order;
  for (const auto& [agent, role] : role_map.assignments) agent_order.push_back(agent);
  const int n_machines = static_cast<int>(role_map.machine_order.size());

  while (true) {
    std::map<int, Action> joint;
    for (int agent : agent_order) {
      const Role& role = role_map.role_of(agent);
      const auto mask = legal_mask(state, agent, role_map);
      int index = 0;
      if (policy == BaselinePolicy::Random) {
        std::vector<int> legal;
        for (std::size_t i = 0; i < mask.size(); ++i) {
          if (mask[i]) legal.push_back(static_cast<int>(i));
        }
        index = legal[static_cast<std::size_t>(rng.uniform_int(static_cast<std::uint64_t>(legal.size())))];
      } else {
        switch (role.tag) {
          case RoleTag::Scheduler: {
            index = n_machines;  // defer unless something fits
            for (int m = 0; m < n_machines; ++m) {
              if (mask[static_cast<std::size_t>(m)]) {
                index = m;  // first fit
                break;
              }
            }
            break;
          }
          case RoleTag::Compute:
            index = kComputeActionAdmit;
            break;
          case RoleTag::Storage:
            index = 2;  // full rate
            break;
        }
      }
      joint[agent] = Action{role.tag, index};
    }
    const StepOutcome outcome = step(state, joint);
    result.record.utilization_samples.push_back(state.cluster_cpu_utilization());
    if (outcome.done) break;
  }

  fill_record_from_state(result.record, state);
  return result;
}

RunArtifacts train(const TrainConfig& config, const Trace& trace, const RoleMap& role_map,
                   const EpochCallback& on_epoch, const std::optional<TrainResume>& resume,
                   std::optional<int> epoch_limit) {
  config.validate();
  const SharedLayout layout = shared_layout(role_map);
  const int n_agents = static_cast<int>(role_map.assignments.size());

  RunArtifacts artifacts;
  PolicySet policies = resume ? resume->policies : init_policies(config, role_map, trace);
  ReplayBuffer buffer(static_cast<std::size_t>(config.buffer_capacity), config.staleness_limit);
  std::deque<ActorSnapshot> snapshots;
  long episodes_done = resume ? resume->episodes_done : 0;
  const int start_epoch = resume ? resume->completed_epochs : 0;

  if (resume) {
    // Refill the buffer by replaying the recent epochs' rollouts with the
    // actor parameters they were collected under.
    std::vector<ActorSnapshot> past = resume->rollout_snapshots;
    std::sort(past.begin(), past.end(),
              [](const ActorSnapshot& a, const ActorSnapshot& b) { return a.epoch < b.epoch; });
    for (const auto& snap : past) {
      if (snap.epoch >= start_epoch) continue;
      if (start_epoch - snap.epoch >= config.staleness_limit) continue;
      EpochCollection collected =
          collect_epoch(snap.actors, layout, trace, role_map, config, snap.epoch);
      for (auto& t : collected.transitions) buffer.add(std::move(t));
      buffer.evict_stale(snap.epoch);
      snapshots.push_back(snap);
    }
  }

  const int end_epoch =
      epoch_limit ? std::min(config.total_epochs, *epoch_limit) : config.total_epochs;
  for (int epoch = start_epoch; epoch < end_epoch; ++epoch) {
    snapshots.push_back(ActorSnapshot{epoch, policies.actors});
    while (snapshots.size() > static_cast<std::size_t>(config.staleness_limit)) {
      snapshots.pop_front();
    }
    const double lr = lr_at(config.lr, epoch);

    EpochCollection collected = collect_epoch(policies.actors, layout, trace, role_map, config, epoch);
    for (auto& t : collected.transitions) buffer.add(std::move(t));
    buffer.evict_stale(epoch);
    episodes_done += config.episodes_per_epoch;

    const auto update_start = std::chrono::steady_clock::now();
    Rng batch_rng(derive_seed(config.seed, kBatchSalt, static_cast<std::uint64_t>(epoch)));
    double actor_loss_sum = 0.0, critic_loss_sum = 0.0;
    int updates = 0;
    const std::size_t draw = static_cast<std::size_t>(config.batch_size) * n_agents;
    for (int u = 0; u < config.updates_per_epoch && !buffer.empty(); ++u) {
      std::vector<Transition> batch;
      batch.reserve(draw);
      for (std::size_t i = 0; i < draw; ++i) {
        batch.push_back(buffer.at(static_cast<std::size_t>(
            batch_rng.uniform_int(static_cast<std::uint64_t>(buffer.size())))));
      }

      std::vector<double> rewards(batch.size());
      for (std::size_t i = 0; i < batch.size(); ++i) {
        rewards[i] = shape_reward(batch[i].local_reward, batch[i].global_signal, config.alpha_fusion);
      }
      if (config.normalize_rewards) {
        for (RoleTag tag : kRoleOrder) {
          std::vector<std::size_t> idx;
          std::vector<double> group;
          for (std::size_t i = 0; i < batch.size(); ++i) {
            if (batch[i].role != tag) continue;
            idx.push_back(i);
            group.push_back(rewards[i]);
          }
          if (group.empty()) continue;
          const auto normalized = normalize_rewards(group, config.eps_norm);
          for (std::size_t k = 0; k < idx.size(); ++k) rewards[idx[k]] = normalized[k];
        }
      }

      critic_loss_sum += update_critic(policies.critic, policies.critic_adam, batch, rewards,
                                       config.gamma, lr);

      std::vector<double> advantages(batch.size());
      for (std::size_t i = 0; i < batch.size(); ++i) {
        const double v = forward_critic(policies.critic, batch[i].global_state);
        const double v1 = forward_critic(policies.critic, batch[i].next_global_state);
        advantages[i] = advantage(rewards[i], v, v1, config.gamma, batch[i].done);
      }

      double weighted_actor_loss = 0.0;
      if (policies.actors.shared) {
        std::vector<const Transition*> ptrs;
        ptrs.reserve(batch.size());
        for (const auto& t : batch) ptrs.push_back(&t);
        weighted_actor_loss = update_actor_shared(layout, policies.actors.shared_net,
                                                  policies.shared_adam, ptrs, advantages, lr);
      } else {
        std::size_t covered = 0;
        for (RoleTag tag : kRoleOrder) {
          std::vector<const Transition*> ptrs;
          std::vector<double> adv;
          for (std::size_t i = 0; i < batch.size(); ++i) {
            if (batch[i].role != tag) continue;
            ptrs.push_back(&batch[i]);
            adv.push_back(advantages[i]);
          }
          if (ptrs.empty()) continue;
          const double loss = update_actor(tag, policies.actors.net_for(tag),
                                           policies.per_role_adams.at(tag), ptrs, adv, lr);
          weighted_actor_loss += loss * static_cast<double>(ptrs.size());
          covered += ptrs.size();
        }
        if (covered > 0) weighted_actor_loss /= static_cast<double>(covered);
      }
      actor_loss_sum += weighted_actor_loss;
      updates += 1;
    }
    const auto update_end = std::chrono::steady_clock::now();

    EpochStats stats;
    stats.epoch = epoch;
    stats.lr = lr;
    std::vector<double> per_episode_util;
    std::vector<double> all_latencies;
    for (const auto& record : collected.records) {
      per_episode_util.push_back(mean_or_zero(record.utilization_samples));
      all_latencies.insert(all_latencies.end(), record.latency_samples_s.begin(),
                           record.latency_samples_s.end());
    }
    stats.mean_utilization = mean_or_zero(per_episode_util);
    stats.mean_latency_s = mean_or_zero(all_latencies);
    stats.actor_loss = updates > 0 ? actor_loss_sum / updates : 0.0;
    stats.critic_loss = updates > 0 ? critic_loss_sum / updates : 0.0;
    stats.episodes = episodes_done;
    stats.update_seconds = std::chrono::duration<double>(update_end - update_start).count();
    artifacts.curve.push_back(stats);

    if (on_epoch) {
      on_epoch(stats, policies,
               std::vector<ActorSnapshot>(snapshots.begin(), snapshots.end()));
    }
  }

  artifacts.policies = std::move(policies);
  artifacts.rollout_snapshots.assign(snapshots.begin(), snapshots.end());
  artifacts.epochs_completed = std::max(start_epoch, end_epoch);
  artifacts.episodes_done = episodes_done;
  return artifacts;
}

namespace {

EvalSummary summarize(std::vector<EpisodeRecord> records) {
  EvalSummary summary;
  summary.episodes = static_cast<int>(records.size());
  std::vector<double> per_episode_util;
  for (const auto& r : records) per_episode_util.push_back(mean_or_zero(r.utilization_samples));
  summary.mean_utilization = mean_or_zero(per_episode_util);
  summary.merged = merge_records(records);
  summary.mean_latency_s = mean_or_zero(summary.merged.latency_samples_s);
  return summary;
}

}  // namespace

EvalSummary evaluate(const ActorBank& actors, const SharedLayout& layout, const Trace& trace,
                     const RoleMap& role_map, int episodes, std::uint64_t seed,
                     double info_loss_rate) {
  if (episodes < 1) throw ConfigError("evaluation needs at least one episode");
  std::vector<EpisodeRecord> records;
  records.reserve(static_cast<std::size_t>(episodes));
  for (int e = 0; e < episodes; ++e) {
    const std::uint64_t episode_seed = derive_seed(seed, kEvalSalt, static_cast<std::uint64_t>(e));
    records.push_back(run_episode(actors, layout, trace, role_map, episode_seed, info_loss_rate,
                                  /*epoch=*/0, /*collect_transitions=*/false)
                          .record);
  }
  return summarize(std::move(records));
}

EvalSummary evaluate_scripted(BaselinePolicy policy, const Trace& trace, const RoleMap& role_map,
                              int episodes, std::uint64_t seed) {
  if (episodes < 1) throw ConfigError("evaluation needs at least one episode");
  std::vector<EpisodeRecord> records;
  records.reserve(static_cast<std::size_t>(episodes));
  for (int e = 0; e < episodes; ++e) {
    const std::uint64_t episode_seed = derive_seed(seed, kEvalSalt, static_cast<std::uint64_t>(e));
    records.push_back(run_scripted_episode(policy, trace, role_map, episode_seed).record);
  }
  return summarize(std::move(records));
}

}  // namespace orchestra
