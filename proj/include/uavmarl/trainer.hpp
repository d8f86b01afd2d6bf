#pragma once

// Episodic REINFORCE with a baseline and entropy bonus, trained centrally
// over the whole roster with one shared team reward (total QoS per step).

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "uavmarl/checkpoint.hpp"
#include "uavmarl/commnet.hpp"
#include "uavmarl/env.hpp"
#include "uavmarl/error.hpp"
#include "uavmarl/nn.hpp"
#include "uavmarl/rng.hpp"

namespace uavmarl {

enum class BaselineKind { Ema, BatchMean };

inline std::string_view to_string(BaselineKind kind) {
  return kind == BaselineKind::Ema ? "ema" : "batch_mean";
}

struct TrainConfig {
  int epochs = 3000;
  double gamma = 0.95;
  double entropy_coef = 0.01;
  BaselineKind baseline = BaselineKind::Ema;
  double baseline_decay = 0.95;
  // Adam at 3e-4: the optimizer default of 1e-3 collapsed several desk-scale
  // runs to near-deterministic bad policies.
  OptimizerConfig optimizer{OptimizerKind::Adam, 3e-4};
  int eval_every = 0;  // 0: checkpoint only at the end
  std::uint64_t seed = 0;
  MdpMode mdp_mode = MdpMode::Pomdp;
  Method method = Method::Proposed;
  std::size_t hidden_width = 32;
  std::size_t hidden_layers = 6;
  Activation activation = Activation::Tanh;
  MixingMode mixing_mode = MixingMode::Separate;
  int smoothing_window = 100;
  // Number of distinct user layouts cycled through during training; 0 draws
  // a fresh layout every episode. The default trains each run on the one
  // layout fixed by its seed.
  int layout_pool = 1;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;

  void validate() const {
    if (epochs < 1) throw ConfigError("epochs", "must be >= 1");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma", "must lie in [0, 1]");
    if (!(entropy_coef >= 0.0)) throw ConfigError("entropy_coef", "must be >= 0");
    if (!(baseline_decay >= 0.0 && baseline_decay < 1.0))
      throw ConfigError("baseline_decay", "must lie in [0, 1)");
    if (!(optimizer.lr > 0.0)) throw ConfigError("lr", "must be > 0");
    if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0)) throw ConfigError("beta1", "must lie in [0, 1)");
    if (!(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0)) throw ConfigError("beta2", "must lie in [0, 1)");
    if (!(optimizer.epsilon > 0.0)) throw ConfigError("epsilon", "must be > 0");
    if (eval_every < 0) throw ConfigError("eval_every", "must be >= 0");
    if (hidden_width < 1) throw ConfigError("hidden_width", "must be >= 1");
    if (smoothing_window < 1) throw ConfigError("smoothing_window", "must be >= 1");
    if (layout_pool < 0) throw ConfigError("layout_pool", "must be >= 0");
  }
};

inline NetShape net_shape(const EnvConfig& env, const TrainConfig& train) {
  return NetShape{observation_dim(env), train.hidden_width, train.hidden_layers, train.activation,
                  train.mixing_mode};
}

// Environment seed for episode `index` of a run; shared by all methods
// with the same run seed so they face the same user layouts.
inline std::uint64_t episode_seed(std::uint64_t run_seed, std::uint64_t index) {
  return splitmix64(splitmix64(run_seed) ^ (index + 1));
}

struct StepRecord {
  ObservationSet obs;
  std::optional<JointCache> cache;  // empty when no agent runs a network
  SampledActions sampled;
  double reward = 0.0;
  std::vector<double> per_uav_qos;
};

struct Trajectory {
  std::vector<StepRecord> steps;
  std::vector<double> returns;

  std::vector<double> rewards() const {
    std::vector<double> r;
    r.reserve(steps.size());
    for (const auto& s : steps) r.push_back(s.reward);
    return r;
  }
};

// Discounted suffix sums: G_t = r_t + gamma * G_{t+1}.
inline std::vector<double> compute_returns(std::span<const double> rewards, double gamma) {
  std::vector<double> g(rewards.size(), 0.0);
  double acc = 0.0;
  for (std::size_t t = rewards.size(); t-- > 0;) {
    acc = rewards[t] + gamma * acc;
    g[t] = acc;
  }
  return g;
}

enum class ActionSelection { Sample, Greedy };

inline Trajectory rollout_from(const EnvConfig& env, const AgentRoster& roster, MdpMode mode, Rng& rng,
                               WorldState state, double gamma, ActionSelection selection = ActionSelection::Sample) {
  if (roster.num_agents() != state.uav_pos.size()) {
    throw ArityError("rollout: roster has " + std::to_string(roster.num_agents()) + " agents for " +
                     std::to_string(state.uav_pos.size()) + " UAVs");
  }
  Trajectory traj;
  traj.steps.reserve(static_cast<std::size_t>(env.episode_length));
  const std::vector<std::vector<double>> uniform(roster.num_agents(), std::vector<double>(kNumMoves, 0.0));
  while (state.t < env.episode_length) {
    StepRecord rec;
    rec.obs = observe(state, env, mode);
    if (roster.any_learnable()) rec.cache = joint_forward(roster, rec.obs);
    const auto& logits = rec.cache ? rec.cache->logits : uniform;
    rec.sampled = selection == ActionSelection::Greedy ? greedy_actions(logits) : sample_actions(logits, rng);
    auto next = step(state, rec.sampled.actions, env);
    rec.reward = next.qos.total_qos;
    rec.per_uav_qos = std::move(next.qos.per_uav_serving_qos);
    state = std::move(next.state);
    traj.steps.push_back(std::move(rec));
  }
  traj.returns = compute_returns(traj.rewards(), gamma);
  return traj;
}

inline Trajectory rollout(const EnvConfig& env, const AgentRoster& roster, MdpMode mode, Rng& rng,
                          std::uint64_t env_seed, double gamma,
                          ActionSelection selection = ActionSelection::Sample) {
  return rollout_from(env, roster, mode, rng, reset(env, env_seed), gamma, selection);
}

// Per-timestep baseline. Ema keeps a bias-corrected exponential average of
// G_t across episodes (0 before the first update); BatchMean uses the mean
// return of the current episode.
class Baseline {
 public:
  Baseline(BaselineKind kind, double decay) : kind_(kind), decay_(decay) {}

  std::vector<double> values(std::span<const double> returns) const {
    std::vector<double> b(returns.size(), 0.0);
    if (kind_ == BaselineKind::BatchMean) {
      double sum = 0.0;
      for (double g : returns) sum += g;
      const double mean = returns.empty() ? 0.0 : sum / static_cast<double>(returns.size());
      std::fill(b.begin(), b.end(), mean);
      return b;
    }
    for (std::size_t t = 0; t < returns.size() && t < ema_.size(); ++t) {
      if (updates_[t] > 0) b[t] = ema_[t] / (1.0 - std::pow(decay_, static_cast<double>(updates_[t])));
    }
    return b;
  }

  void update(std::span<const double> returns) {
    if (kind_ != BaselineKind::Ema) return;
    if (ema_.size() < returns.size()) {
      ema_.resize(returns.size(), 0.0);
      updates_.resize(returns.size(), 0);
    }
    for (std::size_t t = 0; t < returns.size(); ++t) {
      ema_[t] = decay_ * ema_[t] + (1.0 - decay_) * returns[t];
      ++updates_[t];
    }
  }

 private:
  BaselineKind kind_;
  double decay_;
  std::vector<double> ema_;
  std::vector<long> updates_;
};

struct LossDiagnostics {
  double loss = 0.0;
  double policy_loss = 0.0;
  double entropy = 0.0;
  double mean_advantage = 0.0;
};

struct LogitGradient {
  std::vector<double> dlogits;
  double log_prob = 0.0;
  double entropy = 0.0;
};

// Gradient of -(log pi(a) * advantage) - entropy_coef * H(pi) w.r.t. logits.
inline LogitGradient policy_logit_gradient(std::span<const double> logits, std::size_t action, double advantage,
                                           double entropy_coef) {
  const auto p = softmax(logits);
  const auto logp = log_softmax(logits);
  LogitGradient out;
  out.dlogits.assign(p.size(), 0.0);
  out.log_prob = logp[action];
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (p[k] > 0.0) out.entropy -= p[k] * logp[k];
  }
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double indicator = k == action ? 1.0 : 0.0;
    const double plogp = p[k] > 0.0 ? p[k] * (logp[k] + out.entropy) : 0.0;
    out.dlogits[k] = -advantage * (indicator - p[k]) + entropy_coef * plogp;
  }
  return out;
}

// Backpropagates the REINFORCE loss of one trajectory into the roster's
// grads without stepping the optimizer.
inline LossDiagnostics accumulate_policy_gradient(AgentRoster& roster, const Trajectory& traj,
                                                  std::span<const double> advantages, double entropy_coef) {
  if (advantages.size() != traj.steps.size()) throw ArityError("advantages must have one entry per step");
  LossDiagnostics diag;
  const std::size_t n = roster.num_agents();
  std::vector<std::vector<double>> dlogits(n, std::vector<double>(kNumMoves, 0.0));
  for (std::size_t t = 0; t < traj.steps.size(); ++t) {
    const StepRecord& rec = traj.steps[t];
    if (!rec.cache) throw ContractError("trajectory step has no forward cache");
    bool any = false;
    for (std::size_t i = 0; i < n; ++i) {
      std::fill(dlogits[i].begin(), dlogits[i].end(), 0.0);
      if (!roster.learnable(i)) continue;
      const auto action = static_cast<std::size_t>(rec.sampled.actions[i]);
      auto g = policy_logit_gradient(rec.cache->logits[i], action, advantages[t], entropy_coef);
      diag.policy_loss -= g.log_prob * advantages[t];
      diag.entropy += g.entropy;
      dlogits[i] = std::move(g.dlogits);
      for (double v : dlogits[i]) any = any || v != 0.0;
    }
    if (any) joint_backward(roster, *rec.cache, dlogits);
    diag.mean_advantage += advantages[t];
  }
  if (!traj.steps.empty()) diag.mean_advantage /= static_cast<double>(traj.steps.size());
  diag.loss = diag.policy_loss - entropy_coef * diag.entropy;
  return diag;
}

inline LossDiagnostics reinforce_update(AgentRoster& roster, const Trajectory& traj, const TrainConfig& config,
                                        Baseline& baseline, Optimizer& optimizer, int epoch) {
  if (!roster.any_learnable()) return {};
  const auto b = baseline.values(traj.returns);
  std::vector<double> advantages(traj.returns.size());
  for (std::size_t t = 0; t < advantages.size(); ++t) advantages[t] = traj.returns[t] - b[t];

  LossDiagnostics diag = accumulate_policy_gradient(roster, traj, advantages, config.entropy_coef);
  if (!std::isfinite(diag.loss)) {
    roster.zero_grad();
    throw DivergenceError("epoch " + std::to_string(epoch) + ": loss is not finite");
  }
  auto params = roster.params();
  optimizer.step(params);
  roster.mark_updated();
  for (const ParamTensor* p : params) {
    if (!p->all_finite()) {
      throw DivergenceError("epoch " + std::to_string(epoch) + ": non-finite value in " + p->name);
    }
  }
  baseline.update(traj.returns);
  return diag;
}

struct MetricsRecord {
  int epoch = 0;
  double total_reward = 0.0;
  double smoothed_reward = 0.0;
  std::vector<double> per_uav_qos;
  double wall_ms = 0.0;
};

inline constexpr double kRewardExplosionLimit = 1e6;

struct TrainResult {
  AgentRoster roster;
  std::vector<MetricsRecord> metrics;
  Checkpoint checkpoint;
};

using CheckpointSink = std::function<void(int epoch, const Checkpoint&)>;

inline Checkpoint make_checkpoint(const AgentRoster& roster, int epochs_trained) {
  Checkpoint ckpt = roster.to_checkpoint();
  ckpt.meta["epochs_trained"] = std::to_string(epochs_trained);
  return ckpt;
}

inline std::uint64_t training_layout_index(const TrainConfig& config, int epoch) {
  const auto e = static_cast<std::uint64_t>(epoch);
  return config.layout_pool > 0 ? e % static_cast<std::uint64_t>(config.layout_pool) : e;
}

// One epoch is one episode. Deterministic given (env, config).
inline TrainResult train(const EnvConfig& env, const TrainConfig& config, const CheckpointSink& sink = {}) {
  env.validate();
  config.validate();
  AgentRoster roster(config.method, static_cast<std::size_t>(env.num_uavs), net_shape(env, config), config.seed);
  Optimizer optimizer(config.optimizer);
  Baseline baseline(config.baseline, config.baseline_decay);
  Rng rng({config.seed, 0xac710eULL});

  std::vector<MetricsRecord> metrics;
  metrics.reserve(static_cast<std::size_t>(config.epochs));
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    Trajectory traj = rollout(env, roster, config.mdp_mode, rng,
                              episode_seed(config.seed, training_layout_index(config, epoch)), config.gamma);

    MetricsRecord rec;
    rec.epoch = epoch;
    rec.per_uav_qos.assign(static_cast<std::size_t>(env.num_uavs), 0.0);
    for (const auto& s : traj.steps) {
      if (!std::isfinite(s.reward) || std::abs(s.reward) > kRewardExplosionLimit) {
        throw DivergenceError("epoch " + std::to_string(epoch) + ": reward out of range");
      }
      rec.total_reward += s.reward;
      for (std::size_t i = 0; i < rec.per_uav_qos.size(); ++i) rec.per_uav_qos[i] += s.per_uav_qos[i];
    }
    for (double& q : rec.per_uav_qos) q /= static_cast<double>(traj.steps.size());

    reinforce_update(roster, traj, config, baseline, optimizer, epoch);

    const int window = std::min(config.smoothing_window, epoch + 1);
    double sum = rec.total_reward;
    for (int k = 1; k < window; ++k) sum += metrics[static_cast<std::size_t>(epoch - k)].total_reward;
    rec.smoothed_reward = sum / window;
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    metrics.push_back(std::move(rec));

    if (sink && config.eval_every > 0 && (epoch + 1) % config.eval_every == 0 && epoch + 1 < config.epochs) {
      sink(epoch + 1, make_checkpoint(roster, epoch + 1));
    }
  }
  Checkpoint final_ckpt = make_checkpoint(roster, config.epochs);
  if (sink) sink(config.epochs, final_ckpt);
  return TrainResult{std::move(roster), std::move(metrics), std::move(final_ckpt)};
}

struct EvalStats {
  double mean_reward = 0.0;
  double std_reward = 0.0;
  std::vector<double> per_uav_mean_qos;
  std::vector<double> per_uav_std_qos;
};

// Greedy rollouts over `episodes` layouts derived from `seed`.
inline EvalStats evaluate(const Checkpoint& ckpt, const EnvConfig& env, MdpMode mode, int episodes,
                          std::uint64_t seed) {
  env.validate();
  if (episodes < 1) throw ConfigError("episodes", "must be >= 1");
  AgentRoster roster = AgentRoster::from_checkpoint(ckpt);
  if (roster.num_agents() != static_cast<std::size_t>(env.num_uavs)) {
    throw IncompatibleError("checkpoint has " + std::to_string(roster.num_agents()) + " agents, environment has " +
                            std::to_string(env.num_uavs) + " UAVs");
  }
  if (roster.shape().obs_dim != observation_dim(env)) {
    throw IncompatibleError("checkpoint expects observation dimension " + std::to_string(roster.shape().obs_dim) +
                            ", environment produces " + std::to_string(observation_dim(env)));
  }
  Rng rng({seed, 0xe7a1ULL});
  const auto n = static_cast<std::size_t>(env.num_uavs);
  std::vector<double> totals;
  std::vector<std::vector<double>> per_uav(n);
  for (int k = 0; k < episodes; ++k) {
    const Trajectory traj = rollout(env, roster, mode, rng, episode_seed(seed, static_cast<std::uint64_t>(k)), 1.0,
                                    ActionSelection::Greedy);
    double total = 0.0;
    std::vector<double> q(n, 0.0);
    for (const auto& s : traj.steps) {
      total += s.reward;
      for (std::size_t i = 0; i < n; ++i) q[i] += s.per_uav_qos[i];
    }
    totals.push_back(total);
    for (std::size_t i = 0; i < n; ++i) per_uav[i].push_back(q[i] / static_cast<double>(traj.steps.size()));
  }
  auto mean_std = [](const std::vector<double>& xs) {
    double sum = 0.0;
    for (double x : xs) sum += x;
    const double mean = sum / static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    return std::pair{mean, std::sqrt(var / static_cast<double>(xs.size()))};
  };
  EvalStats stats;
  std::tie(stats.mean_reward, stats.std_reward) = mean_std(totals);
  for (std::size_t i = 0; i < n; ++i) {
    auto [m, s] = mean_std(per_uav[i]);
    stats.per_uav_mean_qos.push_back(m);
    stats.per_uav_std_qos.push_back(s);
  }
  return stats;
}

}  // namespace uavmarl
