#pragma once

// Joint forward/backward over a roster of agents.
//
// Each learnable agent runs an encoder (obs -> H), L hidden layers (H -> H)
// and a linear head (H -> 5 logits). Mixing agents (CommNet leader/peers)
// additionally receive, at every hidden layer l >= 1, the mean of the other
// agents' hidden vectors from layer l-1:
//
//   separate: h_i[l] = act(W_l h_i[l-1] + C_l m_i[l-1] + b_l)
//   literal:  h_i[l] = act(W_l (h_i[l-1] + m_i[l-1]) + b_l)
//   m_i[l]   = (1 / (N-1)) * sum_{j != i} h_j[l]
//
// Literal mode is evaluated as W_l h + W_l m, i.e. separate mode with C_l
// tied to W_l, so the two modes agree bit-for-bit when C_l == W_l.
//
// Agents of one role share one PolicyNet, so their gradients accumulate
// into the same tensors.

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "uavmarl/checkpoint.hpp"
#include "uavmarl/env.hpp"
#include "uavmarl/error.hpp"
#include "uavmarl/nn.hpp"
#include "uavmarl/rng.hpp"

namespace uavmarl {

enum class Role { CommNetLeader, DnnFollower, CommNetPeer, RandomActor };
enum class Method { Proposed, Random, Dnn, CommNet };
enum class MixingMode { Separate, Literal };

inline constexpr std::array<Method, 4> kAllMethods = {Method::Proposed, Method::Random, Method::Dnn,
                                                      Method::CommNet};

inline std::string_view to_string(Role role) {
  switch (role) {
    case Role::CommNetLeader: return "leader";
    case Role::DnnFollower: return "follower";
    case Role::CommNetPeer: return "peer";
    case Role::RandomActor: return "random";
  }
  return "random";
}

inline std::string_view to_string(Method method) {
  switch (method) {
    case Method::Proposed: return "proposed";
    case Method::Random: return "random";
    case Method::Dnn: return "dnn";
    case Method::CommNet: return "commnet";
  }
  return "proposed";
}

inline std::string_view to_string(MixingMode mode) {
  return mode == MixingMode::Separate ? "separate" : "literal";
}

inline bool role_mixes(Role role) { return role == Role::CommNetLeader || role == Role::CommNetPeer; }

inline std::optional<Method> parse_method(std::string_view s) {
  for (Method m : kAllMethods)
    if (to_string(m) == s) return m;
  return std::nullopt;
}

inline std::optional<Role> parse_role(std::string_view s) {
  for (Role r : {Role::CommNetLeader, Role::DnnFollower, Role::CommNetPeer, Role::RandomActor})
    if (to_string(r) == s) return r;
  return std::nullopt;
}

struct NetShape {
  std::size_t obs_dim = 0;
  std::size_t hidden_width = 64;  // library default; the desk-scale experiment uses 32
  std::size_t hidden_layers = 6;
  Activation activation = Activation::Tanh;
  MixingMode mixing = MixingMode::Separate;
  friend bool operator==(const NetShape&, const NetShape&) = default;
};

class PolicyNet {
 public:
  PolicyNet(const std::string& prefix, const NetShape& shape, bool mixes, Rng& rng)
      : mixes_(mixes), mixing_(shape.mixing) {
    const std::size_t h = shape.hidden_width;
    encoder_ = make_dense(prefix + ".encoder", shape.obs_dim, h, shape.activation, rng);
    for (std::size_t l = 1; l <= shape.hidden_layers; ++l) {
      const std::string name = prefix + ".hidden" + std::to_string(l);
      hidden_.push_back(make_dense(name, h, h, shape.activation, rng));
      if (mixes_ && mixing_ == MixingMode::Separate) {
        ParamTensor c(prefix + ".comm" + std::to_string(l) + ".weight", h, h);
        glorot_init(c, rng);
        comm_.push_back(std::move(c));
      }
    }
    head_ = make_dense(prefix + ".head", h, kNumMoves, Activation::Identity, rng);
  }

  bool mixes() const { return mixes_; }
  MixingMode mixing() const { return mixing_; }
  std::size_t layers() const { return hidden_.size(); }

  DenseLayer& encoder() { return encoder_; }
  const DenseLayer& encoder() const { return encoder_; }
  DenseLayer& hidden(std::size_t l) { return hidden_[l - 1]; }
  const DenseLayer& hidden(std::size_t l) const { return hidden_[l - 1]; }
  DenseLayer& head() { return head_; }
  const DenseLayer& head() const { return head_; }

  // Communication transform for layer l (1-based). In literal mode this is W_l.
  ParamTensor& comm(std::size_t l) {
    return mixing_ == MixingMode::Literal ? hidden_[l - 1].weight : comm_[l - 1];
  }
  const ParamTensor& comm(std::size_t l) const {
    return mixing_ == MixingMode::Literal ? hidden_[l - 1].weight : comm_[l - 1];
  }

  std::vector<ParamTensor*> params() {
    std::vector<ParamTensor*> out{&encoder_.weight, &encoder_.bias};
    for (std::size_t l = 0; l < hidden_.size(); ++l) {
      out.push_back(&hidden_[l].weight);
      out.push_back(&hidden_[l].bias);
      if (!comm_.empty()) out.push_back(&comm_[l]);
    }
    out.push_back(&head_.weight);
    out.push_back(&head_.bias);
    return out;
  }

  std::vector<const ParamTensor*> params() const {
    std::vector<const ParamTensor*> out;
    for (ParamTensor* p : const_cast<PolicyNet*>(this)->params()) out.push_back(p);
    return out;
  }

 private:
  bool mixes_ = false;
  MixingMode mixing_ = MixingMode::Separate;
  DenseLayer encoder_;
  std::vector<DenseLayer> hidden_;
  std::vector<ParamTensor> comm_;
  DenseLayer head_;
};

inline std::vector<Role> roles_for(Method method, std::size_t num_agents) {
  std::vector<Role> roles(num_agents);
  switch (method) {
    case Method::Proposed:
      std::fill(roles.begin(), roles.end(), Role::DnnFollower);
      if (!roles.empty()) roles[0] = Role::CommNetLeader;
      break;
    case Method::Dnn: std::fill(roles.begin(), roles.end(), Role::DnnFollower); break;
    case Method::CommNet: std::fill(roles.begin(), roles.end(), Role::CommNetPeer); break;
    case Method::Random: std::fill(roles.begin(), roles.end(), Role::RandomActor); break;
  }
  return roles;
}

class AgentRoster {
 public:
  AgentRoster(Method method, std::size_t num_agents, const NetShape& shape, std::uint64_t seed)
      : method_(method), shape_(shape), roles_(roles_for(method, num_agents)) {
    if (num_agents == 0) throw ConfigError("num_uavs", "roster needs at least one agent");
    const bool any_mixing = std::any_of(roles_.begin(), roles_.end(), role_mixes);
    if (any_mixing && num_agents < 2) {
      throw ConfigError("num_uavs", "method " + std::string(to_string(method)) +
                                        " mixes over other agents and needs at least 2");
    }
    Rng rng({seed, 0x5eedULL});
    net_index_.assign(num_agents, -1);
    for (std::size_t i = 0; i < num_agents; ++i) {
      const Role role = roles_[i];
      if (role == Role::RandomActor) continue;
      auto it = std::find(net_roles_.begin(), net_roles_.end(), role);
      if (it == net_roles_.end()) {
        nets_.emplace_back(std::string(to_string(role)), shape_, role_mixes(role), rng);
        net_roles_.push_back(role);
        it = net_roles_.end() - 1;
      }
      net_index_[i] = static_cast<int>(it - net_roles_.begin());
    }
  }

  Method method() const { return method_; }
  const NetShape& shape() const { return shape_; }
  std::size_t num_agents() const { return roles_.size(); }
  Role role(std::size_t i) const { return roles_[i]; }
  const std::vector<Role>& roles() const { return roles_; }
  bool learnable(std::size_t i) const { return net_index_[i] >= 0; }
  bool any_learnable() const { return !nets_.empty(); }

  PolicyNet& net_for(std::size_t i) { return nets_[static_cast<std::size_t>(net_index_[i])]; }
  const PolicyNet& net_for(std::size_t i) const { return nets_[static_cast<std::size_t>(net_index_[i])]; }
  std::vector<PolicyNet>& nets() { return nets_; }
  const std::vector<PolicyNet>& nets() const { return nets_; }
  const std::vector<Role>& net_roles() const { return net_roles_; }

  std::vector<ParamTensor*> params() {
    std::vector<ParamTensor*> out;
    for (auto& net : nets_)
      for (ParamTensor* p : net.params()) out.push_back(p);
    return out;
  }

  void zero_grad() {
    for (ParamTensor* p : params()) p->zero_grad();
  }

  // Version stamp; bumped whenever parameters change so stale caches are detected.
  std::uint64_t version() const { return version_; }
  void mark_updated() { ++version_; }

  Checkpoint to_checkpoint() const {
    Checkpoint ckpt;
    ckpt.meta["method"] = std::string(to_string(method_));
    std::string roles;
    for (std::size_t i = 0; i < roles_.size(); ++i) {
      if (i) roles += ',';
      roles += to_string(roles_[i]);
    }
    ckpt.meta["roles"] = roles;
    ckpt.meta["num_agents"] = std::to_string(roles_.size());
    ckpt.meta["obs_dim"] = std::to_string(shape_.obs_dim);
    ckpt.meta["hidden_width"] = std::to_string(shape_.hidden_width);
    ckpt.meta["hidden_layers"] = std::to_string(shape_.hidden_layers);
    ckpt.meta["activation"] = std::string(to_string(shape_.activation));
    ckpt.meta["mixing_mode"] = std::string(to_string(shape_.mixing));
    for (const auto& net : nets_)
      for (const ParamTensor* p : net.params()) {
        ParamTensor copy(p->name, p->rows, p->cols);
        copy.values = p->values;
        ckpt.tensors.push_back(std::move(copy));
      }
    return ckpt;
  }

  static AgentRoster from_checkpoint(const Checkpoint& ckpt) {
    const auto method = parse_method(ckpt.require("method"));
    if (!method) throw IncompatibleError("checkpoint: unknown method " + ckpt.require("method"));
    NetShape shape;
    try {
      shape.obs_dim = std::stoul(ckpt.require("obs_dim"));
      shape.hidden_width = std::stoul(ckpt.require("hidden_width"));
      shape.hidden_layers = std::stoul(ckpt.require("hidden_layers"));
    } catch (const std::logic_error&) {
      throw IncompatibleError("checkpoint: malformed shape metadata");
    }
    const std::string& act = ckpt.require("activation");
    if (act == "tanh") shape.activation = Activation::Tanh;
    else if (act == "relu") shape.activation = Activation::ReLU;
    else if (act == "identity") shape.activation = Activation::Identity;
    else throw IncompatibleError("checkpoint: unknown activation " + act);
    const std::string& mixing = ckpt.require("mixing_mode");
    if (mixing == "separate") shape.mixing = MixingMode::Separate;
    else if (mixing == "literal") shape.mixing = MixingMode::Literal;
    else throw IncompatibleError("checkpoint: unknown mixing_mode " + mixing);
    std::size_t n = 0;
    try {
      n = std::stoul(ckpt.require("num_agents"));
    } catch (const std::logic_error&) {
      throw IncompatibleError("checkpoint: malformed num_agents");
    }

    AgentRoster roster(*method, n, shape, 0);
    std::string expected_roles;
    for (std::size_t i = 0; i < n; ++i) {
      if (i) expected_roles += ',';
      expected_roles += to_string(roster.roles_[i]);
    }
    if (expected_roles != ckpt.require("roles")) {
      throw IncompatibleError("checkpoint: roster layout '" + ckpt.require("roles") +
                              "' does not match method " + std::string(to_string(*method)));
    }
    std::size_t used = 0;
    for (ParamTensor* p : roster.params()) {
      const ParamTensor* src = ckpt.find(p->name);
      if (!src) throw IncompatibleError("checkpoint: missing tensor " + p->name);
      if (src->rows != p->rows || src->cols != p->cols) {
        throw IncompatibleError("checkpoint: tensor " + p->name + " has shape " + std::to_string(src->rows) +
                                "x" + std::to_string(src->cols) + ", expected " + std::to_string(p->rows) +
                                "x" + std::to_string(p->cols));
      }
      p->values = src->values;
      ++used;
    }
    if (used != ckpt.tensors.size()) throw IncompatibleError("checkpoint: unexpected extra tensors");
    return roster;
  }

 private:
  Method method_;
  NetShape shape_;
  std::vector<Role> roles_;
  std::vector<int> net_index_;
  std::vector<PolicyNet> nets_;
  std::vector<Role> net_roles_;
  std::uint64_t version_ = 0;
};

// Activation record of one joint forward pass. hidden[i] holds h_i[0..L]
// back to back (width H each); message[i] holds m_i[0..L-1] for mixing agents.
struct JointCache {
  std::uint64_t version = 0;
  std::size_t num_agents = 0;
  std::size_t width = 0;
  std::size_t layers = 0;
  std::vector<std::vector<double>> obs;
  std::vector<std::vector<double>> hidden;
  std::vector<std::vector<double>> message;
  std::vector<std::vector<double>> logits;

  std::span<const double> h(std::size_t agent, std::size_t layer) const {
    return std::span<const double>(hidden[agent]).subspan(layer * width, width);
  }
  std::span<const double> m(std::size_t agent, std::size_t layer) const {
    return std::span<const double>(message[agent]).subspan(layer * width, width);
  }
};

// (1 / (N-1)) * sum_{j != i} vectors[j], summed in ascending j.
inline void mean_of_others(std::span<const std::span<const double>> vectors, std::size_t i,
                           std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t j = 0; j < vectors.size(); ++j) {
    if (j == i) continue;
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += vectors[j][k];
  }
  const double denom = static_cast<double>(vectors.size() - 1);
  for (double& v : out) v /= denom;
}

inline JointCache joint_forward(const AgentRoster& roster, const ObservationSet& obs) {
  const std::size_t n = roster.num_agents();
  const NetShape& shape = roster.shape();
  const std::size_t width = shape.hidden_width;
  const std::size_t layers = shape.hidden_layers;
  if (obs.per_agent.size() != n) {
    throw ArityError("joint_forward: " + std::to_string(obs.per_agent.size()) + " observations for " +
                     std::to_string(n) + " agents");
  }

  JointCache cache;
  cache.version = roster.version();
  cache.num_agents = n;
  cache.width = width;
  cache.layers = layers;
  cache.obs = obs.per_agent;
  cache.hidden.resize(n);
  cache.message.resize(n);
  cache.logits.assign(n, std::vector<double>(kNumMoves, 0.0));

  for (std::size_t i = 0; i < n; ++i) {
    if (!roster.learnable(i)) continue;
    if (obs.per_agent[i].size() != shape.obs_dim) {
      throw ArityError("joint_forward: agent " + std::to_string(i) + " observation has " +
                       std::to_string(obs.per_agent[i].size()) + " features, network expects " +
                       std::to_string(shape.obs_dim));
    }
    const PolicyNet& net = roster.net_for(i);
    cache.hidden[i].assign((layers + 1) * width, 0.0);
    if (net.mixes()) cache.message[i].assign(layers * width, 0.0);
    std::span<double> h0(cache.hidden[i].data(), width);
    std::copy(net.encoder().bias.values.begin(), net.encoder().bias.values.end(), h0.begin());
    kernel::matvec_acc(net.encoder().weight, obs.per_agent[i], h0);
    kernel::activate(shape.activation, h0);
  }

  std::vector<std::span<const double>> layer_views(n);
  for (std::size_t l = 1; l <= layers; ++l) {
    // Every h[l-1] is complete here; messages read nothing from layer l.
    for (std::size_t j = 0; j < n; ++j) {
      if (roster.learnable(j)) layer_views[j] = cache.h(j, l - 1);
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (!roster.learnable(i) || !roster.net_for(i).mixes()) continue;
      mean_of_others(layer_views, i, std::span<double>(cache.message[i]).subspan((l - 1) * width, width));
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (!roster.learnable(i)) continue;
      const PolicyNet& net = roster.net_for(i);
      const DenseLayer& layer = net.hidden(l);
      std::span<double> out(cache.hidden[i].data() + l * width, width);
      std::copy(layer.bias.values.begin(), layer.bias.values.end(), out.begin());
      kernel::matvec_acc(layer.weight, cache.h(i, l - 1), out);
      if (net.mixes()) kernel::matvec_acc(net.comm(l), cache.m(i, l - 1), out);
      kernel::activate(shape.activation, out);
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    if (!roster.learnable(i)) continue;  // random actors emit uniform (zero) logits
    const DenseLayer& head = roster.net_for(i).head();
    std::copy(head.bias.values.begin(), head.bias.values.end(), cache.logits[i].begin());
    kernel::matvec_acc(head.weight, cache.h(i, layers), cache.logits[i]);
  }
  return cache;
}

// Accumulates parameter gradients for the loss whose gradient w.r.t. each
// agent's logits is dlogits[i]. Returns dL/d(obs_i) per agent (empty for
// random actors).
inline std::vector<std::vector<double>> joint_backward(AgentRoster& roster, const JointCache& cache,
                                                       const std::vector<std::vector<double>>& dlogits) {
  const std::size_t n = roster.num_agents();
  const NetShape& shape = roster.shape();
  const std::size_t width = shape.hidden_width;
  const std::size_t layers = shape.hidden_layers;
  if (cache.version != roster.version() || cache.num_agents != n || cache.width != width ||
      cache.layers != layers) {
    throw ContractError("joint_backward: cache does not come from the current roster parameters");
  }
  if (dlogits.size() != n) throw ArityError("joint_backward: wrong number of logit cotangents");

  std::vector<std::vector<double>> dh(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!roster.learnable(i)) continue;
    if (dlogits[i].size() != kNumMoves) throw ArityError("joint_backward: logit cotangent must have 5 entries");
    dh[i].assign((layers + 1) * width, 0.0);
    DenseLayer& head = roster.net_for(i).head();
    kernel::outer_acc(head.weight, dlogits[i], cache.h(i, layers));
    for (std::size_t r = 0; r < kNumMoves; ++r) head.bias.grad[r] += dlogits[i][r];
    kernel::matvec_t_acc(head.weight, dlogits[i], std::span<double>(dh[i]).subspan(layers * width, width));
  }

  std::vector<double> da(width);
  std::vector<double> dm(width);
  for (std::size_t l = layers; l >= 1; --l) {
    for (std::size_t i = 0; i < n; ++i) {
      if (!roster.learnable(i)) continue;
      PolicyNet& net = roster.net_for(i);
      DenseLayer& layer = net.hidden(l);
      std::copy_n(dh[i].begin() + static_cast<std::ptrdiff_t>(l * width), width, da.begin());
      kernel::activation_backward(shape.activation, cache.h(i, l), da);
      kernel::outer_acc(layer.weight, da, cache.h(i, l - 1));
      for (std::size_t r = 0; r < width; ++r) layer.bias.grad[r] += da[r];
      kernel::matvec_t_acc(layer.weight, da, std::span<double>(dh[i]).subspan((l - 1) * width, width));
      if (!net.mixes()) continue;
      ParamTensor& comm = net.comm(l);
      kernel::outer_acc(comm, da, cache.m(i, l - 1));
      std::fill(dm.begin(), dm.end(), 0.0);
      kernel::matvec_t_acc(comm, da, dm);
      const double denom = static_cast<double>(n - 1);
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i || !roster.learnable(j)) continue;
        double* target = dh[j].data() + (l - 1) * width;
        for (std::size_t k = 0; k < width; ++k) target[k] += dm[k] / denom;
      }
    }
  }

  std::vector<std::vector<double>> dobs(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!roster.learnable(i)) continue;
    DenseLayer& enc = roster.net_for(i).encoder();
    std::copy_n(dh[i].begin(), width, da.begin());
    kernel::activation_backward(shape.activation, cache.h(i, 0), da);
    kernel::outer_acc(enc.weight, da, cache.obs[i]);
    for (std::size_t r = 0; r < width; ++r) enc.bias.grad[r] += da[r];
    dobs[i].assign(shape.obs_dim, 0.0);
    kernel::matvec_t_acc(enc.weight, da, dobs[i]);
  }
  return dobs;
}

struct SampledActions {
  std::vector<Move> actions;
  std::vector<double> log_probs;
};

// One categorical draw per agent from softmax(logits).
inline SampledActions sample_actions(const std::vector<std::vector<double>>& logits, Rng& rng) {
  SampledActions out;
  out.actions.reserve(logits.size());
  out.log_probs.reserve(logits.size());
  for (const auto& z : logits) {
    const auto p = softmax(z);
    const double u = rng.uniform01();
    std::size_t a = 0;
    double cum = p[0];
    while (a + 1 < p.size() && u >= cum) cum += p[++a];
    // u can exceed the rounded total; fall back to the last non-zero action.
    while (p[a] == 0.0 && a > 0) --a;
    out.actions.push_back(static_cast<Move>(a));
    out.log_probs.push_back(log_softmax(z)[a]);
  }
  return out;
}

// Argmax per agent, lowest index on ties.
inline SampledActions greedy_actions(const std::vector<std::vector<double>>& logits) {
  SampledActions out;
  for (const auto& z : logits) {
    const auto a = static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
    out.actions.push_back(static_cast<Move>(a));
    out.log_probs.push_back(log_softmax(z)[a]);
  }
  return out;
}

}  // namespace uavmarl
