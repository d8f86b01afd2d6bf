#pragma once

// Run configuration files: UTF-8, one `key = value` per line, '#' starts a
// comment, blank lines ignored. Unknown keys are rejected. Every key is
// optional; see README.md for the key list and defaults.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "uavmarl/commnet.hpp"
#include "uavmarl/env.hpp"
#include "uavmarl/error.hpp"
#include "uavmarl/trainer.hpp"

namespace uavmarl {

struct RunSpec {
  EnvConfig env;
  TrainConfig train;
  std::string out_dir = "out";
  double threshold_rho = 0.9;
  int eval_episodes = 20;

  Method method() const { return train.method; }
  MdpMode mdp_mode() const { return train.mdp_mode; }
  std::uint64_t seed() const { return train.seed; }

  friend bool operator==(const RunSpec&, const RunSpec&) = default;

  void validate() const {
    env.validate();
    train.validate();
    if (!(threshold_rho > 0.0 && threshold_rho <= 1.0)) throw ConfigError("threshold_rho", "must lie in (0, 1]");
    if (eval_episodes < 1) throw ConfigError("eval_episodes", "must be >= 1");
  }
};

inline std::optional<MdpMode> parse_mdp_mode(std::string_view s) {
  if (s == "pomdp") return MdpMode::Pomdp;
  if (s == "fomdp") return MdpMode::Fomdp;
  return std::nullopt;
}

namespace detail {

inline std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

inline std::string format_exact(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  auto [end, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || end != value.data() + value.size()) {
    throw ConfigError(key, "expected a number, got '" + value + "'");
  }
  return out;
}

template <typename Enum>
Enum parse_choice(const std::string& key, const std::string& value,
                  std::initializer_list<std::pair<std::string_view, Enum>> choices) {
  std::string valid;
  for (const auto& [name, e] : choices) {
    if (name == value) return e;
    if (!valid.empty()) valid += ", ";
    valid += name;
  }
  throw ConfigError(key, "'" + value + "' is not one of {" + valid + "}");
}

struct KeyHandler {
  std::function<void(RunSpec&, const std::string&)> set;
  std::function<std::string(const RunSpec&)> get;
};

template <typename Field>
KeyHandler int_key(std::string key, Field field) {
  return {[key, field](RunSpec& s, const std::string& v) { field(s) = parse_number<std::remove_reference_t<decltype(field(s))>>(key, v); },
          [field](const RunSpec& s) { return std::to_string(field(const_cast<RunSpec&>(s))); }};
}

template <typename Field>
KeyHandler real_key(std::string key, Field field) {
  return {[key, field](RunSpec& s, const std::string& v) { field(s) = parse_number<double>(key, v); },
          [field](const RunSpec& s) { return format_exact(field(const_cast<RunSpec&>(s))); }};
}

// Ordered so the resolved snapshot reads naturally.
inline const std::vector<std::pair<std::string, KeyHandler>>& key_table() {
  static const std::vector<std::pair<std::string, KeyHandler>> table = [] {
    std::vector<std::pair<std::string, KeyHandler>> t;
    auto add = [&t](const std::string& k, KeyHandler h) { t.emplace_back(k, std::move(h)); };
    // environment
    add("width", int_key("width", [](RunSpec& s) -> int& { return s.env.width; }));
    add("height", int_key("height", [](RunSpec& s) -> int& { return s.env.height; }));
    add("num_uavs", int_key("num_uavs", [](RunSpec& s) -> int& { return s.env.num_uavs; }));
    add("num_users", int_key("num_users", [](RunSpec& s) -> int& { return s.env.num_users; }));
    add("coverage_radius", real_key("coverage_radius", [](RunSpec& s) -> double& { return s.env.coverage_radius; }));
    add("sensing_radius", real_key("sensing_radius", [](RunSpec& s) -> double& { return s.env.sensing_radius; }));
    add("uav_capacity", real_key("uav_capacity", [](RunSpec& s) -> double& { return s.env.uav_capacity; }));
    add("episode_length", int_key("episode_length", [](RunSpec& s) -> int& { return s.env.episode_length; }));
    add("user_layout_seed",
        int_key("user_layout_seed", [](RunSpec& s) -> std::int64_t& { return s.env.user_layout_seed; }));
    add("user_layout", {[](RunSpec& s, const std::string& v) {
                          s.env.user_layout = parse_choice<UserLayout>(
                              "user_layout", v,
                              {{"uniform_random", UserLayout::UniformRandom}, {"clustered", UserLayout::Clustered}});
                        },
                        [](const RunSpec& s) { return std::string(to_string(s.env.user_layout)); }});
    add("k_clusters", int_key("k_clusters", [](RunSpec& s) -> int& { return s.env.k_clusters; }));
    add("cluster_std", real_key("cluster_std", [](RunSpec& s) -> double& { return s.env.cluster_std; }));
    // training
    add("method", {[](RunSpec& s, const std::string& v) {
                     s.train.method = parse_choice<Method>("method", v,
                                                           {{"proposed", Method::Proposed},
                                                            {"random", Method::Random},
                                                            {"dnn", Method::Dnn},
                                                            {"commnet", Method::CommNet}});
                   },
                   [](const RunSpec& s) { return std::string(to_string(s.train.method)); }});
    add("mdp_mode", {[](RunSpec& s, const std::string& v) {
                       s.train.mdp_mode =
                           parse_choice<MdpMode>("mdp_mode", v, {{"pomdp", MdpMode::Pomdp}, {"fomdp", MdpMode::Fomdp}});
                     },
                     [](const RunSpec& s) { return std::string(to_string(s.train.mdp_mode)); }});
    add("seed", int_key("seed", [](RunSpec& s) -> std::uint64_t& { return s.train.seed; }));
    add("epochs", int_key("epochs", [](RunSpec& s) -> int& { return s.train.epochs; }));
    add("gamma", real_key("gamma", [](RunSpec& s) -> double& { return s.train.gamma; }));
    add("entropy_coef", real_key("entropy_coef", [](RunSpec& s) -> double& { return s.train.entropy_coef; }));
    add("baseline", {[](RunSpec& s, const std::string& v) {
                       s.train.baseline = parse_choice<BaselineKind>(
                           "baseline", v, {{"ema", BaselineKind::Ema}, {"batch_mean", BaselineKind::BatchMean}});
                     },
                     [](const RunSpec& s) { return std::string(to_string(s.train.baseline)); }});
    add("baseline_decay", real_key("baseline_decay", [](RunSpec& s) -> double& { return s.train.baseline_decay; }));
    add("optimizer", {[](RunSpec& s, const std::string& v) {
                        s.train.optimizer.kind = parse_choice<OptimizerKind>(
                            "optimizer", v, {{"adam", OptimizerKind::Adam}, {"sgd", OptimizerKind::Sgd}});
                      },
                      [](const RunSpec& s) { return std::string(to_string(s.train.optimizer.kind)); }});
    add("lr", real_key("lr", [](RunSpec& s) -> double& { return s.train.optimizer.lr; }));
    add("beta1", real_key("beta1", [](RunSpec& s) -> double& { return s.train.optimizer.beta1; }));
    add("beta2", real_key("beta2", [](RunSpec& s) -> double& { return s.train.optimizer.beta2; }));
    add("epsilon", real_key("epsilon", [](RunSpec& s) -> double& { return s.train.optimizer.epsilon; }));
    add("eval_every", int_key("eval_every", [](RunSpec& s) -> int& { return s.train.eval_every; }));
    add("hidden_width", int_key("hidden_width", [](RunSpec& s) -> std::size_t& { return s.train.hidden_width; }));
    add("hidden_layers", int_key("hidden_layers", [](RunSpec& s) -> std::size_t& { return s.train.hidden_layers; }));
    add("activation", {[](RunSpec& s, const std::string& v) {
                         s.train.activation = parse_choice<Activation>(
                             "activation", v,
                             {{"tanh", Activation::Tanh}, {"relu", Activation::ReLU}, {"identity", Activation::Identity}});
                       },
                       [](const RunSpec& s) { return std::string(to_string(s.train.activation)); }});
    add("mixing_mode", {[](RunSpec& s, const std::string& v) {
                          s.train.mixing_mode = parse_choice<MixingMode>(
                              "mixing_mode", v, {{"separate", MixingMode::Separate}, {"literal", MixingMode::Literal}});
                        },
                        [](const RunSpec& s) { return std::string(to_string(s.train.mixing_mode)); }});
    add("smoothing_window", int_key("smoothing_window", [](RunSpec& s) -> int& { return s.train.smoothing_window; }));
    add("layout_pool", int_key("layout_pool", [](RunSpec& s) -> int& { return s.train.layout_pool; }));
    // harness
    add("threshold_rho", real_key("threshold_rho", [](RunSpec& s) -> double& { return s.threshold_rho; }));
    add("eval_episodes", int_key("eval_episodes", [](RunSpec& s) -> int& { return s.eval_episodes; }));
    add("out", {[](RunSpec& s, const std::string& v) { s.out_dir = v; }, [](const RunSpec& s) { return s.out_dir; }});
    return t;
  }();
  return table;
}

}  // namespace detail

inline std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, h] : detail::key_table()) keys.push_back(k);
  return keys;
}

// Applies one `key = value` assignment; used by the parser and CLI overrides.
inline void set_config_value(RunSpec& spec, const std::string& key, const std::string& value) {
  for (const auto& [k, h] : detail::key_table()) {
    if (k == key) {
      h.set(spec, value);
      return;
    }
  }
  throw ConfigError(key, "unknown key");
}

inline RunSpec parse_config_text(std::string_view text, RunSpec spec = {}) {
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  std::map<std::string, int> seen;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const std::string content = detail::trim(line);
    if (content.empty()) continue;
    const std::string where = "line " + std::to_string(line_no);
    const auto eq = content.find('=');
    if (eq == std::string::npos) throw ConfigError("", where + ": expected 'key = value'");
    const std::string key = detail::trim(std::string_view(content).substr(0, eq));
    const std::string value = detail::trim(std::string_view(content).substr(eq + 1));
    if (key.empty()) throw ConfigError("", where + ": missing key");
    if (value.empty()) throw ConfigError(key, where + ": missing value");
    if (auto it = seen.find(key); it != seen.end()) {
      throw ConfigError(key, where + ": duplicate key (first set on line " + std::to_string(it->second) + ")");
    }
    seen[key] = line_no;
    try {
      set_config_value(spec, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(key, where + ": " + std::string(e.what()).substr(key.size() + 2));
    }
  }
  spec.validate();
  return spec;
}

inline RunSpec parse_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config", "cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

// Every key with its resolved value; parse_config_text of this reproduces spec.
inline std::string to_config_text(const RunSpec& spec) {
  std::string out = "# resolved configuration\n";
  for (const auto& [k, h] : detail::key_table()) out += k + " = " + h.get(spec) + "\n";
  return out;
}

}  // namespace uavmarl
