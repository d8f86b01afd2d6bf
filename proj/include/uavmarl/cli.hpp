#pragma once

// Command-line front end: train, evaluate, compare, plot-data.
//
// Exit codes: 0 success, 1 configuration or usage error, 2 training
// divergence, 3 any other runtime failure (I/O, incompatible checkpoint,
// failed comparison cell).

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "uavmarl/config.hpp"
#include "uavmarl/harness.hpp"
#include "uavmarl/trainer.hpp"

namespace uavmarl::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitDivergence = 2;
inline constexpr int kExitRuntime = 3;

inline std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  if (const auto dots = text.find(".."); dots != std::string::npos) {
    const auto lo = detail::parse_number<std::uint64_t>("seeds", detail::trim(text.substr(0, dots)));
    const auto hi = detail::parse_number<std::uint64_t>("seeds", detail::trim(text.substr(dots + 2)));
    if (hi < lo) throw ConfigError("seeds", "empty range '" + text + "'");
    for (std::uint64_t s = lo; s <= hi; ++s) seeds.push_back(s);
    return seeds;
  }
  for (const auto& part : split(text, ',')) seeds.push_back(detail::parse_number<std::uint64_t>("seeds", detail::trim(part)));
  return seeds;
}

inline std::vector<Method> parse_method_list(const std::string& text) {
  if (text == "all") return {kAllMethods.begin(), kAllMethods.end()};
  std::vector<Method> out;
  for (const auto& part : split(text, ',')) {
    const auto m = parse_method(detail::trim(part));
    if (!m) throw ConfigError("methods", "'" + part + "' is not one of {proposed, random, dnn, commnet}");
    out.push_back(*m);
  }
  return out;
}

inline std::vector<MdpMode> parse_mode_list(const std::string& text) {
  std::vector<MdpMode> out;
  for (const auto& part : split(text, ',')) {
    const auto m = parse_mdp_mode(detail::trim(part));
    if (!m) throw ConfigError("modes", "'" + part + "' is not one of {pomdp, fomdp}");
    out.push_back(*m);
  }
  return out;
}

struct CommonOverrides {
  std::optional<std::string> method;
  std::optional<std::string> mdp_mode;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
  std::vector<std::string> assignments;

  void apply(RunSpec& spec) const {
    if (method) set_config_value(spec, "method", *method);
    if (mdp_mode) set_config_value(spec, "mdp_mode", *mdp_mode);
    if (seed) spec.train.seed = *seed;
    if (epochs) spec.train.epochs = *epochs;
    for (const auto& a : assignments) {
      const auto eq = a.find('=');
      if (eq == std::string::npos) throw ConfigError("set", "expected key=value, got '" + a + "'");
      set_config_value(spec, detail::trim(a.substr(0, eq)), detail::trim(a.substr(eq + 1)));
    }
    spec.validate();
  }
};

template <typename Fn>
int guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DivergenceError& e) {
    std::cerr << "training diverged: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout) {
  CLI::App app{"UAV swarm CTDE/CommNet training workbench", "uavmarl"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  bool force = false;
  CommonOverrides overrides;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--method", overrides.method, "proposed | random | dnn | commnet");
    sub->add_option("--mdp-mode", overrides.mdp_mode, "pomdp | fomdp");
    sub->add_option("--seed", overrides.seed, "Run seed");
    sub->add_option("--epochs", overrides.epochs, "Override the number of epochs");
    sub->add_option("--set", overrides.assignments, "Extra key=value config overrides");
  };

  auto* train_cmd = app.add_subcommand("train", "Train one run");
  train_cmd->add_option("--config", config_path, "Config file")->required();
  train_cmd->add_option("--out", out_dir, "Output directory");
  train_cmd->add_flag("--force", force, "Overwrite a non-empty output directory");
  add_common(train_cmd);

  std::string checkpoint_path;
  int episodes = 0;
  auto* eval_cmd = app.add_subcommand("evaluate", "Greedy evaluation of a checkpoint");
  eval_cmd->add_option("--checkpoint", checkpoint_path, "Checkpoint file")->required();
  eval_cmd->add_option("--config", config_path, "Config file")->required();
  eval_cmd->add_option("--episodes", episodes, "Evaluation episodes (default: eval_episodes)");
  add_common(eval_cmd);

  std::string methods_arg = "all";
  std::string modes_arg = "pomdp,fomdp";
  std::string seeds_arg = "0..4";
  unsigned jobs = std::max(1u, std::thread::hardware_concurrency());
  auto* compare_cmd = app.add_subcommand("compare", "Run the method x mode x seed grid");
  compare_cmd->add_option("--config", config_path, "Config file")->required();
  compare_cmd->add_option("--methods", methods_arg, "all or comma list");
  compare_cmd->add_option("--modes", modes_arg, "Comma list of pomdp, fomdp");
  compare_cmd->add_option("--seeds", seeds_arg, "Range a..b or comma list");
  compare_cmd->add_option("--out", out_dir, "Output directory");
  compare_cmd->add_option("--jobs", jobs, "Concurrent cells");
  compare_cmd->add_flag("--force", force, "Overwrite a non-empty output directory");
  compare_cmd->add_option("--epochs", overrides.epochs, "Override the number of epochs");
  compare_cmd->add_option("--set", overrides.assignments, "Extra key=value config overrides");

  std::vector<std::string> run_dirs;
  auto* plot_cmd = app.add_subcommand("plot-data", "Write figure CSVs from completed runs");
  plot_cmd->add_option("runs", run_dirs, "Run directories, or a compare output directory")->required();
  plot_cmd->add_option("--out", out_dir, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  if (train_cmd->parsed()) {
    return guarded([&] {
      RunSpec spec = parse_config(config_path);
      overrides.apply(spec);
      if (!out_dir.empty()) spec.out_dir = out_dir;
      prepare_output_dir(spec.out_dir, force);
      const TrainResult result = execute_run(spec, spec.out_dir);
      const auto& last = result.metrics.back();
      out << "trained " << to_string(spec.method()) << " (" << to_string(spec.mdp_mode()) << ", seed "
          << spec.seed() << ") for " << result.metrics.size() << " epochs; final smoothed reward "
          << format_float(last.smoothed_reward) << "\n";
      return kExitOk;
    });
  }

  if (eval_cmd->parsed()) {
    return guarded([&] {
      RunSpec spec = parse_config(config_path);
      overrides.apply(spec);
      const Checkpoint ckpt = load_checkpoint(checkpoint_path);
      const EvalStats stats = evaluate(ckpt, spec.env, spec.mdp_mode(), episodes > 0 ? episodes : spec.eval_episodes,
                                       spec.seed());
      out << "mean_reward," << format_float(stats.mean_reward) << "\n";
      out << "std_reward," << format_float(stats.std_reward) << "\n";
      for (std::size_t i = 0; i < stats.per_uav_mean_qos.size(); ++i) {
        out << "uav_" << i << "_qos," << format_float(stats.per_uav_mean_qos[i]) << "\n";
      }
      return kExitOk;
    });
  }

  if (compare_cmd->parsed()) {
    return guarded([&] {
      GridRequest request;
      request.base = parse_config(config_path);
      overrides.apply(request.base);
      request.methods = parse_method_list(methods_arg);
      request.modes = parse_mode_list(modes_arg);
      request.seeds = parse_seed_list(seeds_arg);
      request.out_dir = out_dir.empty() ? fs::path(request.base.out_dir) : fs::path(out_dir);
      request.jobs = jobs;
      prepare_output_dir(request.out_dir, force);
      const GridOutcome outcome = run_grid(request);
      for (const auto& c : outcome.cells) {
        if (!c.ok) std::cerr << "cell " << run_name(c.method, c.mode, c.seed) << " failed: " << c.message << "\n";
      }
      if (!outcome.all_ok()) return outcome.any_diverged() ? kExitDivergence : kExitRuntime;
      out << "compared " << outcome.cells.size() << " runs into " << request.out_dir.string() << "\n";
      return kExitOk;
    });
  }

  if (plot_cmd->parsed()) {
    return guarded([&] {
      std::vector<fs::path> dirs;
      for (const auto& d : run_dirs) {
        const fs::path p(d);
        if (fs::is_directory(p / "runs")) {
          std::vector<fs::path> found;
          for (const auto& entry : fs::directory_iterator(p / "runs"))
            if (entry.is_directory()) found.push_back(entry.path());
          std::sort(found.begin(), found.end());
          dirs.insert(dirs.end(), found.begin(), found.end());
        } else {
          dirs.push_back(p);
        }
      }
      for (const auto& name : emit_plot_data(dirs, out_dir)) out << "wrote " << (fs::path(out_dir) / name).string() << "\n";
      return kExitOk;
    });
  }
  return kExitConfig;
}

}  // namespace uavmarl::cli
