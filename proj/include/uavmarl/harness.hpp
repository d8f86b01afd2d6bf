#pragma once

// Run directories, metrics CSVs, the method x mode x seed comparison grid,
// and the plot-ready figure tables.
//
// Every CSV renders floats with 9 significant digits via std::to_chars
// ('.' decimal separator regardless of locale) and ends lines with '\n'.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "uavmarl/checkpoint.hpp"
#include "uavmarl/config.hpp"
#include "uavmarl/error.hpp"
#include "uavmarl/trainer.hpp"

namespace uavmarl {

namespace fs = std::filesystem;

inline std::string format_float(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 9);
  return std::string(buf, end);
}

inline void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed for " + path.string());
}

inline std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("missing file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline std::string uav_header(std::size_t num_uavs) {
  std::string h;
  for (std::size_t i = 0; i < num_uavs; ++i) h += ",uav_" + std::to_string(i);
  return h;
}

// metrics.csv: epoch,total_reward,smoothed_reward,uav_0..uav_{N-1}
// (wall-clock time goes to timing.csv so metrics stay reproducible).
inline std::string metrics_csv(const std::vector<MetricsRecord>& records, std::size_t num_uavs) {
  std::string out = "epoch,total_reward,smoothed_reward" + uav_header(num_uavs) + "\n";
  for (const auto& r : records) {
    out += std::to_string(r.epoch) + "," + format_float(r.total_reward) + "," + format_float(r.smoothed_reward);
    for (double q : r.per_uav_qos) out += "," + format_float(q);
    out += "\n";
  }
  return out;
}

inline std::string timing_csv(const std::vector<MetricsRecord>& records) {
  std::string out = "epoch,wall_ms\n";
  for (const auto& r : records) out += std::to_string(r.epoch) + "," + format_float(r.wall_ms) + "\n";
  return out;
}

inline double parse_csv_double(const std::string& s, const fs::path& path) {
  double v = 0.0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) throw Error("malformed number '" + s + "' in " + path.string());
  return v;
}

inline std::vector<MetricsRecord> read_metrics_csv(const fs::path& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  if (!std::getline(in, line)) throw Error("empty metrics file " + path.string());
  const auto header = split(line, ',');
  if (header.size() < 3 || header[0] != "epoch" || header[1] != "total_reward" || header[2] != "smoothed_reward") {
    throw Error("unexpected metrics header in " + path.string());
  }
  std::vector<MetricsRecord> records;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cols = split(line, ',');
    if (cols.size() != header.size()) throw Error("ragged row in " + path.string());
    MetricsRecord r;
    r.epoch = static_cast<int>(parse_csv_double(cols[0], path));
    r.total_reward = parse_csv_double(cols[1], path);
    r.smoothed_reward = parse_csv_double(cols[2], path);
    for (std::size_t k = 3; k < cols.size(); ++k) r.per_uav_qos.push_back(parse_csv_double(cols[k], path));
    records.push_back(std::move(r));
  }
  return records;
}

inline std::string run_name(Method method, MdpMode mode, std::uint64_t seed) {
  return std::string(to_string(method)) + "_" + std::string(to_string(mode)) + "_seed" + std::to_string(seed);
}

inline bool directory_has_entries(const fs::path& dir) {
  return fs::exists(dir) && fs::is_directory(dir) && fs::directory_iterator(dir) != fs::directory_iterator();
}

inline void prepare_output_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir) && !fs::is_directory(dir)) throw Error(dir.string() + " exists and is not a directory");
  if (directory_has_entries(dir)) {
    if (!force) throw ConfigError("out", "output directory " + dir.string() + " is not empty (use --force)");
    fs::remove_all(dir);
  }
  fs::create_directories(dir);
}

// Trains one run and writes config.txt, metrics.csv, timing.csv,
// checkpoint.txt (plus checkpoint_epoch<k>.txt when eval_every > 0).
inline TrainResult execute_run(const RunSpec& spec, const fs::path& dir) {
  spec.validate();
  fs::create_directories(dir);
  auto resolved = spec;
  resolved.out_dir = dir.string();
  write_text_file(dir / "config.txt", to_config_text(resolved));
  const int final_epoch = spec.train.epochs;
  TrainResult result = train(spec.env, spec.train, [&](int epoch, const Checkpoint& ckpt) {
    const auto name = epoch == final_epoch ? std::string("checkpoint.txt")
                                           : "checkpoint_epoch" + std::to_string(epoch) + ".txt";
    save_checkpoint((dir / name).string(), ckpt);
  });
  write_text_file(dir / "metrics.csv", metrics_csv(result.metrics, static_cast<std::size_t>(spec.env.num_uavs)));
  write_text_file(dir / "timing.csv", timing_csv(result.metrics));
  return result;
}

struct RunSummary {
  Method method = Method::Proposed;
  MdpMode mode = MdpMode::Pomdp;
  std::uint64_t seed = 0;
  std::vector<MetricsRecord> metrics;
};

struct ComparisonRow {
  Method method = Method::Proposed;
  MdpMode mode = MdpMode::Pomdp;
  std::uint64_t seed = 0;
  double final_smoothed_reward = 0.0;
  std::optional<int> epochs_to_threshold;  // empty: never reached
  std::vector<double> uav_qos_mean;
  double uav_qos_dispersion = 0.0;
};

inline double population_std(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  double sum = 0.0;
  for (double x : xs) sum += x;
  const double mean = sum / static_cast<double>(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  return std::sqrt(var / static_cast<double>(xs.size()));
}

// Within each (mode, seed) group the threshold is rho times the best final
// smoothed reward of any method; epochs_to_threshold is the first epoch whose
// smoothed reward reaches it. Per-UAV QoS is averaged over the last
// `window` epochs.
inline std::vector<ComparisonRow> build_comparison(const std::vector<RunSummary>& runs, double rho, int window) {
  std::map<std::pair<MdpMode, std::uint64_t>, double> best;
  for (const auto& r : runs) {
    if (r.metrics.empty()) throw Error("run " + run_name(r.method, r.mode, r.seed) + " has no metrics");
    const double final_reward = r.metrics.back().smoothed_reward;
    auto key = std::pair{r.mode, r.seed};
    auto it = best.find(key);
    if (it == best.end() || final_reward > it->second) best[key] = final_reward;
  }
  std::vector<ComparisonRow> rows;
  for (const auto& r : runs) {
    ComparisonRow row;
    row.method = r.method;
    row.mode = r.mode;
    row.seed = r.seed;
    row.final_smoothed_reward = r.metrics.back().smoothed_reward;
    const double threshold = rho * best.at({r.mode, r.seed});
    for (const auto& m : r.metrics) {
      if (m.smoothed_reward >= threshold) {
        row.epochs_to_threshold = m.epoch;
        break;
      }
    }
    const std::size_t n = r.metrics.back().per_uav_qos.size();
    row.uav_qos_mean.assign(n, 0.0);
    const std::size_t count = std::min<std::size_t>(static_cast<std::size_t>(window), r.metrics.size());
    for (std::size_t k = r.metrics.size() - count; k < r.metrics.size(); ++k) {
      for (std::size_t i = 0; i < n; ++i) row.uav_qos_mean[i] += r.metrics[k].per_uav_qos[i];
    }
    for (double& q : row.uav_qos_mean) q /= static_cast<double>(count);
    row.uav_qos_dispersion = population_std(row.uav_qos_mean);
    rows.push_back(std::move(row));
  }
  return rows;
}

// epochs_to_threshold is -1 when the threshold is never reached.
inline std::string comparison_csv(const std::vector<ComparisonRow>& rows) {
  const std::size_t n = rows.empty() ? 0 : rows.front().uav_qos_mean.size();
  std::string out = "method,mdp_mode,seed,final_smoothed_reward,epochs_to_threshold";
  for (std::size_t i = 0; i < n; ++i) out += ",uav_" + std::to_string(i) + "_qos";
  out += ",qos_dispersion\n";
  for (const auto& r : rows) {
    out += std::string(to_string(r.method)) + "," + std::string(to_string(r.mode)) + "," + std::to_string(r.seed) +
           "," + format_float(r.final_smoothed_reward) + "," +
           std::to_string(r.epochs_to_threshold ? *r.epochs_to_threshold : -1);
    for (double q : r.uav_qos_mean) out += "," + format_float(q);
    out += "," + format_float(r.uav_qos_dispersion) + "\n";
  }
  return out;
}

inline RunSummary load_run(const fs::path& dir) {
  if (!fs::exists(dir / "metrics.csv")) throw Error("missing metrics file " + (dir / "metrics.csv").string());
  const RunSpec spec = parse_config((dir / "config.txt").string());
  return RunSummary{spec.method(), spec.mdp_mode(), spec.seed(), read_metrics_csv(dir / "metrics.csv")};
}

struct PlotData {
  std::map<std::string, std::string> files;  // file name -> contents
};

// fig2_<mode>.csv: epoch plus one smoothed-reward column per method, averaged
// over seeds. fig3_<method>.csv: epoch plus per-UAV serving QoS, averaged
// over seeds, taken from the POMDP runs when present (else the first mode).
inline PlotData plot_data(const std::vector<RunSummary>& runs) {
  std::vector<Method> methods;
  std::vector<MdpMode> modes;
  for (const auto& r : runs) {
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) methods.push_back(r.method);
    if (std::find(modes.begin(), modes.end(), r.mode) == modes.end()) modes.push_back(r.mode);
  }
  std::sort(methods.begin(), methods.end());
  std::sort(modes.begin(), modes.end());

  auto group = [&](Method m, MdpMode mode) {
    std::vector<const RunSummary*> out;
    for (const auto& r : runs)
      if (r.method == m && r.mode == mode) out.push_back(&r);
    std::sort(out.begin(), out.end(), [](auto* a, auto* b) { return a->seed < b->seed; });
    return out;
  };
  auto epochs_of = [](const std::vector<const RunSummary*>& g) {
    std::size_t e = std::numeric_limits<std::size_t>::max();
    for (auto* r : g) e = std::min(e, r->metrics.size());
    return g.empty() ? std::size_t{0} : e;
  };

  PlotData data;
  for (MdpMode mode : modes) {
    std::vector<std::vector<const RunSummary*>> groups;
    std::size_t epochs = std::numeric_limits<std::size_t>::max();
    std::string text = "epoch";
    for (Method m : methods) {
      groups.push_back(group(m, mode));
      if (!groups.back().empty()) epochs = std::min(epochs, epochs_of(groups.back()));
      text += "," + std::string(to_string(m));
    }
    text += "\n";
    if (epochs == std::numeric_limits<std::size_t>::max()) epochs = 0;
    for (std::size_t e = 0; e < epochs; ++e) {
      text += std::to_string(e);
      for (const auto& g : groups) {
        if (g.empty()) {
          text += ",";
          continue;
        }
        double sum = 0.0;
        for (auto* r : g) sum += r->metrics[e].smoothed_reward;
        text += "," + format_float(sum / static_cast<double>(g.size()));
      }
      text += "\n";
    }
    data.files["fig2_" + std::string(to_string(mode)) + ".csv"] = std::move(text);
  }

  for (Method m : methods) {
    const MdpMode mode = std::find(modes.begin(), modes.end(), MdpMode::Pomdp) != modes.end() ? MdpMode::Pomdp
                                                                                                : modes.front();
    const auto g = group(m, mode);
    if (g.empty()) continue;
    const std::size_t epochs = epochs_of(g);
    const std::size_t n = g.front()->metrics.front().per_uav_qos.size();
    std::string text = "epoch" + uav_header(n) + "\n";
    for (std::size_t e = 0; e < epochs; ++e) {
      text += std::to_string(e);
      for (std::size_t i = 0; i < n; ++i) {
        double sum = 0.0;
        for (auto* r : g) sum += r->metrics[e].per_uav_qos[i];
        text += "," + format_float(sum / static_cast<double>(g.size()));
      }
      text += "\n";
    }
    data.files["fig3_" + std::string(to_string(m)) + ".csv"] = std::move(text);
  }
  return data;
}

// Reads completed run directories and writes the figure CSVs into out_dir.
inline std::vector<std::string> emit_plot_data(const std::vector<fs::path>& run_dirs, const fs::path& out_dir) {
  std::vector<RunSummary> runs;
  for (const auto& d : run_dirs) runs.push_back(load_run(d));
  fs::create_directories(out_dir);
  std::vector<std::string> written;
  for (const auto& [name, text] : plot_data(runs).files) {
    write_text_file(out_dir / name, text);
    written.push_back(name);
  }
  return written;
}

struct GridRequest {
  RunSpec base;
  std::vector<Method> methods{kAllMethods.begin(), kAllMethods.end()};
  std::vector<MdpMode> modes{MdpMode::Pomdp, MdpMode::Fomdp};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  fs::path out_dir = "out";
  unsigned jobs = 1;
};

struct CellOutcome {
  Method method;
  MdpMode mode;
  std::uint64_t seed;
  bool ok = false;
  bool diverged = false;
  std::string message;
};

struct GridOutcome {
  std::vector<CellOutcome> cells;
  std::vector<ComparisonRow> comparison;
  bool all_ok() const {
    return std::all_of(cells.begin(), cells.end(), [](const CellOutcome& c) { return c.ok; });
  }
  bool any_diverged() const {
    return std::any_of(cells.begin(), cells.end(), [](const CellOutcome& c) { return c.diverged; });
  }
};

// Runs every (method, mode, seed) cell into out_dir/runs/<name>/, then writes
// manifest.csv, and when every cell succeeded comparison.csv and the figure
// CSVs. Cells are independent; up to `jobs` run at once.
inline GridOutcome run_grid(const GridRequest& request) {
  request.base.validate();
  std::vector<CellOutcome> cells;
  for (Method m : request.methods)
    for (MdpMode mode : request.modes)
      for (std::uint64_t s : request.seeds) cells.push_back({m, mode, s});
  if (cells.empty()) throw ConfigError("methods", "empty comparison grid");

  std::vector<RunSummary> summaries(cells.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < cells.size(); k = next++) {
      CellOutcome& cell = cells[k];
      RunSpec spec = request.base;
      spec.train.method = cell.method;
      spec.train.mdp_mode = cell.mode;
      spec.train.seed = cell.seed;
      const fs::path dir = request.out_dir / "runs" / run_name(cell.method, cell.mode, cell.seed);
      try {
        execute_run(spec, dir);
        // Summaries come from the written CSVs so comparison and figure
        // tables match what plot-data derives from the same directories.
        summaries[k] = load_run(dir);
        cell.ok = true;
      } catch (const DivergenceError& e) {
        cell.diverged = true;
        cell.message = e.what();
      } catch (const std::exception& e) {
        cell.message = e.what();
      }
    }
  };
  const unsigned jobs = std::max(1u, std::min<unsigned>(request.jobs, static_cast<unsigned>(cells.size())));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  GridOutcome outcome;
  outcome.cells = cells;
  std::string manifest = "run,status,message\n";
  for (const auto& c : cells) {
    std::string msg = c.message;
    std::replace(msg.begin(), msg.end(), ',', ';');
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    manifest += run_name(c.method, c.mode, c.seed) + "," + (c.ok ? "ok" : "failed") + "," + msg + "\n";
  }
  write_text_file(request.out_dir / "manifest.csv", manifest);
  if (!outcome.all_ok()) return outcome;

  outcome.comparison = build_comparison(summaries, request.base.threshold_rho, request.base.train.smoothing_window);
  write_text_file(request.out_dir / "comparison.csv", comparison_csv(outcome.comparison));
  for (const auto& [name, text] : plot_data(summaries).files) write_text_file(request.out_dir / name, text);
  return outcome;
}

}  // namespace uavmarl
