#pragma once

// Gridworld of UAV base stations serving static ground users.
//
// Every operation here is a pure function of its arguments: reset, step,
// compute_qos and observe never touch global state, so concurrent rollouts
// only need to own their WorldState.

#include <algorithm>
#include <array>
#include <cmath>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "uavmarl/error.hpp"
#include "uavmarl/rng.hpp"

namespace uavmarl {

struct Cell {
  int x = 0;
  int y = 0;
  friend auto operator<=>(const Cell&, const Cell&) = default;
};

enum class Move : std::uint8_t { Stay, PosX, NegX, PosY, NegY };
inline constexpr std::size_t kNumMoves = 5;

inline constexpr std::array<Move, kNumMoves> kAllMoves = {Move::Stay, Move::PosX, Move::NegX,
                                                          Move::PosY, Move::NegY};

enum class UserLayout { UniformRandom, Clustered };
enum class MdpMode { Pomdp, Fomdp };

inline std::string_view to_string(MdpMode mode) {
  return mode == MdpMode::Pomdp ? "pomdp" : "fomdp";
}

inline std::string_view to_string(UserLayout layout) {
  return layout == UserLayout::Clustered ? "clustered" : "uniform_random";
}

struct EnvConfig {
  int width = 20;
  int height = 20;
  int num_uavs = 4;
  int num_users = 20;
  double coverage_radius = 4.0;
  double sensing_radius = 5.0;
  double uav_capacity = 10.0;
  int episode_length = 40;
  std::int64_t user_layout_seed = 0;
  UserLayout user_layout = UserLayout::Clustered;
  int k_clusters = 4;
  double cluster_std = 1.5;

  friend bool operator==(const EnvConfig&, const EnvConfig&) = default;

  int extent() const { return std::max(width, height); }

  void validate() const {
    if (width <= 0) throw ConfigError("width", "must be > 0");
    if (height <= 0) throw ConfigError("height", "must be > 0");
    if (num_uavs < 2) throw ConfigError("num_uavs", "must be >= 2");
    if (num_uavs > width) throw ConfigError("num_uavs", "must not exceed width (distinct start cells)");
    if (num_users < 0) throw ConfigError("num_users", "must be >= 0");
    if (!(coverage_radius > 0.0) || coverage_radius > extent())
      throw ConfigError("coverage_radius", "must lie in (0, max(width, height)]");
    if (!(sensing_radius > 0.0) || sensing_radius > extent())
      throw ConfigError("sensing_radius", "must lie in (0, max(width, height)]");
    if (!(uav_capacity > 0.0)) throw ConfigError("uav_capacity", "must be > 0");
    if (episode_length <= 0) throw ConfigError("episode_length", "must be > 0");
    if (user_layout == UserLayout::Clustered) {
      if (k_clusters < 1) throw ConfigError("k_clusters", "must be >= 1");
      if (!(cluster_std >= 0.0)) throw ConfigError("cluster_std", "must be >= 0");
    }
  }
};

struct WorldState {
  std::vector<Cell> uav_pos;
  std::vector<Cell> user_pos;
  int t = 0;
  friend bool operator==(const WorldState&, const WorldState&) = default;
};

struct QosReport {
  std::vector<double> per_user_qos;
  std::vector<double> per_uav_serving_qos;
  double total_qos = 0.0;
  std::vector<std::optional<std::size_t>> association;
  friend bool operator==(const QosReport&, const QosReport&) = default;
};

struct ObservationSet {
  MdpMode mode = MdpMode::Pomdp;
  std::size_t dim = 0;
  std::vector<std::vector<double>> per_agent;
  friend bool operator==(const ObservationSet&, const ObservationSet&) = default;
};

inline constexpr int kUserGridSide = 5;

// Own position (2), per-other-UAV flag + offset (3 each), 5x5 user grid.
inline std::size_t observation_dim(int num_uavs) {
  return 2 + 3 * static_cast<std::size_t>(num_uavs - 1) + kUserGridSide * kUserGridSide;
}
inline std::size_t observation_dim(const EnvConfig& config) { return observation_dim(config.num_uavs); }

inline double distance(Cell a, Cell b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  return std::sqrt(dx * dx + dy * dy);
}

inline bool in_bounds(Cell c, const EnvConfig& config) {
  return c.x >= 0 && c.x < config.width && c.y >= 0 && c.y < config.height;
}

// Evenly spaced cells on the center row.
inline std::vector<Cell> starting_cells(const EnvConfig& config) {
  std::vector<Cell> cells;
  cells.reserve(config.num_uavs);
  const int row = config.height / 2;
  for (int i = 0; i < config.num_uavs; ++i) {
    cells.push_back({(2 * i + 1) * config.width / (2 * config.num_uavs), row});
  }
  return cells;
}

inline std::vector<Cell> place_users(const EnvConfig& config, std::uint64_t seed) {
  Rng rng({static_cast<std::uint64_t>(config.user_layout_seed), seed});
  std::vector<Cell> users;
  users.reserve(config.num_users);
  const auto w = static_cast<std::uint64_t>(config.width);
  const auto h = static_cast<std::uint64_t>(config.height);
  if (config.user_layout == UserLayout::UniformRandom) {
    for (int u = 0; u < config.num_users; ++u) {
      const int x = static_cast<int>(rng.below(w));
      const int y = static_cast<int>(rng.below(h));
      users.push_back({x, y});
    }
    return users;
  }
  std::vector<Cell> centers;
  for (int k = 0; k < config.k_clusters; ++k) {
    const int x = static_cast<int>(rng.below(w));
    const int y = static_cast<int>(rng.below(h));
    centers.push_back({x, y});
  }
  for (int u = 0; u < config.num_users; ++u) {
    const Cell c = centers[rng.below(centers.size())];
    const double nx = rng.normal();
    const double ny = rng.normal();
    const int x = static_cast<int>(std::lround(c.x + config.cluster_std * nx));
    const int y = static_cast<int>(std::lround(c.y + config.cluster_std * ny));
    users.push_back({std::clamp(x, 0, config.width - 1), std::clamp(y, 0, config.height - 1)});
  }
  return users;
}

inline WorldState reset(const EnvConfig& config, std::uint64_t seed) {
  config.validate();
  return WorldState{starting_cells(config), place_users(config, seed), 0};
}

inline QosReport compute_qos(const WorldState& state, const EnvConfig& config) {
  const std::size_t num_uavs = state.uav_pos.size();
  const std::size_t num_users = state.user_pos.size();
  const double radius = config.coverage_radius;

  QosReport report;
  report.per_user_qos.assign(num_users, 0.0);
  report.per_uav_serving_qos.assign(num_uavs, 0.0);
  report.association.assign(num_users, std::nullopt);

  std::vector<double> dist(num_users, 0.0);
  std::vector<int> load(num_uavs, 0);
  for (std::size_t u = 0; u < num_users; ++u) {
    for (std::size_t i = 0; i < num_uavs; ++i) {
      const double d = distance(state.user_pos[u], state.uav_pos[i]);
      if (d <= radius && (!report.association[u] || d < dist[u])) {
        report.association[u] = i;
        dist[u] = d;
      }
    }
    if (report.association[u]) ++load[*report.association[u]];
  }

  for (std::size_t u = 0; u < num_users; ++u) {
    if (!report.association[u]) continue;
    const std::size_t i = *report.association[u];
    const double q = (config.uav_capacity / load[i]) * (1.0 - dist[u] / radius);
    report.per_user_qos[u] = q;
    report.per_uav_serving_qos[i] += q;
    report.total_qos += q;
  }
  return report;
}

inline Cell apply_move(Cell c, Move move, const EnvConfig& config) {
  switch (move) {
    case Move::Stay: break;
    case Move::PosX: c.x = std::min(c.x + 1, config.width - 1); break;
    case Move::NegX: c.x = std::max(c.x - 1, 0); break;
    case Move::PosY: c.y = std::min(c.y + 1, config.height - 1); break;
    case Move::NegY: c.y = std::max(c.y - 1, 0); break;
  }
  return c;
}

struct StepResult {
  WorldState state;
  QosReport qos;
};

// Moves every UAV one cell (clamped), advances the clock, and scores the
// new positions. The RL reward is qos.total_qos, shared by all agents.
inline StepResult step(const WorldState& state, std::span<const Move> joint_action,
                       const EnvConfig& config) {
  if (state.t >= config.episode_length) {
    throw EpisodeEndError("step called at t = " + std::to_string(state.t) +
                          " with episode_length = " + std::to_string(config.episode_length));
  }
  if (joint_action.size() != state.uav_pos.size()) {
    throw ArityError("joint action has " + std::to_string(joint_action.size()) +
                     " moves for " + std::to_string(state.uav_pos.size()) + " UAVs");
  }
  StepResult result{state, {}};
  for (std::size_t i = 0; i < joint_action.size(); ++i) {
    result.state.uav_pos[i] = apply_move(state.uav_pos[i], joint_action[i], config);
  }
  ++result.state.t;
  result.qos = compute_qos(result.state, config);
  return result;
}

namespace detail {

inline double scale_coordinate(int v, int size) {
  return size > 1 ? 2.0 * v / (size - 1) - 1.0 : 0.0;
}

inline int grid_bin(double offset, double span) {
  const int bin = static_cast<int>(std::floor(offset / span * kUserGridSide));
  return std::min(bin, kUserGridSide - 1);
}

}  // namespace detail

inline ObservationSet observe(const WorldState& state, const EnvConfig& config, MdpMode mode) {
  const std::size_t n = state.uav_pos.size();
  const std::size_t dim = observation_dim(static_cast<int>(n));
  const double extent = config.extent();
  const double sense = config.sensing_radius;
  const std::size_t grid_offset = 2 + 3 * (n - 1);

  ObservationSet obs{mode, dim, std::vector<std::vector<double>>(n, std::vector<double>(dim, 0.0))};
  for (std::size_t i = 0; i < n; ++i) {
    auto& f = obs.per_agent[i];
    const Cell self = state.uav_pos[i];
    f[0] = detail::scale_coordinate(self.x, config.width);
    f[1] = detail::scale_coordinate(self.y, config.height);

    std::size_t k = 2;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const Cell other = state.uav_pos[j];
      if (mode == MdpMode::Fomdp || distance(self, other) <= sense) {
        f[k] = 1.0;
        f[k + 1] = (other.x - self.x) / extent;
        f[k + 2] = (other.y - self.y) / extent;
      }
      k += 3;
    }

    std::array<int, kUserGridSide * kUserGridSide> counts{};
    for (const Cell u : state.user_pos) {
      int bx = 0;
      int by = 0;
      if (mode == MdpMode::Fomdp) {
        bx = detail::grid_bin(u.x, config.width);
        by = detail::grid_bin(u.y, config.height);
      } else {
        const double ox = u.x - (self.x - sense);
        const double oy = u.y - (self.y - sense);
        if (ox < 0.0 || ox > 2.0 * sense || oy < 0.0 || oy > 2.0 * sense) continue;
        bx = detail::grid_bin(ox, 2.0 * sense);
        by = detail::grid_bin(oy, 2.0 * sense);
      }
      ++counts[by * kUserGridSide + bx];
    }
    const int users = static_cast<int>(state.user_pos.size());
    for (std::size_t b = 0; b < counts.size(); ++b) {
      f[grid_offset + b] = users > 0 ? static_cast<double>(std::min(counts[b], users)) / users : 0.0;
    }
  }
  return obs;
}

}  // namespace uavmarl
