// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails.
//
//   acceptance --workdir DIR [--jobs N]

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "oracles.hpp"
#include "uavmarl/harness.hpp"

using namespace uavmarl;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << v;
  return s.str();
}

double median(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

// 1. Analytic gradients against central differences, cross-agent paths included.
Verdict gradient_exactness() {
  const auto t0 = Clock::now();
  Rng rng(20240601);
  const std::array methods{Method::Proposed, Method::Dnn, Method::CommNet};
  double worst_param = 0.0;
  double worst_obs = 0.0;
  double worst_cross = 0.0;
  int rosters = 0;
  for (int trial = 0; trial < 120; ++trial) {
    const Method method = methods[static_cast<std::size_t>(trial) % 3];
    const std::size_t agents = 2 + rng.below(3);
    const std::size_t width = 4 + rng.below(13);
    const std::size_t obs_dim = 3 + rng.below(10);
    const MixingMode mixing = (trial / 3) % 2 ? MixingMode::Literal : MixingMode::Separate;
    AgentRoster roster(method, agents, NetShape{obs_dim, width, 6, Activation::Tanh, mixing}, rng.next());
    const auto check = oracle::check_roster_gradients(roster, oracle::random_observations(rng, agents, obs_dim), rng);
    worst_param = std::max(worst_param, check.max_param_error);
    worst_obs = std::max(worst_obs, check.max_obs_error);
    worst_cross = std::max(worst_cross, check.max_cross_agent_error);
    ++rosters;
  }
  const double elapsed = seconds_since(t0);
  const double worst = std::max({worst_param, worst_obs, worst_cross});
  return {worst < 1e-5 && elapsed < 60.0,
          std::to_string(rosters) + " rosters, max rel err params " + fmt(worst_param) + " obs " + fmt(worst_obs) +
              " cross-agent " + fmt(worst_cross) + " (< 1e-5), " + fmt(elapsed, 3) + " s (< 60 s)"};
}

struct GridView {
  std::map<std::tuple<Method, MdpMode, std::uint64_t>, ComparisonRow> rows;
  std::vector<std::uint64_t> seeds;
  const ComparisonRow& at(Method m, MdpMode mode, std::uint64_t s) const { return rows.at({m, mode, s}); }
  double epochs_or_inf(Method m, MdpMode mode, std::uint64_t s) const {
    const auto& r = at(m, mode, s);
    return r.epochs_to_threshold ? static_cast<double>(*r.epochs_to_threshold)
                                 : std::numeric_limits<double>::infinity();
  }
};

// 2. POMDP ordering.
Verdict pomdp_ordering(const GridView& g, double grid_seconds) {
  int wins = 0;
  std::string per_seed;
  for (auto s : g.seeds) {
    const double p = g.at(Method::Proposed, MdpMode::Pomdp, s).final_smoothed_reward;
    bool all = true;
    for (Method m : {Method::Dnn, Method::CommNet, Method::Random})
      all = all && p >= g.at(m, MdpMode::Pomdp, s).final_smoothed_reward;
    wins += all ? 1 : 0;
    per_seed += all ? "W" : "L";
  }
  std::map<Method, double> med;
  for (Method m : {Method::Proposed, Method::Dnn, Method::CommNet}) {
    std::vector<double> xs;
    for (auto s : g.seeds) xs.push_back(g.epochs_or_inf(m, MdpMode::Pomdp, s));
    med[m] = median(xs);
  }
  const bool fastest = med[Method::Proposed] <= med[Method::Dnn] && med[Method::Proposed] <= med[Method::CommNet];
  const bool in_budget = grid_seconds <= 15 * 60;
  return {wins >= 4 && fastest && in_budget,
          "proposed >= all others in " + std::to_string(wins) + "/" + std::to_string(g.seeds.size()) + " seeds [" +
              per_seed + "] (need 4); median epochs-to-threshold proposed " + fmt(med[Method::Proposed], 6) +
              " dnn " + fmt(med[Method::Dnn], 6) + " commnet " + fmt(med[Method::CommNet], 6) +
              "; grid " + fmt(grid_seconds, 4) + " s (<= 900 s)"};
}

// 3. FOMDP similarity.
Verdict fomdp_similarity(const GridView& g) {
  std::map<Method, double> med;
  for (Method m : {Method::Proposed, Method::Dnn, Method::CommNet}) {
    std::vector<double> xs;
    for (auto s : g.seeds) xs.push_back(g.at(m, MdpMode::Fomdp, s).final_smoothed_reward);
    med[m] = median(xs);
  }
  double best = 0.0;
  for (const auto& [m, v] : med) best = std::max(best, v);
  double worst_gap = 0.0;
  for (const auto& [m, v] : med) worst_gap = std::max(worst_gap, (best - v) / best);
  return {worst_gap <= 0.15, "median final proposed " + fmt(med[Method::Proposed]) + " dnn " + fmt(med[Method::Dnn]) +
                                 " commnet " + fmt(med[Method::CommNet]) + "; largest gap to best " +
                                 fmt(100 * worst_gap, 3) + "% (<= 15%)"};
}

// 4. Random is weak and even.
Verdict random_weakness(const GridView& g) {
  bool all_low = true;
  double worst_ratio = 0.0;
  for (auto s : g.seeds) {
    const double r = g.at(Method::Random, MdpMode::Pomdp, s).final_smoothed_reward;
    const double p = g.at(Method::Proposed, MdpMode::Pomdp, s).final_smoothed_reward;
    worst_ratio = std::max(worst_ratio, r / p);
    all_low = all_low && r < 0.5 * p;
  }
  std::map<Method, double> disp;
  for (Method m : kAllMethods) {
    double sum = 0.0;
    for (auto s : g.seeds) sum += g.at(m, MdpMode::Pomdp, s).uav_qos_dispersion;
    disp[m] = sum / static_cast<double>(g.seeds.size());
  }
  bool lowest = true;
  for (Method m : {Method::Proposed, Method::Dnn, Method::CommNet}) lowest = lowest && disp[Method::Random] < disp[m];
  std::string dtext;
  for (Method m : kAllMethods) dtext += " " + std::string(to_string(m)) + " " + fmt(disp[m]);
  return {all_low && lowest, "max random/proposed final ratio " + fmt(worst_ratio) +
                                 " (< 0.5 in every seed); mean POMDP dispersion" + dtext};
}

// 5. QoS accounting against a brute-force association.
Verdict qos_accounting() {
  Rng rng(5150);
  double worst = 0.0;
  int mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    EnvConfig cfg;
    cfg.width = 3 + static_cast<int>(rng.below(20));
    cfg.height = 3 + static_cast<int>(rng.below(20));
    cfg.num_uavs = 2 + static_cast<int>(rng.below(std::min(5, cfg.width - 1)));
    cfg.num_users = static_cast<int>(rng.below(40));
    cfg.coverage_radius = rng.uniform(0.5, std::min(6.0, static_cast<double>(cfg.extent())));
    cfg.uav_capacity = rng.uniform(0.5, 20.0);
    const WorldState s = oracle::random_state(rng, cfg);
    const QosReport q = compute_qos(s, cfg);

    std::vector<int> load(s.uav_pos.size(), 0);
    std::vector<std::optional<std::size_t>> assoc;
    for (int u = 0; u < cfg.num_users; ++u) {
      assoc.push_back(oracle::nearest_in_range(s, static_cast<std::size_t>(u), cfg.coverage_radius));
      if (assoc.back()) ++load[*assoc.back()];
    }
    if (assoc != q.association) ++mismatches;
    double expected_total = 0.0;
    for (int u = 0; u < cfg.num_users; ++u) {
      if (!assoc[u]) continue;
      const auto i = *assoc[u];
      const double dx = s.user_pos[u].x - s.uav_pos[i].x;
      const double dy = s.user_pos[u].y - s.uav_pos[i].y;
      expected_total += cfg.uav_capacity / load[i] * (1.0 - std::sqrt(dx * dx + dy * dy) / cfg.coverage_radius);
    }
    double by_user = 0.0;
    double by_uav = 0.0;
    for (double v : q.per_user_qos) by_user += v;
    for (double v : q.per_uav_serving_qos) by_uav += v;
    const double scale = std::max(1.0, std::abs(q.total_qos));
    worst = std::max({worst, std::abs(by_user - q.total_qos) / scale, std::abs(by_uav - q.total_qos) / scale,
                      std::abs(expected_total - q.total_qos) / scale});
  }
  return {mismatches == 0 && worst <= 1e-9, "1000 states, association mismatches " + std::to_string(mismatches) +
                                                 ", max relative sum discrepancy " + fmt(worst) + " (<= 1e-9)"};
}

// Companion check for the grid: every trained learner's greedy mean reward
// on a fixed evaluation seed set is at least that of its untrained init.
Verdict trained_beats_untrained(const fs::path& grid_dir, const GridView& g) {
  const RunSpec spec;
  int ok = 0;
  int total = 0;
  std::string failures;
  for (Method m : {Method::Proposed, Method::Dnn, Method::CommNet}) {
    for (MdpMode mode : {MdpMode::Pomdp, MdpMode::Fomdp}) {
      for (auto s : g.seeds) {
        const auto dir = grid_dir / "runs" / run_name(m, mode, s);
        const auto trained = load_checkpoint((dir / "checkpoint.txt").string());
        const AgentRoster init(m, static_cast<std::size_t>(spec.env.num_uavs), net_shape(spec.env, spec.train), s);
        const std::uint64_t eval_seed = 9000 + s;
        const double a = evaluate(trained, spec.env, mode, spec.eval_episodes, eval_seed).mean_reward;
        const double b = evaluate(init.to_checkpoint(), spec.env, mode, spec.eval_episodes, eval_seed).mean_reward;
        ++total;
        if (a >= b) {
          ++ok;
        } else {
          failures += " " + run_name(m, mode, s) + "(" + fmt(a) + "<" + fmt(b) + ")";
        }
      }
    }
  }
  return {ok == total, std::to_string(ok) + "/" + std::to_string(total) +
                           " learner runs evaluate at or above their untrained initialization" + failures};
}

int run_cli(const std::string& args) {
  const int status = std::system((std::string(UAVMARL_CLI_PATH) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// 6. Two compare executions produce identical CSVs.
Verdict determinism(const fs::path& work, unsigned jobs) {
  const fs::path cfg = work / "determinism.cfg";
  write_text_file(cfg, "epochs = 150\n");
  const std::string common = "compare --config " + cfg.string() + " --seeds 0..1 --force --jobs " + std::to_string(jobs);
  const fs::path a = work / "determinism_a";
  const fs::path b = work / "determinism_b";
  const int ca = run_cli(common + " --out " + a.string());
  const int cb = run_cli(common + " --out " + b.string());
  if (ca != 0 || cb != 0) return {false, "compare exited with " + std::to_string(ca) + " and " + std::to_string(cb)};
  int compared = 0;
  int differing = 0;
  auto same = [&](const fs::path& rel) {
    ++compared;
    if (read_text_file(a / rel) != read_text_file(b / rel)) ++differing;
  };
  same("comparison.csv");
  for (const auto& e : fs::directory_iterator(a / "runs")) same(fs::path("runs") / e.path().filename() / "metrics.csv");
  return {differing == 0 && compared == 17, std::to_string(compared) + " CSVs compared (16 cells at 150 epochs, 2 seeds), " +
                                                std::to_string(differing) + " differ"};
}

// 7. Mixing fidelity.
Verdict mixing_fidelity() {
  Rng rng(777);
  int literal_mismatch = 0;
  int message_mismatch = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.below(3);
    const std::size_t width = 4 + rng.below(13);
    const std::size_t obs_dim = 3 + rng.below(10);
    const Method method = trial % 2 ? Method::Proposed : Method::CommNet;
    const auto seed = rng.next();
    AgentRoster literal(method, n, NetShape{obs_dim, width, 6, Activation::Tanh, MixingMode::Literal}, seed);
    AgentRoster separate(method, n, NetShape{obs_dim, width, 6, Activation::Tanh, MixingMode::Separate}, seed + 1);
    for (std::size_t k = 0; k < literal.nets().size(); ++k) {
      auto& src = literal.nets()[k];
      auto& dst = separate.nets()[k];
      dst.encoder() = src.encoder();
      dst.head() = src.head();
      for (std::size_t l = 1; l <= 6; ++l) {
        dst.hidden(l) = src.hidden(l);
        if (dst.mixes()) dst.comm(l).values = src.hidden(l).weight.values;
      }
    }
    const auto obs = oracle::random_observations(rng, n, obs_dim);
    const auto a = joint_forward(literal, obs);
    const auto b = joint_forward(separate, obs);
    for (std::size_t i = 0; i < n; ++i) {
      if (std::memcmp(a.logits[i].data(), b.logits[i].data(), kNumMoves * sizeof(double)) != 0) ++literal_mismatch;
      if (!literal.net_for(i).mixes()) continue;
      for (std::size_t l = 0; l < 6; ++l) {
        std::vector<std::vector<double>> layer;
        for (std::size_t j = 0; j < n; ++j) layer.emplace_back(a.h(j, l).begin(), a.h(j, l).end());
        const auto expected = oracle::mean_of_others(layer, i);
        if (std::memcmp(expected.data(), a.m(i, l).data(), width * sizeof(double)) != 0) ++message_mismatch;
      }
    }
  }

  // Two agents with equal hidden states under identity transforms: W h + W m = 2h.
  AgentRoster pair(Method::CommNet, 2, NetShape{4, 4, 1, Activation::Identity, MixingMode::Literal}, 1);
  auto& net = pair.nets()[0];
  for (ParamTensor* p : net.params()) std::fill(p->values.begin(), p->values.end(), 0.0);
  for (std::size_t k = 0; k < 4; ++k) {
    net.encoder().weight.at(k, k) = 1.0;
    net.hidden(1).weight.at(k, k) = 1.0;
  }
  const std::vector<double> h{0.5, -1.25, 2.0, 0.0};
  const auto c = joint_forward(pair, ObservationSet{MdpMode::Pomdp, 4, {h, h}});
  bool doubled = true;
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t k = 0; k < 4; ++k) doubled = doubled && c.h(i, 1)[k] == 2.0 * h[k];

  return {literal_mismatch == 0 && message_mismatch == 0 && doubled,
          "100 passes: literal vs tied-separate logit mismatches " + std::to_string(literal_mismatch) +
              ", message vs brute-force mean mismatches " + std::to_string(message_mismatch) +
              ", 2-agent identity case " + (doubled ? "gives 2h" : "does not give 2h")};
}

// 8. One UAV, one step, all users at a known offset.
Verdict bandit_sanity() {
  const auto t0 = Clock::now();
  EnvConfig env;
  env.num_uavs = 1;
  env.num_users = 5;
  env.episode_length = 1;
  WorldState s0;
  s0.uav_pos = {{10, 10}};
  s0.user_pos.assign(5, Cell{13, 10});
  // Distances after each move: Stay 3, PosX 2, NegX 4, PosY/NegY sqrt(10);
  // PosX is the unique best move.
  const std::size_t best = static_cast<std::size_t>(Move::PosX);

  TrainConfig tc;
  tc.method = Method::Dnn;
  tc.epochs = 500;
  AgentRoster roster(Method::Dnn, 1, net_shape(env, tc), 1);
  Optimizer opt(tc.optimizer);
  Baseline baseline(tc.baseline, tc.baseline_decay);
  Rng rng(3);
  const ObservationSet obs0 = observe(s0, env, MdpMode::Fomdp);

  // Epoch 1: the head-bias gradient equals d loss / d logits, which must
  // match the closed form -A (onehot(a) - p) + beta p (log p + H).
  double direction_error = 0.0;
  {
    const Trajectory traj = rollout_from(env, roster, MdpMode::Fomdp, rng, s0, tc.gamma);
    const auto b = baseline.values(traj.returns);
    const double adv = traj.returns[0] - b[0];
    roster.zero_grad();
    accumulate_policy_gradient(roster, traj, std::vector<double>{adv}, tc.entropy_coef);
    const auto& z = traj.steps[0].cache->logits[0];
    double zmax = *std::max_element(z.begin(), z.end());
    std::vector<double> p(kNumMoves);
    double norm = 0.0;
    for (std::size_t k = 0; k < kNumMoves; ++k) norm += p[k] = std::exp(z[k] - zmax);
    double entropy = 0.0;
    for (double& v : p) v /= norm;
    for (double v : p) entropy -= v * std::log(v);
    const auto a = static_cast<std::size_t>(traj.steps[0].sampled.actions[0]);
    const auto& grad = roster.net_for(0).head().bias.grad;
    for (std::size_t k = 0; k < kNumMoves; ++k) {
      const double closed = -adv * ((k == a ? 1.0 : 0.0) - p[k]) + tc.entropy_coef * p[k] * (std::log(p[k]) + entropy);
      direction_error = std::max(direction_error, oracle::relative_error(grad[k], closed, 1e-12));
    }
    roster.zero_grad();
    reinforce_update(roster, traj, tc, baseline, opt, 0);
  }
  std::optional<int> reached;
  double p_best = 0.0;
  for (int epoch = 1; epoch < tc.epochs; ++epoch) {
    const Trajectory traj = rollout_from(env, roster, MdpMode::Fomdp, rng, s0, tc.gamma);
    reinforce_update(roster, traj, tc, baseline, opt, epoch);
    p_best = softmax(joint_forward(roster, obs0).logits[0])[best];
    if (!reached && p_best >= 0.95) reached = epoch + 1;
  }
  const double elapsed = seconds_since(t0);
  return {p_best >= 0.95 && direction_error < 1e-9 && elapsed < 30.0,
          "p(best) after 500 epochs " + fmt(p_best) + " (>= 0.95, first reached at epoch " +
              (reached ? std::to_string(*reached) : std::string("never")) +
              "); epoch-1 gradient vs closed form max rel err " + fmt(direction_error) + " (< 1e-9); " +
              fmt(elapsed, 3) + " s (< 30 s)"};
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = fs::temp_directory_path() / "uavmarl_acceptance";
  unsigned jobs = std::max(1u, std::thread::hardware_concurrency());
  for (int k = 1; k < argc; ++k) {
    const std::string arg = argv[k];
    if (arg == "--workdir" && k + 1 < argc) {
      work = argv[++k];
    } else if (arg == "--jobs" && k + 1 < argc) {
      jobs = static_cast<unsigned>(std::max(1, std::atoi(argv[++k])));
    } else {
      std::cerr << "usage: acceptance [--workdir DIR] [--jobs N]\n";
      return 1;
    }
  }
  fs::create_directories(work);

  int failures = 0;
  auto report = [&](int id, const char* title, const Verdict& v) {
    std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << title << "): " << v.detail << std::endl;
    failures += v.pass ? 0 : 1;
  };
  auto guarded = [](const std::function<Verdict()>& fn) {
    try {
      return fn();
    } catch (const std::exception& e) {
      return Verdict{false, std::string("threw: ") + e.what()};
    }
  };

  report(1, "gradient exactness", guarded(gradient_exactness));

  // Criteria 2-4 share one full default grid.
  GridRequest request;
  request.out_dir = work / "grid";
  request.jobs = jobs;
  GridView view;
  view.seeds = request.seeds;
  const auto t0 = Clock::now();
  std::string grid_error;
  try {
    prepare_output_dir(request.out_dir, true);
    const GridOutcome outcome = run_grid(request);
    if (!outcome.all_ok()) grid_error = "grid had failed cells, see manifest.csv";
    for (const auto& row : outcome.comparison) view.rows[{row.method, row.mode, row.seed}] = row;
  } catch (const std::exception& e) {
    grid_error = e.what();
  }
  const double grid_seconds = seconds_since(t0);
  if (grid_error.empty()) {
    report(2, "POMDP ordering", guarded([&] { return pomdp_ordering(view, grid_seconds); }));
    report(3, "FOMDP similarity", guarded([&] { return fomdp_similarity(view); }));
    report(4, "random baseline weakness", guarded([&] { return random_weakness(view); }));
    const Verdict v = guarded([&] { return trained_beats_untrained(request.out_dir, view); });
    std::cout << (v.pass ? "PASS" : "FAIL") << " check (trained vs untrained): " << v.detail << std::endl;
    failures += v.pass ? 0 : 1;
  } else {
    for (int id = 2; id <= 4; ++id) report(id, "default grid", Verdict{false, grid_error});
  }

  report(5, "QoS accounting", guarded(qos_accounting));
  report(6, "determinism", guarded([&] { return determinism(work, jobs); }));
  report(7, "mixing fidelity", guarded(mixing_fidelity));
  report(8, "policy-gradient sanity", guarded(bandit_sanity));

  std::cout << (failures == 0 ? "all checks passed" : std::to_string(failures) + " checks failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
