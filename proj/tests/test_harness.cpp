#include <gtest/gtest.h>

#include <filesystem>

#include "uavmarl/harness.hpp"

using namespace uavmarl;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("uavmarl_harness_" + name);
  fs::remove_all(dir);
  return dir;
}

RunSummary summary(Method m, MdpMode mode, std::uint64_t seed, std::vector<double> smoothed,
                   std::vector<double> qos = {1.0, 1.0}) {
  RunSummary r{m, mode, seed, {}};
  for (std::size_t e = 0; e < smoothed.size(); ++e) {
    MetricsRecord rec;
    rec.epoch = static_cast<int>(e);
    rec.total_reward = smoothed[e];
    rec.smoothed_reward = smoothed[e];
    rec.per_uav_qos = qos;
    r.metrics.push_back(rec);
  }
  return r;
}

RunSpec tiny_spec() {
  return parse_config_text(
      "width = 6\nheight = 6\nnum_uavs = 2\nnum_users = 5\ncoverage_radius = 2\nsensing_radius = 3\n"
      "episode_length = 4\nk_clusters = 2\nepochs = 6\nhidden_width = 4\nhidden_layers = 2\nsmoothing_window = 3\n");
}

}  // namespace

TEST(Csv, FloatFormatting) {
  EXPECT_EQ(format_float(0.0), "0");
  EXPECT_EQ(format_float(1.5), "1.5");
  EXPECT_EQ(format_float(1.0 / 3.0), "0.333333333");
  EXPECT_EQ(format_float(123456789012.0), "1.23456789e+11");
}

TEST(Csv, MetricsRoundTrip) {
  const fs::path dir = scratch("metrics");
  fs::create_directories(dir);
  std::vector<MetricsRecord> recs(3);
  for (int e = 0; e < 3; ++e) {
    recs[e].epoch = e;
    recs[e].total_reward = 10.0 * e + 0.25;
    recs[e].smoothed_reward = 5.0 * e;
    recs[e].per_uav_qos = {0.5 * e, 1.0};
  }
  write_text_file(dir / "metrics.csv", metrics_csv(recs, 2));
  EXPECT_EQ(read_text_file(dir / "metrics.csv").substr(0, 47), "epoch,total_reward,smoothed_reward,uav_0,uav_1\n");
  const auto back = read_metrics_csv(dir / "metrics.csv");
  ASSERT_EQ(back.size(), 3u);
  for (int e = 0; e < 3; ++e) {
    EXPECT_EQ(back[e].epoch, e);
    EXPECT_EQ(back[e].total_reward, recs[e].total_reward);
    EXPECT_EQ(back[e].per_uav_qos, recs[e].per_uav_qos);
  }
  fs::remove_all(dir);
}

TEST(Csv, RejectsMalformedMetrics) {
  const fs::path dir = scratch("bad");
  fs::create_directories(dir);
  write_text_file(dir / "a.csv", "epoch,total_reward,smoothed_reward\n0,1\n");
  EXPECT_THROW(read_metrics_csv(dir / "a.csv"), Error);
  write_text_file(dir / "b.csv", "epoch,total_reward,smoothed_reward\n0,x,1\n");
  EXPECT_THROW(read_metrics_csv(dir / "b.csv"), Error);
  EXPECT_THROW(read_metrics_csv(dir / "missing.csv"), Error);
  fs::remove_all(dir);
}

TEST(Comparison, ThresholdIsRelativeToBestInGroup) {
  const std::vector<RunSummary> runs{
      summary(Method::Proposed, MdpMode::Pomdp, 0, {1, 5, 9, 10}),
      summary(Method::Dnn, MdpMode::Pomdp, 0, {1, 2, 3, 8}),
      summary(Method::Random, MdpMode::Pomdp, 0, {1, 1, 1, 1}),
      summary(Method::Dnn, MdpMode::Pomdp, 1, {1, 2, 2, 2}),
  };
  const auto rows = build_comparison(runs, 0.9, 2);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0].epochs_to_threshold, 2);  // 9 >= 0.9 * 10
  EXPECT_FALSE(rows[1].epochs_to_threshold.has_value());
  EXPECT_FALSE(rows[2].epochs_to_threshold.has_value());
  EXPECT_EQ(rows[3].epochs_to_threshold, 1);  // own group, best is 2
  EXPECT_EQ(rows[0].final_smoothed_reward, 10.0);
  const std::string csv = comparison_csv(rows);
  EXPECT_NE(csv.find("dnn,pomdp,0,8,-1,"), std::string::npos) << csv;
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "method,mdp_mode,seed,final_smoothed_reward,epochs_to_threshold,uav_0_qos,uav_1_qos,qos_dispersion");
}

TEST(Comparison, DispersionIsPopulationStdOfWindowMeans) {
  auto r = summary(Method::CommNet, MdpMode::Fomdp, 0, {1, 2, 3});
  r.metrics[0].per_uav_qos = {100, 100};  // outside the window
  r.metrics[1].per_uav_qos = {1, 3};
  r.metrics[2].per_uav_qos = {3, 5};
  const auto rows = build_comparison({r}, 0.9, 2);
  EXPECT_EQ(rows[0].uav_qos_mean, (std::vector<double>{2, 4}));
  EXPECT_DOUBLE_EQ(rows[0].uav_qos_dispersion, 1.0);
}

TEST(PlotData, AveragesSeedsPerMethod) {
  const std::vector<RunSummary> runs{
      summary(Method::Dnn, MdpMode::Pomdp, 0, {1, 3}),
      summary(Method::Dnn, MdpMode::Pomdp, 1, {3, 5}),
      summary(Method::Proposed, MdpMode::Pomdp, 0, {2, 2}, {0.5, 1.5}),
  };
  const auto data = plot_data(runs);
  ASSERT_TRUE(data.files.contains("fig2_pomdp.csv"));
  EXPECT_EQ(data.files.at("fig2_pomdp.csv"), "epoch,proposed,dnn\n0,2,2\n1,2,4\n");
  EXPECT_EQ(data.files.at("fig3_proposed.csv"), "epoch,uav_0,uav_1\n0,0.5,1.5\n1,0.5,1.5\n");
  EXPECT_TRUE(data.files.contains("fig3_dnn.csv"));
}

TEST(OutputDir, RefusesNonEmptyWithoutForce) {
  const fs::path dir = scratch("outdir");
  prepare_output_dir(dir, false);
  write_text_file(dir / "x", "1");
  EXPECT_THROW(prepare_output_dir(dir, false), ConfigError);
  prepare_output_dir(dir, true);
  EXPECT_FALSE(fs::exists(dir / "x"));
  fs::remove_all(dir);
}

TEST(ExecuteRun, WritesArtifactsThatReload) {
  const fs::path dir = scratch("run");
  RunSpec spec = tiny_spec();
  spec.train.eval_every = 4;
  execute_run(spec, dir);
  for (const char* f : {"config.txt", "metrics.csv", "timing.csv", "checkpoint.txt", "checkpoint_epoch4.txt"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  const RunSummary back = load_run(dir);
  EXPECT_EQ(back.method, Method::Proposed);
  EXPECT_EQ(back.metrics.size(), 6u);
  EXPECT_EQ(read_text_file(dir / "metrics.csv").find("wall"), std::string::npos);
  const auto ckpt = load_checkpoint((dir / "checkpoint.txt").string());
  EXPECT_EQ(ckpt.require("epochs_trained"), "6");
  EXPECT_NO_THROW(evaluate(ckpt, spec.env, MdpMode::Pomdp, 2, 0));
  fs::remove_all(dir);
}

TEST(Grid, SmallGridProducesAllOutputsAndIsJobIndependent) {
  GridRequest req;
  req.base = tiny_spec();
  req.seeds = {0, 1};
  req.out_dir = scratch("grid1");
  req.jobs = 1;
  const auto a = run_grid(req);
  ASSERT_TRUE(a.all_ok());
  EXPECT_EQ(a.cells.size(), 16u);
  EXPECT_EQ(a.comparison.size(), 16u);
  for (const char* f : {"manifest.csv", "comparison.csv", "fig2_pomdp.csv", "fig2_fomdp.csv", "fig3_proposed.csv",
                        "fig3_random.csv", "fig3_dnn.csv", "fig3_commnet.csv"})
    EXPECT_TRUE(fs::exists(req.out_dir / f)) << f;

  GridRequest req2 = req;
  req2.out_dir = scratch("grid2");
  req2.jobs = 3;
  run_grid(req2);
  EXPECT_EQ(read_text_file(req.out_dir / "comparison.csv"), read_text_file(req2.out_dir / "comparison.csv"));
  EXPECT_EQ(read_text_file(req.out_dir / "runs/dnn_fomdp_seed1/metrics.csv"),
            read_text_file(req2.out_dir / "runs/dnn_fomdp_seed1/metrics.csv"));

  // Re-deriving the figures from the run directories matches the grid's own.
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(req.out_dir / "runs")) dirs.push_back(e.path());
  const fs::path plots = scratch("plots");
  emit_plot_data(dirs, plots);
  EXPECT_EQ(read_text_file(plots / "fig2_pomdp.csv"), read_text_file(req.out_dir / "fig2_pomdp.csv"));
  fs::remove_all(req.out_dir);
  fs::remove_all(req2.out_dir);
  fs::remove_all(plots);
}

TEST(Grid, FailedCellIsReportedInManifest) {
  GridRequest req;
  req.base = tiny_spec();
  req.base.train.optimizer.kind = OptimizerKind::Sgd;
  req.base.train.optimizer.lr = 1e308;
  req.base.train.epochs = 40;
  req.methods = {Method::Dnn, Method::Random};
  req.modes = {MdpMode::Pomdp};
  req.seeds = {0};
  req.out_dir = scratch("grid_fail");
  const auto out = run_grid(req);
  EXPECT_FALSE(out.all_ok());
  EXPECT_TRUE(out.any_diverged());
  const std::string manifest = read_text_file(req.out_dir / "manifest.csv");
  EXPECT_NE(manifest.find("dnn_pomdp_seed0,failed,"), std::string::npos) << manifest;
  EXPECT_NE(manifest.find("random_pomdp_seed0,ok,"), std::string::npos) << manifest;
  EXPECT_FALSE(fs::exists(req.out_dir / "comparison.csv"));
  fs::remove_all(req.out_dir);
}
