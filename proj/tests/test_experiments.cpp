#include <gtest/gtest.h>

#include <fstream>

#include "test_util.hpp"

using namespace gridtwin;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny_config(Strategy s = Strategy::DS1) {
  ExperimentConfig cfg;
  cfg.strategy = s;
  apply_scale(cfg, "tiny");
  cfg.seeds = {5};
  return cfg;
}

std::size_t count_lines(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  std::string line;
  while (std::getline(in, line)) ++n;
  return n;
}

}  // namespace

TEST(Config, ScalePresets) {
  ExperimentConfig cfg;
  apply_scale(cfg, "tiny");
  EXPECT_EQ(cfg.synthetic.days, 14u);
  EXPECT_EQ(cfg.synthetic.buildings.size(), 2u);
  EXPECT_EQ(cfg.hyper.exploration_steps, 141u);  // 3671 * 336 / 8760, rounded
  ExperimentConfig ci;
  apply_scale(ci, "ci");
  EXPECT_EQ(ci.hyper.exploration_steps, 905u);
  EXPECT_EQ(ci.hyper.batch_size, 256u);
  EXPECT_EQ(ci.hyper.tau, 0.05);
  ExperimentConfig full;
  apply_scale(full, "full");
  EXPECT_EQ(full.hyper.exploration_steps, 3671u);
  EXPECT_THROW(apply_scale(full, "medium"), std::invalid_argument);
}

TEST(Config, JsonRoundTrip) {
  ExperimentConfig cfg = tiny_config(Strategy::DS3);
  cfg.training_window = Window{0, 96};
  cfg.reward = {0.5, 0.5, 2.0, 1.0};
  cfg.buildings = {0, 1};
  const auto back = nlohmann::json(cfg).get<ExperimentConfig>();
  EXPECT_EQ(nlohmann::json(back), nlohmann::json(cfg));
  EXPECT_EQ(back.strategy, Strategy::DS3);
  EXPECT_EQ(*back.training_window, (Window{0, 96}));
  EXPECT_EQ(config_hash(back), config_hash(cfg));
  cfg.seeds = {6};
  EXPECT_NE(config_hash(back), config_hash(cfg));
}

TEST(Config, Ds3WindowIsFiveTwelfthsInWholeDays) {
  auto cfg = SyntheticCommunityConfig::varied(1);
  cfg.days = 365;
  EXPECT_EQ(ds3_training_window(generate_synthetic_community(cfg)).length, 153u * 24);
}

TEST(Experiments, ParallelForRunsEveryIndexAndRethrows) {
  std::vector<int> hit(50, 0);
  parallel_for(50, 4, [&](std::size_t i) { hit[i] += 1; });
  for (int h : hit) EXPECT_EQ(h, 1);
  EXPECT_THROW(parallel_for(10, 3, [](std::size_t i) { if (i == 7) throw std::runtime_error("x"); }),
               std::runtime_error);
}

TEST(Experiments, Ds1ArmsAndBaselineIdentity) {
  const auto r = run_ds1(tiny_config());
  ASSERT_EQ(r.seeds.size(), 1u);
  const auto& s = r.seeds.front();
  ASSERT_EQ(s.arms.size(), 3u);
  EXPECT_EQ(s.arms[0].name, "baseline");
  EXPECT_EQ(s.arms[1].name, "rbc");
  EXPECT_EQ(s.arms[2].name, "sac");
  for (Kpi k : kAllKpis)
    if (s.arms[0].normalized.district[k]) EXPECT_EQ(*s.arms[0].normalized.district[k], 1.0);
  EXPECT_EQ(s.policies.size(), 2u);
  EXPECT_EQ(s.episode_rewards[0].size(), 2u);
  EXPECT_TRUE(s.matrix.empty());
}

TEST(Experiments, Ds1IsDeterministicAndJobIndependent) {
  auto cfg = tiny_config();
  const auto a = run_ds1(cfg);
  cfg.jobs = 2;
  const auto b = run_ds1(cfg);
  const auto& ra = a.seeds[0].arm("sac");
  const auto& rb = b.seeds[0].arm("sac");
  for (Kpi k : kAllKpis) EXPECT_EQ(ra.raw.district[k], rb.raw.district[k]);
  EXPECT_EQ(a.seeds[0].episode_rewards, b.seeds[0].episode_rewards);
}

TEST(Experiments, Ds2MatrixCoversEveryPair) {
  const auto r = run_ds2(tiny_config(Strategy::DS2));
  const auto& s = r.seeds[0];
  ASSERT_EQ(s.matrix.size(), 4u);
  for (const auto& cell : s.matrix) {
    EXPECT_EQ(cell.run.net_kwh.size(), 14u * 24);
    for (Kpi k : {Kpi::D, Kpi::C, Kpi::G, Kpi::P, Kpi::R}) {
      ASSERT_TRUE(cell.normalized[k]);
      EXPECT_TRUE(std::isfinite(*cell.normalized[k]));
    }
  }
  EXPECT_EQ(s.matrix[1].source, 0u);
  EXPECT_EQ(s.matrix[1].target, 1u);
  EXPECT_NO_THROW(s.arm("sac-native"));
}

TEST(Experiments, Ds3SplitsTrainingAndEvaluation) {
  const auto r = run_ds3(tiny_config(Strategy::DS3));
  EXPECT_EQ(r.training_window, (Window{0, 144}));
  EXPECT_EQ(r.evaluation_window, (Window{144, 192}));
  const auto& s = r.seeds[0];
  EXPECT_EQ(s.arm("sac-own").runs[0].net_kwh.size(), 192u);
  EXPECT_EQ(s.matrix.size(), 4u);
}

TEST(Experiments, Ds3RejectsWindowShorterThanExploration) {
  auto cfg = tiny_config(Strategy::DS3);
  cfg.hyper.exploration_steps = 1000;
  EXPECT_THROW(run_ds3(cfg), std::invalid_argument);
}

TEST(Experiments, TransferNeedsTwoBuildings) {
  auto cfg = tiny_config(Strategy::DS2);
  cfg.synthetic.buildings.resize(1);
  EXPECT_THROW(run_ds2(cfg), std::invalid_argument);
}

TEST(Experiments, ReportLayout) {
  const auto r = run_ds2(tiny_config(Strategy::DS2));
  const auto dir = testutil::scratch_dir("report");
  emit_report(r, dir);
  EXPECT_TRUE(fs::exists(dir / "manifest.json"));
  EXPECT_TRUE(fs::exists(dir / "kpis" / "seed5_baseline.json"));
  EXPECT_TRUE(fs::exists(dir / "kpis" / "seed5_sac-native.csv"));
  EXPECT_TRUE(fs::exists(dir / "traces" / "seed5_rbc.csv"));
  EXPECT_EQ(count_lines(dir / "kpis" / "seed5_transfer_matrix.csv"), 1u + 4u);
  // 24 hours x 2 buildings x 3 arms, plus header.
  EXPECT_EQ(count_lines(dir / "kpis" / "seed5_profiles.csv"), 1u + 24 * 2 * 3);
  EXPECT_EQ(read_trace(dir / "traces" / "seed5_baseline.csv").size(), 2u * 14 * 24);

  std::ifstream mf(dir / "manifest.json");
  const auto manifest = nlohmann::json::parse(mf);
  EXPECT_EQ(manifest["config_hash"], config_hash(r.config));
  EXPECT_EQ(manifest["buildings"], (std::vector<std::string>{"1", "2"}));

  // Policy files reload into agents with the same deterministic actions.
  std::ifstream pf(dir / "policies" / "seed5_building_1.json");
  const auto pj = nlohmann::json::parse(pf);
  const auto agent = SacAgent::from_json(pj);
  EXPECT_EQ(pj["provenance"]["source_building"], "1");
  const auto bounds = pj["bounds"].get<ObservationBounds>();
  const auto c = load_experiment_community(r.config);
  DistrictEnv env(single_building(c, 0));
  env.set_bounds(0, bounds);
  const auto replay = run_controller(env, 0, sac_policy(agent));
  EXPECT_EQ(replay.net_kwh, r.seeds[0].arm("sac-native").runs[0].net_kwh);
}

// --- grid searches ---------------------------------------------------------

TEST(GridSearch, CellsEnumerateRowMajor) {
  const auto spec = GridSearchSpec::default_hyper();
  EXPECT_EQ(spec.cell_count(), 81u);
  EXPECT_EQ(spec.cell(0), (std::vector<double>{0.0005, 0.90, 0.00005, 0.2}));
  EXPECT_EQ(spec.cell(1), (std::vector<double>{0.0005, 0.90, 0.00005, 0.5}));
  EXPECT_EQ(spec.cell(80), (std::vector<double>{0.05, 0.99, 0.005, 0.8}));
}

TEST(GridSearch, AxisModeTiesGoToFirstListed) {
  EXPECT_EQ(axis_mode({0.5, 0.2, 0.5, 0.2}, {0.2, 0.5, 0.8}), 0.2);
  EXPECT_EQ(axis_mode({0.8, 0.8, 0.5}, {0.2, 0.5, 0.8}), 0.8);
}

TEST(GridSearch, HyperSelectsPerAxisModeOfBuildingWinners) {
  GridSearchSpec spec{{{"tau", {0.005, 0.05}}, {"temperature", {0.2, 0.5}}}, 2};
  // Building winners (0.05, 0.5), (0.05, 0.2), (0.005, 0.2); mode (0.05, 0.2).
  const std::vector<std::pair<double, double>> best{{0.05, 0.5}, {0.05, 0.2}, {0.005, 0.2}};
  const HyperTrainer trainer = [&](const SacHyperparams& hp, std::size_t b, std::uint64_t seed) {
    const double hit = (hp.tau == best[b].first) + (hp.temperature == best[b].second);
    return hit + 0.001 * static_cast<double>(seed);
  };
  const auto r = hyperparameter_grid_search(spec, SacHyperparams{}, 3, {1, 2}, trainer);
  EXPECT_EQ(r.best_cell, (std::vector<std::size_t>{3, 2, 0}));
  EXPECT_EQ(r.selected.tau, 0.05);
  EXPECT_EQ(r.selected.temperature, 0.2);
  EXPECT_NEAR(r.cells[3].mean_reward[0], 2.0015, 1e-12);
  EXPECT_THROW(hyperparameter_grid_search(spec, SacHyperparams{}, 3, {1}, trainer), std::invalid_argument);
  EXPECT_THROW(hyperparameter_grid_search(GridSearchSpec{{{"momentum", {1.0}}}, 1}, SacHyperparams{}, 1, {1}, trainer),
               std::invalid_argument);
}

TEST(GridSearch, RewardMinimizesMeanThenEmissions) {
  GridSearchSpec spec{{{"e1", {1, 2}}, {"w1", {0.0, 1.0}}}, 1};
  const RewardTrainer trainer = [](const RewardParams& p, std::uint64_t) {
    if (p.e1 == 1 && p.w1 == 1.0) return PriceEmission{0.7, 0.9};  // mean 0.8
    if (p.e1 == 2 && p.w1 == 0.0) return PriceEmission{0.8, 0.8};  // mean 0.8, lower G
    return PriceEmission{0.9, 0.9};
  };
  const auto r = reward_grid_search(spec, {1}, trainer);
  EXPECT_EQ(r.selected.e1, 2.0);
  EXPECT_EQ(r.selected.w1, 0.0);
  EXPECT_EQ(r.selected.w2, 1.0);
}

TEST(GridSearch, RealTrainersRunOnTinyCommunity) {
  auto cfg = tiny_config();
  cfg.hyper.episodes = 1;
  const auto c = load_experiment_community(cfg);
  const auto hyper = make_hyper_trainer(c, cfg);
  EXPECT_TRUE(std::isfinite(hyper(cfg.hyper, 1, 3)));
  const auto reward = make_reward_trainer(c, cfg);
  const auto pe = reward(RewardParams{}, 3);
  EXPECT_GT(pe.price, 0.0);
  EXPECT_GT(pe.emissions, 0.0);
}
