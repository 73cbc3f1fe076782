#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "test_util.hpp"

using namespace gridtwin;

namespace {

SacHyperparams small_hp() {
  SacHyperparams hp;
  hp.hidden_layers = {16, 16};
  hp.batch_size = 16;
  hp.exploration_steps = 48;
  hp.episodes = 2;
  return hp;
}

Community small_community(std::size_t days = 4) {
  auto cfg = SyntheticCommunityConfig::varied(2);
  cfg.days = days;
  return generate_synthetic_community(cfg);
}

Observation random_obs(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Observation o;
  for (double& v : o) v = u(rng);
  return o;
}

bool same_params(const nn::DenseNet& a, const nn::DenseNet& b) {
  for (std::size_t l = 0; l < a.layers().size(); ++l)
    if (a.layers()[l].weight != b.layers()[l].weight || a.layers()[l].bias != b.layers()[l].bias) return false;
  return true;
}

}  // namespace

TEST(ReplayBuffer, EvictsOldestAtCapacity) {
  ReplayBuffer buf(2);
  for (int i = 0; i < 3; ++i) buf.store({{}, 0.1 * i, 0.0, {}, false});
  EXPECT_EQ(buf.size(), 2u);
  EXPECT_DOUBLE_EQ(buf.oldest(0).action, 0.1);
  EXPECT_DOUBLE_EQ(buf.oldest(1).action, 0.2);
  buf.clear();
  EXPECT_EQ(buf.size(), 0u);
  EXPECT_THROW(ReplayBuffer(0), std::invalid_argument);
}

TEST(ReplayBuffer, SamplesDistinctSlots) {
  ReplayBuffer buf(100);
  for (int i = 0; i < 40; ++i) buf.store({{}, static_cast<double>(i), 0.0, {}, false});
  nn::Rng rng(1);
  const auto idx = buf.sample_indices(40, rng);
  EXPECT_EQ(std::set<std::size_t>(idx.begin(), idx.end()).size(), 40u);
  EXPECT_THROW(buf.sample_indices(41, rng), std::invalid_argument);
}

TEST(ReplayBuffer, SamplingIsUniform) {
  ReplayBuffer buf(50);
  for (int i = 0; i < 50; ++i) buf.store({});
  nn::Rng rng(2);
  std::vector<double> counts(50, 0.0);
  const int draws = 10000, k = 10;
  for (int d = 0; d < draws; ++d)
    for (auto i : buf.sample_indices(k, rng)) counts[i] += 1.0;
  const double expected = draws * k / 50.0;
  double chi2 = 0.0;
  for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
  // 49 degrees of freedom; 0.999 quantile is about 85.4.
  EXPECT_LT(chi2, 85.4);
}

TEST(SacAgent, ActionsStayInRange) {
  SacAgent agent(small_hp(), 3);
  std::mt19937_64 rng(3);
  for (int i = 0; i < 500; ++i) {
    const auto o = random_obs(rng);
    const double s = agent.select_action(o, ActionMode::Stochastic);
    EXPECT_GT(s, -1.0);
    EXPECT_LT(s, 1.0);
    const double d = agent.select_action(o, ActionMode::Deterministic);
    EXPECT_LE(std::abs(d), 1.0);
  }
  EXPECT_THROW(agent.select_action(Observation{}, ActionMode::RbcGuided), std::invalid_argument);
}

TEST(SacAgent, ZeroMeanGivesZeroDeterministicAction) {
  SacAgent agent(small_hp(), 4);
  auto& last = agent.actor().layers().back();
  last.weight.setZero();
  last.bias.setZero();
  EXPECT_EQ(agent.deterministic_action(Observation{}), 0.0);
}

TEST(SacAgent, RbcGuidedModeDelegatesToRule) {
  SacAgent agent(small_hp(), 5);
  const RbcContext ctx{RbcStrategy::tou_peak_reduction(), 18, 0.0, BatteryState{4.0, BatterySpec{}}};
  EXPECT_NEAR(agent.select_action(Observation{}, ActionMode::RbcGuided, &ctx), -2.0 / 6.4, 1e-12);
}

TEST(SacAgent, UpdateWaitsForAFullBatch) {
  SacAgent agent(small_hp(), 6);
  std::mt19937_64 rng(6);
  for (int i = 0; i < 15; ++i) agent.store({random_obs(rng), 0.1, -1.0, random_obs(rng), false});
  EXPECT_FALSE(agent.update().has_value());
  agent.store({random_obs(rng), 0.1, -1.0, random_obs(rng), false});
  const auto stats = agent.update();
  ASSERT_TRUE(stats.has_value());
  EXPECT_TRUE(std::isfinite(stats->critic1_loss));
  EXPECT_TRUE(std::isfinite(stats->actor_loss));
}

// One-step bandit with reward -|a - target|: the deterministic action should
// settle near the target.
TEST(SacAgent, LearnsOneStepBandit) {
  SacHyperparams hp;
  hp.hidden_layers = {32, 32};
  hp.batch_size = 64;
  hp.exploration_steps = 0;
  hp.learning_rate = 0.003;
  hp.temperature = 0.05;
  const double target = 0.3;
  SacAgent agent(hp, 7);
  Observation o{};
  o[0] = 1.0;
  std::size_t updates = 0;
  while (updates < 2000) {
    const double a = agent.select_action(o, ActionMode::Stochastic);
    agent.store({o, a, -std::abs(a - target), o, true});
    if (agent.update()) ++updates;
  }
  EXPECT_NEAR(agent.deterministic_action(o), target, 0.1);
}

TEST(Train, FrozenRunLeavesAgentUntouched) {
  const auto c = small_community();
  DistrictEnv env(c);
  SacAgent agent(small_hp(), 8);
  const SacAgent before = agent;
  const auto r = train(agent, env, 1, 1, false);
  EXPECT_TRUE(same_params(agent.actor(), before.actor()));
  EXPECT_TRUE(same_params(agent.critic1(), before.critic1()));
  EXPECT_EQ(agent.buffer().size(), 0u);
  EXPECT_EQ(agent.step_count(), 0u);
  EXPECT_EQ(r.net_kwh.size(), c.horizon());
  EXPECT_EQ(r.trace.front().building_id, "2");
}

TEST(Train, ExplorationFollowsReferenceRule) {
  const auto c = small_community(2);
  DistrictEnv env(c);
  SacHyperparams hp = small_hp();
  hp.exploration_steps = 1000;  // whole run is guided
  SacAgent agent(hp, 9);
  const auto r = train(agent, env, 0, 1, true);
  DistrictEnv env2(c);
  const auto ref = simulate_all(single_building(c, 0), {}, rbc_policy(RbcStrategy::tou_peak_reduction()));
  for (std::size_t h = 0; h < c.horizon(); ++h) EXPECT_DOUBLE_EQ(r.net_kwh[h], ref[0].net_kwh[h]);
  EXPECT_EQ(agent.step_count(), c.horizon());
}

TEST(Train, SeededRunsAreReproducible) {
  const auto c = small_community();
  DistrictEnv e1(c), e2(c);
  SacAgent a1(small_hp(), 10), a2(small_hp(), 10);
  const auto r1 = train(a1, e1, 0, 2, true);
  const auto r2 = train(a2, e2, 0, 2, true);
  EXPECT_EQ(r1.episode_rewards, r2.episode_rewards);
  EXPECT_EQ(r1.net_kwh, r2.net_kwh);
  EXPECT_TRUE(same_params(a1.actor(), a2.actor()));
}

TEST(Transfer, CopiesNetworksAndSkipsExploration) {
  const auto c = small_community();
  DistrictEnv env(c);
  SacAgent source(small_hp(), 11);
  train(source, env, 0, 1, true);
  SacAgent target(small_hp(), 12);
  transfer_policy(source, target);
  EXPECT_EQ(target.buffer().size(), 0u);
  EXPECT_FALSE(target.exploring());
  std::mt19937_64 rng(12);
  for (int i = 0; i < 20; ++i) {
    const auto o = random_obs(rng);
    EXPECT_EQ(target.deterministic_action(o), source.deterministic_action(o));
  }
  // Learning on other data moves the target away from the source.
  for (int i = 0; i < 16; ++i) target.store({random_obs(rng), 0.5, -2.0, random_obs(rng), false});
  ASSERT_TRUE(target.update().has_value());
  EXPECT_FALSE(same_params(target.actor(), source.actor()));
}

TEST(Transfer, ArchitectureMismatchRejected) {
  SacHyperparams wide = small_hp();
  wide.hidden_layers = {32, 32};
  SacAgent a(small_hp(), 1), b(wide, 2);
  EXPECT_THROW(transfer_policy(a, b), std::invalid_argument);
}

TEST(SacAgent, JsonRoundTripPreservesPolicy) {
  SacAgent agent(small_hp(), 13);
  const SacAgent back = SacAgent::from_json(nlohmann::json(agent));
  std::mt19937_64 rng(13);
  for (int i = 0; i < 10; ++i) {
    const auto o = random_obs(rng);
    EXPECT_EQ(back.deterministic_action(o), agent.deterministic_action(o));
  }
  EXPECT_EQ(back.hyperparams().hidden_layers, agent.hyperparams().hidden_layers);
}

TEST(SacHyperparams, Validation) {
  SacHyperparams hp;
  hp.gamma = 1.5;
  EXPECT_THROW(hp.validate(), std::invalid_argument);
  hp = {};
  hp.hidden_layers.clear();
  EXPECT_THROW(hp.validate(), std::invalid_argument);
  hp = {};
  const auto back = nlohmann::json(hp).get<SacHyperparams>();
  EXPECT_EQ(back.exploration_steps, 3671u);
  EXPECT_EQ(back.batch_size, 256u);
}
