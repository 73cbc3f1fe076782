#pragma once

// Experiment orchestration: the three deployment strategies (DS.1 own-data
// training, DS.2 full-year transfer, DS.3 five-month transfer), the
// hyperparameter and reward grid searches, and report emission.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridtwin/community.hpp"
#include "gridtwin/env.hpp"
#include "gridtwin/kpi.hpp"
#include "gridtwin/rbc.hpp"
#include "gridtwin/sac.hpp"
#include "gridtwin/synthetic.hpp"

namespace gridtwin {

enum class Strategy { DS1, DS2, DS3 };

NLOHMANN_JSON_SERIALIZE_ENUM(Strategy, {{Strategy::DS1, "ds1"}, {Strategy::DS2, "ds2"}, {Strategy::DS3, "ds3"}})

inline Strategy parse_strategy(const std::string& s) {
  if (s == "ds1") return Strategy::DS1;
  if (s == "ds2") return Strategy::DS2;
  if (s == "ds3") return Strategy::DS3;
  throw std::invalid_argument("unknown strategy '" + s + "'");
}

/// Hour window [first, first + length) of the community horizon.
struct Window {
  std::size_t first{0};
  std::size_t length{0};
  friend bool operator==(const Window&, const Window&) = default;
};

inline void to_json(nlohmann::json& j, const Window& w) { j = {w.first, w.length}; }
inline void from_json(const nlohmann::json& j, Window& w) { w = {j.at(0).get<std::size_t>(), j.at(1).get<std::size_t>()}; }

inline void to_json(nlohmann::json& j, const SyntheticCommunityConfig& c) {
  j["buildings"] = nlohmann::json::array();
  for (const auto& b : c.buildings)
    j["buildings"].push_back(
        {{"mean_daily_load_kwh", b.mean_daily_load_kwh}, {"peak_hour", b.peak_hour}, {"pv_capacity_kw", b.pv_capacity_kw}});
  j["days"] = c.days;
  j["start"] = format_timestamp(c.start);
  j["diurnal_amplitude"] = c.diurnal_amplitude;
  j["seasonal_amplitude"] = c.seasonal_amplitude;
  j["noise"] = c.noise;
  j["seed"] = c.seed;
  j["battery"] = c.battery;
}

inline void from_json(const nlohmann::json& j, SyntheticCommunityConfig& c) {
  const SyntheticCommunityConfig d{};
  if (j.contains("buildings")) {
    c.buildings.clear();
    for (const auto& jb : j["buildings"])
      c.buildings.push_back({jb.value("mean_daily_load_kwh", 14.0), jb.value("peak_hour", 19.0),
                             jb.value("pv_capacity_kw", 4.0)});
  } else if (j.contains("building_count")) {
    c.buildings = SyntheticCommunityConfig::varied(j["building_count"].get<std::size_t>()).buildings;
  }
  c.days = j.value("days", d.days);
  c.start = j.contains("start") ? parse_timestamp(j["start"].get<std::string>()) : d.start;
  c.diurnal_amplitude = j.value("diurnal_amplitude", d.diurnal_amplitude);
  c.seasonal_amplitude = j.value("seasonal_amplitude", d.seasonal_amplitude);
  c.noise = j.value("noise", d.noise);
  c.seed = j.value("seed", d.seed);
  if (j.contains("battery")) c.battery = j["battery"].get<BatterySpec>();
}

struct ExperimentConfig {
  std::optional<std::filesystem::path> manifest;  // measured community; synthetic when empty
  SyntheticCommunityConfig synthetic{SyntheticCommunityConfig::varied(6)};
  Strategy strategy{Strategy::DS1};
  std::optional<Window> training_window;  // default: whole horizon (DS.1/DS.2), first 5/12 (DS.3)
  std::optional<Window> transfer_window;  // default: whole horizon (DS.2), remainder (DS.3)
  std::vector<std::uint64_t> seeds{0};
  SacHyperparams hyper{};
  RewardParams reward{};
  RbcVariant reference_rbc{RbcVariant::TouPeakReduction};
  std::vector<std::size_t> buildings;  // subset of building indices; empty = all
  std::size_t days{0};                 // truncate the horizon to whole days; 0 = keep
  std::size_t jobs{1};
  std::string scale{"full"};
  std::filesystem::path output_dir{"gridtwin-out"};

  void validate() const {
    if (seeds.empty()) throw std::invalid_argument("experiment needs at least one seed");
    hyper.validate();
    reward.validate();
  }
};

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j["community"] = c.manifest ? nlohmann::json{{"manifest", c.manifest->string()}}
                              : nlohmann::json{{"synthetic", c.synthetic}};
  j["strategy"] = c.strategy;
  if (c.training_window) j["training_window"] = *c.training_window;
  if (c.transfer_window) j["transfer_window"] = *c.transfer_window;
  j["seeds"] = c.seeds;
  j["hyperparams"] = c.hyper;
  j["reward"] = c.reward;
  j["reference_rbc"] = to_string(c.reference_rbc);
  j["buildings"] = c.buildings;
  j["days"] = c.days;
  j["jobs"] = c.jobs;
  j["scale"] = c.scale;
  j["output_dir"] = c.output_dir.string();
}

inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  const ExperimentConfig d{};
  c = d;
  if (j.contains("community")) {
    const auto& jc = j["community"];
    if (jc.contains("manifest")) c.manifest = jc["manifest"].get<std::string>();
    if (jc.contains("synthetic")) c.synthetic = jc["synthetic"].get<SyntheticCommunityConfig>();
  }
  c.strategy = j.value("strategy", d.strategy);
  if (j.contains("training_window")) c.training_window = j["training_window"].get<Window>();
  if (j.contains("transfer_window")) c.transfer_window = j["transfer_window"].get<Window>();
  c.seeds = j.value("seeds", d.seeds);
  if (j.contains("hyperparams")) c.hyper = j["hyperparams"].get<SacHyperparams>();
  if (j.contains("reward")) c.reward = j["reward"].get<RewardParams>();
  if (j.contains("reference_rbc")) c.reference_rbc = parse_rbc_variant(j["reference_rbc"].get<std::string>());
  c.buildings = j.value("buildings", d.buildings);
  c.days = j.value("days", d.days);
  c.jobs = j.value("jobs", d.jobs);
  c.scale = j.value("scale", d.scale);
  c.output_dir = j.value("output_dir", d.output_dir.string());
}

inline constexpr std::size_t kFullYearHours = 8760;

/// Shrinks an experiment for quick runs. "full" leaves it unchanged, "ci"
/// runs 90 days with at most four buildings and 64-wide networks, "tiny"
/// runs 14 days with two buildings, 16-wide networks and two episodes.
/// Exploration steps scale with the horizon.
inline void apply_scale(ExperimentConfig& cfg, const std::string& scale) {
  cfg.scale = scale;
  std::size_t days = 0, max_buildings = 0;
  if (scale == "full") return;
  if (scale == "ci") {
    days = 90;
    max_buildings = 4;
    cfg.hyper.hidden_layers = {64, 64};
  } else if (scale == "tiny") {
    days = 14;
    max_buildings = 2;
    cfg.hyper.hidden_layers = {16, 16};
    cfg.hyper.batch_size = 32;
    cfg.hyper.episodes = 2;
  } else {
    throw std::invalid_argument("unknown scale '" + scale + "' (expected full, ci or tiny)");
  }
  cfg.days = days;
  if (!cfg.manifest) {
    cfg.synthetic.days = days;
    if (cfg.synthetic.buildings.size() > max_buildings) cfg.synthetic.buildings.resize(max_buildings);
  } else if (cfg.buildings.empty() || cfg.buildings.size() > max_buildings) {
    cfg.buildings.clear();
    for (std::size_t b = 0; b < max_buildings; ++b) cfg.buildings.push_back(b);
  }
  cfg.hyper.exploration_steps = static_cast<std::size_t>(
      std::lround(static_cast<double>(cfg.hyper.exploration_steps) * static_cast<double>(days * 24) / kFullYearHours));
}

/// Loads or synthesizes the community, then applies the building subset and
/// horizon truncation of the config.
inline Community load_experiment_community(const ExperimentConfig& cfg) {
  Community c = cfg.manifest ? load_community(*cfg.manifest) : generate_synthetic_community(cfg.synthetic);
  if (!cfg.buildings.empty()) {
    std::vector<BuildingDataset> subset;
    for (std::size_t b : cfg.buildings) {
      if (b >= c.buildings.size()) throw std::invalid_argument("building index " + std::to_string(b) + " out of range");
      subset.push_back(c.buildings[b]);
    }
    c.buildings = std::move(subset);
  }
  if (cfg.days > 0 && cfg.days * 24 < c.horizon()) c = c.window(0, cfg.days * 24);
  return c;
}

inline Community single_building(const Community& c, std::size_t b) {
  Community out{{c.buildings.at(b)}, c.tariff, c.carbon, c.weather};
  return out;
}

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. Each index is an
/// independent job; the first exception is rethrown.
template <class Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn&& fn) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < std::min(jobs, n); ++t)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

inline std::uint64_t lane_seed(std::uint64_t seed, std::uint64_t lane) {
  // splitmix64 finalizer
  std::uint64_t z = seed * 0x9E3779B97F4A7C15ULL + lane + 1;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Result of running one controller through one building's episode.
struct EpisodeRun {
  std::vector<double> net_kwh;
  std::vector<double> battery_kwh;
  std::vector<TraceRow> trace;
  double reward_sum{0.0};
};

using Policy = std::function<double(const DistrictEnv& env, std::size_t building, const Observation& obs)>;

inline EpisodeRun run_controller(DistrictEnv& env, std::size_t b, const Policy& policy) {
  EpisodeRun run;
  std::vector<double> actions(env.building_count(), 0.0);
  Observation o = env.reset()[b];
  const auto& id = env.community().buildings.at(b).id;
  while (!env.done()) {
    const std::size_t h = env.hour();
    const double a = policy(env, b, o);
    actions[b] = a;
    const auto step = env.step(actions);
    const auto& r = step.buildings[b];
    run.net_kwh.push_back(r.net_kwh);
    run.battery_kwh.push_back(r.battery_kwh);
    run.trace.push_back({h, id, a, r.battery_kwh, r.soc, r.net_kwh, r.reward});
    run.reward_sum += r.reward;
    o = r.observation;
  }
  return run;
}

inline Policy no_battery_policy() {
  return [](const DistrictEnv&, std::size_t, const Observation&) { return 0.0; };
}

inline Policy rbc_policy(const RbcStrategy& s) {
  return [s](const DistrictEnv& env, std::size_t b, const Observation&) {
    const std::size_t h = env.hour();
    const auto& bd = env.community().buildings[b];
    return rbc_action(s, env.hour_of_day(h), bd.pv_generation[h] - bd.non_shiftable[h], env.battery(b));
  };
}

inline Policy sac_policy(const SacAgent& agent) {
  return [&agent](const DistrictEnv&, std::size_t, const Observation& o) { return agent.deterministic_action(o); };
}

/// Simulates every building of `c` under the policy, one independent lane
/// per building.
inline std::vector<EpisodeRun> simulate_all(const Community& c, const RewardParams& reward, const Policy& policy,
                                            std::size_t jobs = 1) {
  std::vector<EpisodeRun> runs(c.buildings.size());
  parallel_for(c.buildings.size(), jobs, [&](std::size_t b) {
    DistrictEnv env(single_building(c, b), reward);
    runs[b] = run_controller(env, 0, policy);
  });
  return runs;
}

inline std::vector<std::string> building_ids(const Community& c) {
  std::vector<std::string> ids;
  for (const auto& b : c.buildings) ids.push_back(b.id);
  return ids;
}

inline KpiReport kpis_of(const Community& c, const std::vector<EpisodeRun>& runs) {
  std::vector<std::vector<double>> net;
  for (const auto& r : runs) net.push_back(r.net_kwh);
  const auto rates = c.tariff.rates(c.start(), c.horizon());
  return evaluate_kpis(building_ids(c), net, rates, c.carbon.kg_per_kwh.values);
}

struct ArmResult {
  std::string name;
  KpiReport raw;
  NormalizedReport normalized;
  std::vector<EpisodeRun> runs;  // per building
};

inline ArmResult make_arm(std::string name, const Community& c, std::vector<EpisodeRun> runs, const KpiReport& baseline) {
  ArmResult arm{std::move(name), kpis_of(c, runs), {}, std::move(runs)};
  arm.normalized = normalize(arm.raw, baseline);
  return arm;
}

/// One (source, target) cell of a transfer matrix, scored on the target alone.
struct TransferCell {
  std::size_t source{0};
  std::size_t target{0};
  KpiValues raw;
  KpiValues normalized;
  double reward_sum{0.0};
  EpisodeRun run;
};

struct SeedResult {
  std::uint64_t seed{0};
  std::vector<ArmResult> arms;
  std::vector<std::vector<double>> episode_rewards;  // per building, training episodes
  std::vector<TransferCell> matrix;                  // DS.2 / DS.3 only
  std::vector<nlohmann::json> policies;              // per source building

  const ArmResult& arm(const std::string& name) const {
    for (const auto& a : arms)
      if (a.name == name) return a;
    throw std::out_of_range("no arm named " + name);
  }
};

struct RunResult {
  ExperimentConfig config;
  std::vector<std::string> building_ids;
  Window training_window;
  Window evaluation_window;
  std::vector<SeedResult> seeds;
};

/// Agents trained on their own buildings over a window, ready for deployment.
struct TrainedSources {
  std::uint64_t seed{0};
  Window window;
  std::vector<SacAgent> agents;
  std::vector<ObservationBounds> bounds;
  std::vector<std::vector<double>> episode_rewards;
};

inline TrainedSources train_sources(const ExperimentConfig& cfg, const Community& c, Window window,
                                    std::uint64_t seed) {
  const Community train_data = c.window(window.first, window.length);
  const RbcStrategy reference = RbcStrategy::of(cfg.reference_rbc);
  const std::size_t n = c.buildings.size();
  TrainedSources out;
  out.seed = seed;
  out.window = window;
  out.episode_rewards.resize(n);
  out.bounds.resize(n);
  std::vector<std::optional<SacAgent>> agents(n);
  parallel_for(n, cfg.jobs, [&](std::size_t b) {
    DistrictEnv env(single_building(train_data, b), cfg.reward);
    SacAgent agent(cfg.hyper, lane_seed(seed, b));
    out.episode_rewards[b] = train(agent, env, 0, cfg.hyper.episodes, true, reference).episode_rewards;
    out.bounds[b] = env.bounds(0);
    agents[b] = std::move(agent);
  });
  for (auto& a : agents) out.agents.push_back(std::move(*a));
  return out;
}

inline nlohmann::json policy_file(const SacAgent& agent, const ObservationBounds& bounds, const std::string& building,
                                  Window window, std::uint64_t seed) {
  nlohmann::json j = agent;
  j["format"] = "gridtwin-policy/1";
  j["bounds"] = bounds;
  j["provenance"] = {{"source_building", building}, {"window", window}, {"seed", seed}};
  return j;
}

namespace detail {

inline EpisodeRun deterministic_run(const Community& c, std::size_t b, const RewardParams& reward,
                                    const SacAgent& agent, const ObservationBounds& bounds) {
  DistrictEnv env(single_building(c, b), reward);
  env.set_bounds(0, bounds);
  return run_controller(env, 0, sac_policy(agent));
}

// Deploys a copy of `agent` on building `b` of `c` for one learning episode.
inline EpisodeRun learning_run(const Community& c, std::size_t b, const RewardParams& reward, SacAgent agent,
                               const ObservationBounds& bounds, const RbcStrategy& reference) {
  DistrictEnv env(single_building(c, b), reward);
  env.set_bounds(0, bounds);
  auto tr = train(agent, env, 0, 1, true, reference);
  EpisodeRun run;
  run.net_kwh = std::move(tr.net_kwh);
  run.battery_kwh = std::move(tr.battery_kwh);
  run.trace = std::move(tr.trace);
  run.reward_sum = tr.episode_rewards.front();
  return run;
}

inline KpiValues single_building_kpis(const Community& c, std::size_t b, const std::vector<double>& net) {
  const auto rates = c.tariff.rates(c.start(), c.horizon());
  const auto r = evaluate_kpis({c.buildings[b].id}, {net}, rates, c.carbon.kg_per_kwh.values);
  KpiValues v = r.district;
  return v;
}

inline std::vector<TransferCell> transfer_matrix(const ExperimentConfig& cfg, const Community& eval,
                                                 const TrainedSources& sources, const ArmResult& baseline) {
  const std::size_t n = eval.buildings.size();
  const RbcStrategy reference = RbcStrategy::of(cfg.reference_rbc);
  std::vector<TransferCell> cells(n * n);
  parallel_for(n * n, cfg.jobs, [&](std::size_t k) {
    const std::size_t s = k / n, t = k % n;
    SacAgent target(cfg.hyper, lane_seed(sources.seed, 1000 + k));
    transfer_policy(sources.agents[s], target);
    TransferCell cell{s, t, {}, {}, 0.0, learning_run(eval, t, cfg.reward, std::move(target), sources.bounds[s], reference)};
    cell.reward_sum = cell.run.reward_sum;
    cell.raw = single_building_kpis(eval, t, cell.run.net_kwh);
    cell.normalized = normalize(cell.raw, single_building_kpis(eval, t, baseline.runs[t].net_kwh));
    cells[k] = std::move(cell);
  });
  return cells;
}

}  // namespace detail

inline std::vector<ArmResult> reference_arms(const ExperimentConfig& cfg, const Community& eval) {
  std::vector<ArmResult> arms;
  auto base_runs = simulate_all(eval, cfg.reward, no_battery_policy(), cfg.jobs);
  const KpiReport base_kpis = kpis_of(eval, base_runs);
  arms.push_back(make_arm("baseline", eval, std::move(base_runs), base_kpis));
  arms.push_back(make_arm("rbc", eval, simulate_all(eval, cfg.reward, rbc_policy(RbcStrategy::of(cfg.reference_rbc)), cfg.jobs),
                          base_kpis));
  return arms;
}

/// DS.1 deployment of already trained agents: one deterministic, frozen
/// episode per building over the evaluation window.
inline SeedResult evaluate_ds1(const ExperimentConfig& cfg, const Community& c, const TrainedSources& sources,
                               Window eval_window) {
  const Community eval = c.window(eval_window.first, eval_window.length);
  SeedResult r;
  r.seed = sources.seed;
  r.episode_rewards = sources.episode_rewards;
  r.arms = reference_arms(cfg, eval);
  std::vector<EpisodeRun> runs(eval.buildings.size());
  parallel_for(runs.size(), cfg.jobs, [&](std::size_t b) {
    runs[b] = detail::deterministic_run(eval, b, cfg.reward, sources.agents[b], sources.bounds[b]);
  });
  r.arms.push_back(make_arm("sac", eval, std::move(runs), r.arms.front().raw));
  for (std::size_t b = 0; b < eval.buildings.size(); ++b)
    r.policies.push_back(policy_file(sources.agents[b], sources.bounds[b], eval.buildings[b].id, sources.window, sources.seed));
  return r;
}

/// DS.2-style transfer of trained agents: every source deployed on every
/// target for one learning episode over the evaluation window. Also scores
/// each source's own deterministic policy as the "sac-native" arm.
inline SeedResult evaluate_transfer(const ExperimentConfig& cfg, const Community& c, const TrainedSources& sources,
                                    Window eval_window) {
  if (c.buildings.size() < 2) throw std::invalid_argument("transfer experiments need at least two buildings");
  const Community eval = c.window(eval_window.first, eval_window.length);
  SeedResult r = evaluate_ds1(cfg, c, sources, eval_window);
  r.arms.back().name = "sac-native";
  r.matrix = detail::transfer_matrix(cfg, eval, sources, r.arms.front());
  return r;
}

inline Window full_window(const Community& c) { return {0, c.horizon()}; }

/// First 5/12 of the horizon, rounded up to whole days.
inline Window ds3_training_window(const Community& c) {
  const std::size_t days = c.horizon() / 24;
  const std::size_t train_days = (days * 5 + 11) / 12;
  return {0, train_days * 24};
}

inline RunResult run_ds1(const ExperimentConfig& cfg) {
  cfg.validate();
  const Community c = load_experiment_community(cfg);
  RunResult out{cfg, building_ids(c), cfg.training_window.value_or(full_window(c)),
                cfg.transfer_window.value_or(full_window(c)), {}};
  for (auto seed : cfg.seeds)
    out.seeds.push_back(evaluate_ds1(cfg, c, train_sources(cfg, c, out.training_window, seed), out.evaluation_window));
  return out;
}

inline RunResult run_ds2(const ExperimentConfig& cfg) {
  cfg.validate();
  const Community c = load_experiment_community(cfg);
  if (c.buildings.size() < 2) throw std::invalid_argument("DS.2 needs at least two buildings");
  RunResult out{cfg, building_ids(c), cfg.training_window.value_or(full_window(c)),
                cfg.transfer_window.value_or(full_window(c)), {}};
  for (auto seed : cfg.seeds)
    out.seeds.push_back(
        evaluate_transfer(cfg, c, train_sources(cfg, c, out.training_window, seed), out.evaluation_window));
  return out;
}

/// DS.3: sources train on the first five months; the remaining months are
/// the evaluation window. The "sac-own" arm keeps learning on each
/// building's own agent; the matrix transfers every source to every target.
inline RunResult run_ds3(const ExperimentConfig& cfg) {
  cfg.validate();
  const Community c = load_experiment_community(cfg);
  if (c.buildings.size() < 2) throw std::invalid_argument("DS.3 needs at least two buildings");
  const Window train_w = cfg.training_window.value_or(ds3_training_window(c));
  const Window eval_w = cfg.transfer_window.value_or(Window{train_w.first + train_w.length,
                                                            c.horizon() - train_w.first - train_w.length});
  if (train_w.length < cfg.hyper.exploration_steps)
    throw std::invalid_argument("DS.3 training window (" + std::to_string(train_w.length) +
                                " h) is shorter than the exploration phase (" +
                                std::to_string(cfg.hyper.exploration_steps) + " steps)");
  if (eval_w.length < 48 || eval_w.length % 24 != 0)
    throw std::invalid_argument("DS.3 evaluation window must cover at least two whole days");
  RunResult out{cfg, building_ids(c), train_w, eval_w, {}};
  const Community eval = c.window(eval_w.first, eval_w.length);
  const RbcStrategy reference = RbcStrategy::of(cfg.reference_rbc);
  for (auto seed : cfg.seeds) {
    const TrainedSources sources = train_sources(cfg, c, train_w, seed);
    SeedResult r;
    r.seed = seed;
    r.episode_rewards = sources.episode_rewards;
    r.arms = reference_arms(cfg, eval);
    std::vector<EpisodeRun> own(eval.buildings.size());
    parallel_for(own.size(), cfg.jobs, [&](std::size_t b) {
      own[b] = detail::learning_run(eval, b, cfg.reward, sources.agents[b], sources.bounds[b], reference);
    });
    r.arms.push_back(make_arm("sac-own", eval, std::move(own), r.arms.front().raw));
    r.matrix = detail::transfer_matrix(cfg, eval, sources, r.arms.front());
    for (std::size_t b = 0; b < eval.buildings.size(); ++b)
      r.policies.push_back(policy_file(sources.agents[b], sources.bounds[b], eval.buildings[b].id, train_w, seed));
    out.seeds.push_back(std::move(r));
  }
  return out;
}

inline RunResult run_experiment(const ExperimentConfig& cfg) {
  switch (cfg.strategy) {
    case Strategy::DS1: return run_ds1(cfg);
    case Strategy::DS2: return run_ds2(cfg);
    case Strategy::DS3: return run_ds3(cfg);
  }
  throw std::invalid_argument("unknown strategy");
}

// ---------------------------------------------------------------------------
// Grid searches

struct GridAxis {
  std::string name;
  std::vector<double> values;
};

struct GridSearchSpec {
  std::vector<GridAxis> axes;
  std::size_t repetitions{3};

  /// Decay rate, discount, learning rate and temperature candidates.
  static GridSearchSpec default_hyper() {
    return {{{"tau", {0.0005, 0.005, 0.05}},
             {"gamma", {0.90, 0.95, 0.99}},
             {"learning_rate", {0.00005, 0.0005, 0.005}},
             {"temperature", {0.2, 0.5, 0.8}}},
            3};
  }

  /// Reward exponents and price weight (the emission weight is 1 - w1).
  static GridSearchSpec default_reward() {
    return {{{"e1", {1, 2, 3}}, {"e2", {1, 2, 3}}, {"w1", {0.0, 0.25, 0.5, 0.75, 1.0}}}, 3};
  }

  std::size_t cell_count() const {
    std::size_t n = 1;
    for (const auto& a : axes) n *= a.values.size();
    return n;
  }

  /// Axis values of cell `k` in row-major order (last axis fastest).
  std::vector<double> cell(std::size_t k) const {
    std::vector<double> v(axes.size());
    for (std::size_t i = axes.size(); i-- > 0;) {
      v[i] = axes[i].values[k % axes[i].values.size()];
      k /= axes[i].values.size();
    }
    return v;
  }

  void validate(const std::vector<std::string>& allowed) const {
    if (axes.empty()) throw std::invalid_argument("grid search needs at least one axis");
    if (repetitions == 0) throw std::invalid_argument("grid search needs at least one repetition");
    for (const auto& a : axes) {
      if (a.values.empty()) throw std::invalid_argument("grid axis '" + a.name + "' is empty");
      if (std::find(allowed.begin(), allowed.end(), a.name) == allowed.end())
        throw std::invalid_argument("unsupported grid axis '" + a.name + "'");
    }
  }
};

inline SacHyperparams with_axes(SacHyperparams hp, const GridSearchSpec& spec, const std::vector<double>& v) {
  for (std::size_t i = 0; i < spec.axes.size(); ++i) {
    const auto& n = spec.axes[i].name;
    if (n == "tau") hp.tau = v[i];
    else if (n == "gamma") hp.gamma = v[i];
    else if (n == "learning_rate") hp.learning_rate = v[i];
    else if (n == "temperature") hp.temperature = v[i];
  }
  return hp;
}

inline RewardParams with_axes(RewardParams p, const GridSearchSpec& spec, const std::vector<double>& v) {
  for (std::size_t i = 0; i < spec.axes.size(); ++i) {
    const auto& n = spec.axes[i].name;
    if (n == "e1") p.e1 = v[i];
    else if (n == "e2") p.e2 = v[i];
    else if (n == "w1") {
      p.w1 = v[i];
      p.w2 = 1.0 - v[i];
    }
  }
  return p;
}

/// Final-episode reward sum of one training run.
using HyperTrainer = std::function<double(const SacHyperparams&, std::size_t building, std::uint64_t seed)>;

struct HyperCellResult {
  SacHyperparams params;
  std::vector<double> mean_reward;  // per building, averaged over repetitions
};

struct HyperSearchResult {
  std::vector<HyperCellResult> cells;
  std::vector<std::size_t> best_cell;  // per building
  SacHyperparams selected;             // per-axis mode of the building winners
};

/// Most frequent value; ties go to the value listed first on the axis.
inline double axis_mode(const std::vector<double>& winners, const std::vector<double>& axis) {
  double best = axis.front();
  std::size_t best_count = 0;
  for (double v : axis) {
    const auto count = static_cast<std::size_t>(std::count(winners.begin(), winners.end(), v));
    if (count > best_count) {
      best = v;
      best_count = count;
    }
  }
  return best;
}

inline HyperSearchResult hyperparameter_grid_search(const GridSearchSpec& spec, const SacHyperparams& base,
                                                    std::size_t building_count, const std::vector<std::uint64_t>& seeds,
                                                    const HyperTrainer& trainer, std::size_t jobs = 1) {
  spec.validate({"tau", "gamma", "learning_rate", "temperature"});
  if (building_count == 0) throw std::invalid_argument("grid search needs at least one building");
  if (seeds.size() < spec.repetitions) throw std::invalid_argument("grid search needs one seed per repetition");
  const std::size_t cells = spec.cell_count();
  HyperSearchResult out;
  out.cells.resize(cells);
  std::vector<double> sums(cells * building_count * spec.repetitions);
  parallel_for(sums.size(), jobs, [&](std::size_t k) {
    const std::size_t rep = k % spec.repetitions;
    const std::size_t b = (k / spec.repetitions) % building_count;
    const std::size_t cell = k / (spec.repetitions * building_count);
    sums[k] = trainer(with_axes(base, spec, spec.cell(cell)), b, seeds[rep]);
  });
  for (std::size_t cell = 0; cell < cells; ++cell) {
    out.cells[cell].params = with_axes(base, spec, spec.cell(cell));
    out.cells[cell].mean_reward.assign(building_count, 0.0);
    for (std::size_t b = 0; b < building_count; ++b) {
      double s = 0.0;
      for (std::size_t rep = 0; rep < spec.repetitions; ++rep) s += sums[(cell * building_count + b) * spec.repetitions + rep];
      out.cells[cell].mean_reward[b] = s / static_cast<double>(spec.repetitions);
    }
  }
  std::vector<std::vector<double>> winners(spec.axes.size());
  for (std::size_t b = 0; b < building_count; ++b) {
    std::size_t best = 0;
    for (std::size_t cell = 1; cell < cells; ++cell)
      if (out.cells[cell].mean_reward[b] > out.cells[best].mean_reward[b]) best = cell;
    out.best_cell.push_back(best);
    const auto v = spec.cell(best);
    for (std::size_t i = 0; i < v.size(); ++i) winners[i].push_back(v[i]);
  }
  std::vector<double> mode(spec.axes.size());
  for (std::size_t i = 0; i < spec.axes.size(); ++i) mode[i] = axis_mode(winners[i], spec.axes[i].values);
  out.selected = with_axes(base, spec, mode);
  return out;
}

/// Normalized district (C, G) of one training run.
struct PriceEmission {
  double price{0.0};
  double emissions{0.0};
};
using RewardTrainer = std::function<PriceEmission(const RewardParams&, std::uint64_t seed)>;

struct RewardCellResult {
  RewardParams params;
  double price{0.0};
  double emissions{0.0};
  double mean() const { return 0.5 * (price + emissions); }
};

struct RewardSearchResult {
  std::vector<RewardCellResult> cells;
  std::size_t best{0};
  RewardParams selected;
};

/// Selects the cell minimizing (C + G) / 2, ties broken by lower G.
inline RewardSearchResult reward_grid_search(const GridSearchSpec& spec, const std::vector<std::uint64_t>& seeds,
                                             const RewardTrainer& trainer, std::size_t jobs = 1) {
  spec.validate({"e1", "e2", "w1"});
  if (seeds.size() < spec.repetitions) throw std::invalid_argument("grid search needs one seed per repetition");
  const std::size_t cells = spec.cell_count();
  std::vector<PriceEmission> runs(cells * spec.repetitions);
  parallel_for(runs.size(), jobs, [&](std::size_t k) {
    runs[k] = trainer(with_axes(RewardParams{}, spec, spec.cell(k / spec.repetitions)), seeds[k % spec.repetitions]);
  });
  RewardSearchResult out;
  for (std::size_t cell = 0; cell < cells; ++cell) {
    RewardCellResult r{with_axes(RewardParams{}, spec, spec.cell(cell))};
    for (std::size_t rep = 0; rep < spec.repetitions; ++rep) {
      r.price += runs[cell * spec.repetitions + rep].price;
      r.emissions += runs[cell * spec.repetitions + rep].emissions;
    }
    r.price /= static_cast<double>(spec.repetitions);
    r.emissions /= static_cast<double>(spec.repetitions);
    out.cells.push_back(r);
  }
  for (std::size_t cell = 1; cell < cells; ++cell) {
    const auto& c = out.cells[cell];
    const auto& b = out.cells[out.best];
    if (c.mean() < b.mean() || (c.mean() == b.mean() && c.emissions < b.emissions)) out.best = cell;
  }
  out.selected = out.cells[out.best].params;
  return out;
}

/// Trainer that runs SAC on one building of `c` and reports the final
/// training episode's reward sum.
inline HyperTrainer make_hyper_trainer(const Community& c, const ExperimentConfig& cfg) {
  return [c, cfg](const SacHyperparams& hp, std::size_t b, std::uint64_t seed) {
    DistrictEnv env(single_building(c, b), cfg.reward);
    SacAgent agent(hp, lane_seed(seed, b));
    return train(agent, env, 0, hp.episodes, true, RbcStrategy::of(cfg.reference_rbc)).episode_rewards.back();
  };
}

/// Trainer that runs SAC on every building of `c` with the given reward and
/// scores the final training episode's district C and G against the
/// no-battery baseline.
inline RewardTrainer make_reward_trainer(const Community& c, const ExperimentConfig& cfg) {
  const KpiReport baseline = kpis_of(c, simulate_all(c, cfg.reward, no_battery_policy()));
  return [c, cfg, baseline](const RewardParams& reward, std::uint64_t seed) {
    std::vector<EpisodeRun> runs(c.buildings.size());
    for (std::size_t b = 0; b < c.buildings.size(); ++b) {
      DistrictEnv env(single_building(c, b), reward);
      SacAgent agent(cfg.hyper, lane_seed(seed, b));
      auto tr = train(agent, env, 0, cfg.hyper.episodes, true, RbcStrategy::of(cfg.reference_rbc));
      runs[b].net_kwh = std::move(tr.net_kwh);
    }
    const auto norm = normalize(kpis_of(c, runs), baseline);
    return PriceEmission{norm.district[Kpi::C].value_or(NAN), norm.district[Kpi::G].value_or(NAN)};
  };
}

// ---------------------------------------------------------------------------
// Reports

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string config_hash(const ExperimentConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(nlohmann::json(cfg).dump())));
  return buf;
}

/// Mean net consumption per hour of day for each building of an arm.
inline std::vector<std::array<double, 24>> daily_profiles(const ArmResult& arm, TimePoint start) {
  std::vector<std::array<double, 24>> out;
  const int first_hour = calendar_fields(start).hour;
  for (const auto& run : arm.runs) {
    std::array<double, 24> sum{}, count{};
    for (std::size_t h = 0; h < run.net_kwh.size(); ++h) {
      const std::size_t hod = (static_cast<std::size_t>(first_hour) + h) % 24;
      sum[hod] += run.net_kwh[h];
      count[hod] += 1.0;
    }
    for (std::size_t k = 0; k < 24; ++k) sum[k] = count[k] > 0 ? sum[k] / count[k] : 0.0;
    out.push_back(sum);
  }
  return out;
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + p.string());
}

enum class ReportFormat { Json, Csv, Both };

/// Writes kpis/, traces/, policies/ and manifest.json under `dir`.
inline void emit_report(const RunResult& result, const std::filesystem::path& dir, ReportFormat format = ReportFormat::Both,
                        TimePoint start = default_start()) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "kpis");
  fs::create_directories(dir / "traces");
  fs::create_directories(dir / "policies");
  const bool json = format != ReportFormat::Csv, csv_out = format != ReportFormat::Json;
  const auto& ids = result.building_ids;

  for (const auto& sr : result.seeds) {
    const std::string prefix = "seed" + std::to_string(sr.seed) + "_";
    std::string profiles = "arm,building,hour,mean_net_kWh\n";
    for (const auto& arm : sr.arms) {
      if (json) write_text(dir / "kpis" / (prefix + arm.name + ".json"), kpi_report_json(arm.raw, &arm.normalized).dump(2));
      if (csv_out) write_text(dir / "kpis" / (prefix + arm.name + ".csv"), kpi_report_csv(arm.raw, &arm.normalized));
      std::vector<TraceRow> rows;
      for (const auto& run : arm.runs) rows.insert(rows.end(), run.trace.begin(), run.trace.end());
      write_trace(dir / "traces" / (prefix + arm.name + ".csv"), rows);
      const auto prof = daily_profiles(arm, start);
      for (std::size_t b = 0; b < prof.size(); ++b)
        for (std::size_t h = 0; h < 24; ++h)
          profiles += arm.name + "," + ids.at(b) + "," + std::to_string(h) + "," + format_optional(prof[b][h]) + "\n";
    }
    write_text(dir / "kpis" / (prefix + "profiles.csv"), profiles);

    if (!sr.matrix.empty()) {
      std::string m = "source,target";
      for (Kpi k : kAllKpis) m += "," + kpi_name(k);
      for (Kpi k : kAllKpis) m += ",norm_" + kpi_name(k);
      m += ",reward_sum\n";
      nlohmann::json jm = nlohmann::json::array();
      for (const auto& cell : sr.matrix) {
        m += ids.at(cell.source) + "," + ids.at(cell.target);
        for (Kpi k : kAllKpis) m += "," + format_optional(cell.raw[k]);
        for (Kpi k : kAllKpis) m += "," + format_optional(cell.normalized[k]);
        m += "," + format_optional(cell.reward_sum) + "\n";
        jm.push_back({{"source", ids.at(cell.source)},
                      {"target", ids.at(cell.target)},
                      {"raw", to_json_row(cell.raw)},
                      {"normalized", to_json_row(cell.normalized)},
                      {"reward_sum", cell.reward_sum}});
      }
      if (csv_out) write_text(dir / "kpis" / (prefix + "transfer_matrix.csv"), m);
      if (json) write_text(dir / "kpis" / (prefix + "transfer_matrix.json"), jm.dump(2));
    }

    std::string rewards = "building,episode,reward_sum\n";
    for (std::size_t b = 0; b < sr.episode_rewards.size(); ++b)
      for (std::size_t e = 0; e < sr.episode_rewards[b].size(); ++e)
        rewards += ids.at(b) + "," + std::to_string(e) + "," + format_optional(sr.episode_rewards[b][e]) + "\n";
    write_text(dir / "kpis" / (prefix + "episode_rewards.csv"), rewards);

    for (std::size_t b = 0; b < sr.policies.size(); ++b)
      write_text(dir / "policies" / (prefix + "building_" + ids.at(b) + ".json"), sr.policies[b].dump());
  }

  nlohmann::json manifest;
  manifest["config"] = result.config;
  manifest["config_hash"] = config_hash(result.config);
  manifest["seeds"] = result.config.seeds;
  manifest["buildings"] = ids;
  manifest["training_window"] = result.training_window;
  manifest["evaluation_window"] = result.evaluation_window;
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

}  // namespace gridtwin
