// gridtwin command-line tool.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "gridtwin/gridtwin.hpp"

namespace fs = std::filesystem;
using namespace gridtwin;
using nlohmann::json;

namespace {

// Bad user input that should produce usage text and exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct GlobalOptions {
  std::string config;
  std::string manifest;
  std::vector<std::uint64_t> seeds;
  std::string scale;
  std::size_t jobs{0};
  std::string out;
};

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw std::runtime_error(p.string() + ": " + e.what());
  }
}

ExperimentConfig make_config(const GlobalOptions& g) {
  ExperimentConfig cfg;
  if (!g.config.empty()) {
    try {
      cfg = read_json(g.config).get<ExperimentConfig>();
    } catch (const json::exception& e) {
      throw UsageError(g.config + ": " + e.what());
    }
    // Relative manifest paths resolve against the config file.
    if (cfg.manifest && cfg.manifest->is_relative()) cfg.manifest = fs::path(g.config).parent_path() / *cfg.manifest;
  }
  if (!g.manifest.empty()) cfg.manifest = g.manifest;
  if (!g.seeds.empty()) cfg.seeds = g.seeds;
  if (g.jobs > 0) cfg.jobs = g.jobs;
  try {
    if (!g.scale.empty()) apply_scale(cfg, g.scale);
    else if (cfg.scale != "full") apply_scale(cfg, cfg.scale);
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return cfg;
}

fs::path output_root(const GlobalOptions& g, const ExperimentConfig& cfg) {
  if (!g.out.empty()) return g.out;
  if (const char* env = std::getenv("GRIDTWIN_OUT"); env && *env) return env;
  return cfg.output_dir;
}

void print_kpi_table(const KpiReport& raw, const NormalizedReport* norm) {
  std::printf("%-12s", "name");
  for (Kpi k : kAllKpis) std::printf(" %12s", kpi_name(k).c_str());
  std::printf("\n");
  auto row = [](const std::string& name, const KpiValues& v) {
    std::printf("%-12s", name.c_str());
    for (Kpi k : kAllKpis) v[k] ? std::printf(" %12.6g", *v[k]) : std::printf(" %12s", "-");
    std::printf("\n");
  };
  for (std::size_t i = 0; i < raw.buildings.size(); ++i)
    row(raw.buildings[i].id, norm ? norm->buildings[i] : raw.building_values(i));
  row("district", norm ? norm->district : raw.district);
}

void write_kpis(const fs::path& stem, const KpiReport& raw, const NormalizedReport* norm) {
  write_text(stem.string() + ".json", kpi_report_json(raw, norm).dump(2) + "\n");
  write_text(stem.string() + ".csv", kpi_report_csv(raw, norm));
}

// --- synth -----------------------------------------------------------------

int cmd_synth(const GlobalOptions& g, std::size_t buildings, std::size_t days, std::optional<double> noise) {
  ExperimentConfig cfg = make_config(g);
  SyntheticCommunityConfig sc = cfg.synthetic;
  if (buildings > 0) sc.buildings = SyntheticCommunityConfig::varied(buildings, sc.seed).buildings;
  if (days > 0) sc.days = days;
  if (noise) sc.noise = *noise;
  if (!g.seeds.empty()) sc.seed = g.seeds.front();
  try {
    sc.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const fs::path dir = output_root(g, cfg);
  const fs::path manifest = save_community(generate_synthetic_community(sc), dir);
  std::cout << "wrote " << manifest.string() << " (" << sc.buildings.size() << " buildings, " << sc.days * 24
            << " h)\n";
  return 0;
}

// --- ingest ----------------------------------------------------------------

int cmd_ingest(const GlobalOptions& g) {
  if (g.manifest.empty() && g.config.empty()) throw UsageError("ingest needs --manifest or --config");
  const ExperimentConfig cfg = make_config(g);
  if (!cfg.manifest) throw UsageError("the config does not name a community manifest");
  const Community c = load_community(*cfg.manifest);
  c.validate();
  std::cout << "community " << cfg.manifest->string() << ": " << c.buildings.size() << " buildings, " << c.horizon()
            << " h from " << format_timestamp(c.start()) << ", tariff " << c.tariff.name() << "\n";
  for (const auto& b : c.buildings) {
    double load = 0.0, pv = 0.0;
    for (std::size_t h = 0; h < b.non_shiftable.size(); ++h) {
      load += b.non_shiftable[h];
      pv += b.pv_generation[h];
    }
    std::printf("  %-10s load %10.1f kWh  pv %10.1f kWh  battery %.1f kWh / %.1f kW\n", b.id.c_str(), load, pv,
                b.battery.capacity_kwh, b.battery.power_kw);
  }
  return 0;
}

// --- simulate --------------------------------------------------------------

struct ControllerSpec {
  std::string label;
  std::optional<RbcStrategy> rbc;
  std::optional<fs::path> policy;
};

ControllerSpec parse_controller(const std::string& s) {
  if (s == "none") return {"none", std::nullopt, std::nullopt};
  if (s.rfind("rbc:", 0) == 0) {
    try {
      const auto v = parse_rbc_variant(s.substr(4));
      return {"rbc-" + to_string(v), RbcStrategy::of(v), std::nullopt};
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  if (s.rfind("policy:", 0) == 0 && s.size() > 7) return {"policy", std::nullopt, fs::path(s.substr(7))};
  throw UsageError("controller must be none, rbc:<variant> or policy:<file>, got '" + s + "'");
}

int cmd_simulate(const GlobalOptions& g, const std::string& controller) {
  const ControllerSpec spec = parse_controller(controller);
  const ExperimentConfig cfg = make_config(g);
  const Community c = load_experiment_community(cfg);

  std::vector<EpisodeRun> runs;
  if (spec.rbc) {
    runs = simulate_all(c, cfg.reward, rbc_policy(*spec.rbc), cfg.jobs);
  } else if (spec.policy) {
    const json pj = read_json(*spec.policy);
    const SacAgent agent = SacAgent::from_json(pj);
    const auto bounds = pj.at("bounds").get<ObservationBounds>();
    runs.resize(c.buildings.size());
    parallel_for(runs.size(), cfg.jobs, [&](std::size_t b) {
      DistrictEnv env(single_building(c, b), cfg.reward);
      env.set_bounds(0, bounds);
      runs[b] = run_controller(env, 0, sac_policy(agent));
    });
  }
  const auto baseline_runs = simulate_all(c, cfg.reward, no_battery_policy(), cfg.jobs);
  if (!spec.rbc && !spec.policy) runs = baseline_runs;
  const KpiReport baseline = kpis_of(c, baseline_runs);
  const ArmResult arm = make_arm(spec.label, c, std::move(runs), baseline);

  const fs::path dir = output_root(g, cfg);
  fs::create_directories(dir / "traces");
  fs::create_directories(dir / "kpis");
  std::vector<TraceRow> rows;
  for (const auto& r : arm.runs) rows.insert(rows.end(), r.trace.begin(), r.trace.end());
  const fs::path trace = dir / "traces" / ("simulate_" + spec.label + ".csv");
  write_trace(trace, rows);
  write_kpis(dir / "kpis" / ("simulate_" + spec.label), arm.raw, &arm.normalized);
  std::cout << "controller " << spec.label << ", " << c.buildings.size() << " buildings, " << c.horizon()
            << " h; KPIs relative to no battery:\n";
  print_kpi_table(arm.raw, &arm.normalized);
  std::cout << "trace: " << trace.string() << "\n";
  return 0;
}

// --- train -----------------------------------------------------------------

int cmd_train(const GlobalOptions& g, const std::string& strategy) {
  ExperimentConfig cfg = make_config(g);
  if (!strategy.empty()) {
    try {
      cfg.strategy = parse_strategy(strategy);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
  }
  const fs::path dir = output_root(g, cfg);
  cfg.output_dir = dir;
  const RunResult result = run_experiment(cfg);
  const Community c = load_experiment_community(cfg);
  emit_report(result, dir, ReportFormat::Both, c.start() + std::chrono::hours(result.evaluation_window.first));
  for (const auto& sr : result.seeds) {
    std::cout << "seed " << sr.seed << ":\n";
    for (const auto& arm : sr.arms) {
      std::printf("  %-12s", arm.name.c_str());
      for (Kpi k : kAllKpis) {
        const auto& v = arm.normalized.district[k];
        v ? std::printf(" %s=%.4f", kpi_name(k).c_str(), *v) : std::printf(" %s=-", kpi_name(k).c_str());
      }
      std::printf("\n");
    }
  }
  std::cout << "report written to " << dir.string() << "\n";
  return 0;
}

// --- grid-search -----------------------------------------------------------

GridSearchSpec load_grid(const std::string& grid, bool hyper) {
  if (grid == "default") return hyper ? GridSearchSpec::default_hyper() : GridSearchSpec::default_reward();
  const json j = read_json(grid);
  GridSearchSpec spec;
  spec.repetitions = j.value("repetitions", std::size_t{3});
  for (const auto& [name, values] : j.at("axes").items()) spec.axes.push_back({name, values.get<std::vector<double>>()});
  return spec;
}

std::string join_values(const std::vector<double>& v) {
  std::string s;
  for (double x : v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", x);
    s += (s.empty() ? "" : " ") + std::string(buf);
  }
  return s;
}

int cmd_grid_search(const GlobalOptions& g, const std::string& kind, const std::string& grid, bool dry_run) {
  const bool hyper = kind == "hyper";
  if (!hyper && kind != "reward") throw UsageError("grid-search kind must be hyper or reward");
  GridSearchSpec spec;
  try {
    spec = load_grid(grid, hyper);
    spec.validate(hyper ? std::vector<std::string>{"tau", "gamma", "learning_rate", "temperature"}
                        : std::vector<std::string>{"e1", "e2", "w1"});
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  for (const auto& a : spec.axes) std::cout << a.name << ": " << join_values(a.values) << "\n";
  std::cout << "cells: " << spec.cell_count() << ", repetitions: " << spec.repetitions << "\n";
  if (dry_run) return 0;

  ExperimentConfig cfg = make_config(g);
  std::vector<std::uint64_t> seeds = cfg.seeds;
  while (seeds.size() < spec.repetitions) seeds.push_back(seeds.back() + 1);
  const Community c = load_experiment_community(cfg);
  const fs::path dir = output_root(g, cfg);
  fs::create_directories(dir);
  json out;
  out["config"] = cfg;
  out["axes"] = json::object();
  for (const auto& a : spec.axes) out["axes"][a.name] = a.values;
  if (hyper) {
    const auto r = hyperparameter_grid_search(spec, cfg.hyper, c.buildings.size(), seeds, make_hyper_trainer(c, cfg),
                                              cfg.jobs);
    out["cells"] = json::array();
    for (const auto& cell : r.cells) out["cells"].push_back({{"params", cell.params}, {"mean_reward", cell.mean_reward}});
    out["best_cell"] = r.best_cell;
    out["selected"] = r.selected;
    std::cout << "selected: " << json(r.selected).dump() << "\n";
  } else {
    const auto r = reward_grid_search(spec, seeds, make_reward_trainer(c, cfg), cfg.jobs);
    out["cells"] = json::array();
    for (const auto& cell : r.cells)
      out["cells"].push_back({{"params", cell.params}, {"C", cell.price}, {"G", cell.emissions}, {"mean", cell.mean()}});
    out["selected"] = r.selected;
    std::cout << "selected: " << json(r.selected).dump() << "\n";
  }
  const fs::path file = dir / ("grid_search_" + kind + ".json");
  write_text(file, out.dump(2) + "\n");
  std::cout << "results: " << file.string() << "\n";
  return 0;
}

// --- kpi -------------------------------------------------------------------

// Net series per building, in first-appearance order, from trace rows.
std::pair<std::vector<std::string>, std::vector<std::vector<double>>> series_of(
    const std::vector<TraceRow>& rows, bool subtract_battery, const std::string& source) {
  std::vector<std::string> ids;
  std::map<std::string, std::vector<double>> by_id;
  for (const auto& r : rows) {
    auto [it, inserted] = by_id.try_emplace(r.building_id);
    if (inserted) ids.push_back(r.building_id);
    if (r.h != it->second.size())
      throw SchemaError(source + ": hours of building " + r.building_id + " are not consecutive from 0");
    it->second.push_back(subtract_battery ? r.net_kwh - r.battery_kwh : r.net_kwh);
  }
  if (ids.empty()) throw SchemaError(source + ": empty trace");
  std::vector<std::vector<double>> net;
  for (const auto& id : ids) net.push_back(by_id[id]);
  return {ids, net};
}

int cmd_kpi(const GlobalOptions& g, const std::string& trace, const std::string& normalize_mode) {
  const ExperimentConfig cfg = make_config(g);
  const Community c = load_experiment_community(cfg);
  const auto rows = read_trace(trace);
  const auto [ids, net] = series_of(rows, false, trace);
  const std::size_t n = net.front().size();
  if (n > c.horizon()) throw SchemaError(trace + ": trace is longer than the community horizon");
  const auto rates = c.tariff.rates(c.start(), n);
  const std::span<const double> intensity(c.carbon.kg_per_kwh.values.data(), n);
  const KpiReport raw = evaluate_kpis(ids, net, rates, intensity);

  std::optional<NormalizedReport> norm;
  if (normalize_mode == "self") {
    const auto base = series_of(rows, true, trace);
    norm = normalize(raw, evaluate_kpis(base.first, base.second, rates, intensity));
  } else if (normalize_mode != "none") {
    const auto base = series_of(read_trace(normalize_mode), false, normalize_mode);
    if (base.first != ids) throw SchemaError("baseline trace covers different buildings");
    norm = normalize(raw, evaluate_kpis(base.first, base.second, rates, intensity));
  }
  print_kpi_table(raw, norm ? &*norm : nullptr);
  if (!g.out.empty() || std::getenv("GRIDTWIN_OUT")) {
    const fs::path dir = output_root(g, cfg);
    fs::create_directories(dir / "kpis");
    write_kpis(dir / "kpis" / fs::path(trace).stem(), raw, norm ? &*norm : nullptr);
  }
  return 0;
}

// --- report ----------------------------------------------------------------

int cmd_report(const std::string& run_dir) {
  const fs::path dir = run_dir;
  if (!fs::exists(dir / "manifest.json")) throw UsageError(run_dir + " is not a run directory (no manifest.json)");
  const json manifest = read_json(dir / "manifest.json");
  std::cout << "run " << dir.string() << " (config " << manifest.at("config_hash").get<std::string>() << ", strategy "
            << manifest.at("config").at("strategy").get<std::string>() << ")\n";
  std::string summary = "file,arm";
  for (Kpi k : kAllKpis) summary += ",norm_" + kpi_name(k);
  summary += "\n";
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir / "kpis"))
    if (e.path().extension() == ".json" && e.path().stem().string().find("transfer_matrix") == std::string::npos)
      files.push_back(e.path());
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    const json rows = read_json(f);
    for (const auto& row : rows) {
      if (row.at("name") != "district" || !row.contains("normalized")) continue;
      std::printf("%-36s", f.stem().string().c_str());
      summary += f.stem().string() + ",district";
      for (Kpi k : kAllKpis) {
        const auto& v = row["normalized"][kpi_name(k)];
        v.is_null() ? std::printf(" %s=-", kpi_name(k).c_str())
                    : std::printf(" %s=%.4f", kpi_name(k).c_str(), v.get<double>());
        summary += "," + (v.is_null() ? std::string() : format_optional(v.get<double>()));
      }
      std::printf("\n");
      summary += "\n";
    }
  }
  write_text(dir / "summary.csv", summary);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gridtwin: battery control and flexibility KPIs for PV+battery communities"};
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("--config", g.config, "experiment config (JSON)")->check(CLI::ExistingFile);
  app.add_option("--manifest", g.manifest, "community manifest (JSON)")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seeds, "random seed; repeat for several seeds");
  app.add_option("--scale", g.scale, "full, ci or tiny")->check(CLI::IsMember({"full", "ci", "tiny"}));
  app.add_option("--jobs", g.jobs, "parallel lanes")->check(CLI::PositiveNumber);
  app.add_option("--out", g.out, "output root (default: $GRIDTWIN_OUT or the config's output_dir)");

  auto* synth = app.add_subcommand("synth", "generate a synthetic community");
  std::size_t synth_buildings = 0, synth_days = 0;
  std::optional<double> synth_noise;
  synth->add_option("--buildings", synth_buildings, "building count");
  synth->add_option("--days", synth_days, "days to generate");
  synth->add_option("--noise", synth_noise, "lognormal load noise");

  auto* ingest = app.add_subcommand("ingest", "validate a community manifest and its CSVs");

  auto* simulate = app.add_subcommand("simulate", "run a controller over the community");
  std::string controller = "none";
  simulate->add_option("--controller", controller, "none | rbc:<variant> | policy:<file>");

  auto* train_cmd = app.add_subcommand("train", "train and evaluate SAC agents");
  std::string strategy;
  train_cmd->add_option("--strategy", strategy, "ds1 | ds2 | ds3")->check(CLI::IsMember({"ds1", "ds2", "ds3"}));

  auto* grid = app.add_subcommand("grid-search", "hyperparameter or reward grid search");
  std::string grid_kind, grid_file = "default";
  bool dry_run = false;
  grid->add_option("kind", grid_kind, "hyper | reward")->required()->check(CLI::IsMember({"hyper", "reward"}));
  grid->add_option("--grid", grid_file, "'default' or a JSON grid file");
  grid->add_flag("--dry-run", dry_run, "print the grid and exit");

  auto* kpi = app.add_subcommand("kpi", "score a trace");
  std::string trace_file, normalize_mode = "self";
  kpi->add_option("--trace", trace_file, "trace CSV")->required()->check(CLI::ExistingFile);
  kpi->add_option("--normalize", normalize_mode, "self | none | <baseline trace>");

  auto* report = app.add_subcommand("report", "summarize a run directory");
  std::string run_dir;
  report->add_option("--run", run_dir, "run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*synth) return cmd_synth(g, synth_buildings, synth_days, synth_noise);
    if (*ingest) return cmd_ingest(g);
    if (*simulate) return cmd_simulate(g, controller);
    if (*train_cmd) return cmd_train(g, strategy);
    if (*grid) return cmd_grid_search(g, grid_kind, grid_file, dry_run);
    if (*kpi) return cmd_kpi(g, trace_file, normalize_mode);
    if (*report) return cmd_report(run_dir);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
