#pragma once

// A community bundles the building datasets with the shared tariff, carbon
// intensity and weather series. This header also owns the on-disk formats:
// per-building CSV, carbon/weather CSVs and the JSON manifest tying them
// together.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridtwin/data.hpp"
#include "gridtwin/tariff.hpp"

namespace gridtwin {

struct Community {
  std::vector<BuildingDataset> buildings;
  Tariff tariff{};
  CarbonSeries carbon;
  WeatherSeries weather;

  std::size_t horizon() const { return buildings.empty() ? 0 : buildings.front().non_shiftable.size(); }
  TimePoint start() const { return buildings.empty() ? default_start() : buildings.front().non_shiftable.start; }

  void validate() const {
    if (buildings.empty()) throw SchemaError("community has no buildings");
    const std::size_t n = horizon();
    if (n == 0) throw SchemaError("community series are empty");
    for (const auto& b : buildings) {
      b.validate();
      if (b.non_shiftable.size() != n) throw SchemaError("building " + b.id + ": length differs from community horizon");
    }
    if (carbon.kg_per_kwh.size() != n) throw SchemaError("carbon series length differs from horizon");
    if (weather.direct_irradiance.size() != n) throw SchemaError("weather series length differs from horizon");
    for (std::size_t h = 0; h < n; ++h) {
      if (!std::isfinite(carbon.kg_per_kwh[h]) || carbon.kg_per_kwh[h] < 0.0)
        throw SchemaError("invalid carbon intensity at hour " + std::to_string(h));
      if (!std::isfinite(weather.direct_irradiance[h]) || weather.direct_irradiance[h] < 0.0)
        throw SchemaError("invalid irradiance at hour " + std::to_string(h));
    }
  }

  /// Community restricted to the hour window [first, first + length).
  Community window(std::size_t first, std::size_t length) const {
    if (first + length > horizon()) throw std::out_of_range("window exceeds community horizon");
    auto cut = [&](const HourlySeries& s) {
      return HourlySeries{{s.values.begin() + static_cast<long>(first),
                           s.values.begin() + static_cast<long>(first + length)},
                          s.time_at(first)};
    };
    Community out{{}, tariff, {cut(carbon.kg_per_kwh)}, {cut(weather.direct_irradiance)}};
    for (const auto& b : buildings) {
      BuildingDataset c = b;
      c.non_shiftable = cut(b.non_shiftable);
      c.pv_generation = cut(b.pv_generation);
      out.buildings.push_back(std::move(c));
    }
    return out;
  }
};

inline void to_json(nlohmann::json& j, const BatterySpec& s) {
  j = {{"capacity_kwh", s.capacity_kwh},
       {"power_kw", s.power_kw},
       {"round_trip_efficiency", s.round_trip_efficiency},
       {"depth_of_discharge", s.depth_of_discharge}};
}

inline void from_json(const nlohmann::json& j, BatterySpec& s) {
  const BatterySpec d{};
  s.capacity_kwh = j.value("capacity_kwh", d.capacity_kwh);
  s.power_kw = j.value("power_kw", d.power_kw);
  s.round_trip_efficiency = j.value("round_trip_efficiency", d.round_trip_efficiency);
  s.depth_of_discharge = j.value("depth_of_discharge", d.depth_of_discharge);
}

namespace csv {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;  // 1-based source line of each row

  std::size_t column(const std::string& name, const std::string& source) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw SchemaError(source + ": missing column '" + name + "'");
  }
};

inline std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

inline std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline Table read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open " + path.string());
  Table t;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    if (t.header.empty()) {
      t.header = split(line);
      continue;
    }
    t.rows.push_back(split(line));
    t.line_numbers.push_back(lineno);
  }
  if (t.header.empty()) throw SchemaError(path.string() + ": empty file");
  if (t.rows.empty()) throw SchemaError(path.string() + ": no data rows");
  return t;
}

/// Parses a finite number; returns false on garbage or NaN/inf.
inline bool parse_number(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size() && std::isfinite(out);
}

/// Reads a timestamp column plus numeric columns into hourly series. Every
/// offending row is listed in the thrown SchemaError.
inline std::vector<HourlySeries> read_hourly(const std::filesystem::path& path,
                                             const std::vector<std::string>& columns, bool non_negative) {
  const Table t = read(path);
  const std::string src = path.string();
  const std::size_t ts_col = t.column("timestamp", src);
  std::vector<std::size_t> cols;
  for (const auto& c : columns) cols.push_back(t.column(c, src));

  std::vector<HourlySeries> out(columns.size());
  std::vector<std::string> problems;
  TimePoint start{};
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::string where = "line " + std::to_string(t.line_numbers[r]);
    if (row.size() != t.header.size()) {
      problems.push_back(where + ": expected " + std::to_string(t.header.size()) + " fields");
      continue;
    }
    try {
      const TimePoint ts = parse_timestamp(row[ts_col]);
      if (r == 0)
        start = ts;
      else if (ts != start + std::chrono::hours{static_cast<long>(r)})
        problems.push_back(where + ": timestamp is not hourly-consecutive");
    } catch (const SchemaError& e) {
      problems.push_back(where + ": " + e.what());
    }
    for (std::size_t k = 0; k < cols.size(); ++k) {
      double v = 0.0;
      if (!parse_number(row[cols[k]], v))
        problems.push_back(where + ": " + columns[k] + " is not a finite number");
      else if (non_negative && v < 0.0)
        problems.push_back(where + ": " + columns[k] + " is negative");
      out[k].values.push_back(v);
    }
  }
  if (!problems.empty()) {
    std::string msg = src + ": " + std::to_string(problems.size()) + " invalid row(s)";
    for (std::size_t i = 0; i < problems.size() && i < 20; ++i) msg += "\n  " + problems[i];
    if (problems.size() > 20) msg += "\n  ...";
    throw SchemaError(msg);
  }
  for (auto& s : out) s.start = start;
  return out;
}

inline void write_hourly(const std::filesystem::path& path, const std::vector<std::string>& columns,
                         const std::vector<const HourlySeries*>& series) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "timestamp";
  for (const auto& c : columns) out << ',' << c;
  out << '\n';
  out.precision(17);
  const std::size_t n = series.front()->size();
  for (std::size_t h = 0; h < n; ++h) {
    out << format_timestamp(series.front()->time_at(h));
    for (const auto* s : series) out << ',' << (*s)[h];
    out << '\n';
  }
}

}  // namespace csv

inline BuildingDataset load_building_csv(const std::filesystem::path& path, std::string id) {
  auto cols = csv::read_hourly(path, {"non_shiftable_kWh", "pv_kWh"}, true);
  BuildingDataset b;
  b.id = std::move(id);
  b.non_shiftable = std::move(cols[0]);
  b.pv_generation = std::move(cols[1]);
  return b;
}

/// Loads a community manifest (JSON) and every file it references.
inline Community load_community(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw SchemaError("cannot open manifest " + manifest_path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(manifest_path.string() + ": " + e.what());
  }
  const auto dir = manifest_path.parent_path();
  Community c;
  try {
    if (j.contains("tariff")) {
      if (j["tariff"].is_string()) {
        std::ifstream tin(dir / j["tariff"].get<std::string>());
        if (!tin) throw SchemaError("cannot open tariff file");
        c.tariff = nlohmann::json::parse(tin).get<Tariff>();
      } else {
        c.tariff = j["tariff"].get<Tariff>();
      }
    }
    c.carbon.kg_per_kwh = csv::read_hourly(dir / j.at("carbon").get<std::string>(), {"kg_per_kWh"}, true)[0];
    c.weather.direct_irradiance = csv::read_hourly(dir / j.at("weather").get<std::string>(), {"dsi_wm2"}, true)[0];
    for (const auto& jb : j.at("buildings")) {
      BuildingDataset b = load_building_csv(dir / jb.at("file").get<std::string>(), jb.at("id").get<std::string>());
      if (jb.contains("battery")) b.battery = jb["battery"].get<BatterySpec>();
      b.pv_capacity_kw = jb.value("pv_capacity_kw", 0.0);
      c.buildings.push_back(std::move(b));
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(manifest_path.string() + ": " + e.what());
  }
  c.validate();
  return c;
}

/// Writes the community as a manifest plus CSV/JSON files under `dir`.
inline std::filesystem::path save_community(const Community& c, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json j;
  j["tariff"] = "tariff.json";
  j["carbon"] = "carbon.csv";
  j["weather"] = "weather.csv";
  j["buildings"] = nlohmann::json::array();
  {
    std::ofstream t(dir / "tariff.json");
    t << nlohmann::json(c.tariff).dump(2) << '\n';
  }
  csv::write_hourly(dir / "carbon.csv", {"kg_per_kWh"}, {&c.carbon.kg_per_kwh});
  csv::write_hourly(dir / "weather.csv", {"dsi_wm2"}, {&c.weather.direct_irradiance});
  for (const auto& b : c.buildings) {
    const std::string file = "building_" + b.id + ".csv";
    csv::write_hourly(dir / file, {"non_shiftable_kWh", "pv_kWh"}, {&b.non_shiftable, &b.pv_generation});
    j["buildings"].push_back({{"id", b.id}, {"file", file}, {"battery", b.battery}, {"pv_capacity_kw", b.pv_capacity_kw}});
  }
  const auto manifest = dir / "manifest.json";
  std::ofstream out(manifest);
  out << j.dump(2) << '\n';
  return manifest;
}

}  // namespace gridtwin
