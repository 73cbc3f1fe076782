#pragma once

// Flexibility KPIs. Building-level: consumption D, price C, emissions G and
// zero-net-energy Z. District-level, on the summed net series: average daily
// peak P, ramping R and one minus load factor. All are "lower is better" and
// are usually reported relative to a no-battery baseline.

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace gridtwin {

inline void require_same_length(std::span<const double> a, std::span<const double> b, const char* what) {
  if (a.size() != b.size()) throw std::invalid_argument(std::string(what) + ": series lengths differ");
}

/// D: sum of non-negative hourly net consumption.
inline double kpi_consumption(std::span<const double> net) {
  double d = 0.0;
  for (double e : net) d += std::max(0.0, e);
  return d;
}

/// C: sum of non-negative hourly net cost.
inline double kpi_price(std::span<const double> net, std::span<const double> rates) {
  require_same_length(net, rates, "kpi_price");
  double c = 0.0;
  for (std::size_t h = 0; h < net.size(); ++h) c += std::max(0.0, net[h] * rates[h]);
  return c;
}

/// G: sum of non-negative hourly emissions.
inline double kpi_emissions(std::span<const double> net, std::span<const double> intensity) {
  require_same_length(net, intensity, "kpi_emissions");
  double g = 0.0;
  for (std::size_t h = 0; h < net.size(); ++h) g += std::max(0.0, net[h] * intensity[h]);
  return g;
}

/// Z: signed sum of net consumption.
inline double kpi_zne(std::span<const double> net) {
  double z = 0.0;
  for (double e : net) z += e;
  return z;
}

/// P: mean of the daily maxima. A trailing partial day counts as its own
/// day, with the maximum over the hours it has.
inline double kpi_avg_daily_peak(std::span<const double> district) {
  if (district.empty()) throw std::invalid_argument("kpi_avg_daily_peak: empty series");
  double total = 0.0;
  std::size_t days = 0;
  for (std::size_t first = 0; first < district.size(); first += 24, ++days) {
    const auto slice = district.subspan(first, std::min<std::size_t>(24, district.size() - first));
    total += *std::max_element(slice.begin(), slice.end());
  }
  return total / static_cast<double>(days);
}

/// R: sum of absolute hour-to-hour changes, starting at the second hour.
inline double kpi_ramping(std::span<const double> district) {
  if (district.size() < 2) throw std::invalid_argument("kpi_ramping: need at least two hours");
  double r = 0.0;
  for (std::size_t h = 1; h < district.size(); ++h) r += std::abs(district[h] - district[h - 1]);
  return r;
}

inline constexpr std::size_t kLoadFactorBlock = 730;

struct LoadFactorResult {
  std::optional<double> value;        // nullopt when every block was skipped
  std::vector<std::size_t> skipped;  // blocks whose peak was not positive
};

/// 1 - L: mean over 730-hour blocks of (1 - block mean / block max). A
/// trailing partial block counts as its own block; blocks with a
/// non-positive maximum are skipped and reported.
inline LoadFactorResult kpi_one_minus_load_factor(std::span<const double> district) {
  if (district.empty()) throw std::invalid_argument("kpi_one_minus_load_factor: empty series");
  LoadFactorResult out;
  double total = 0.0;
  std::size_t used = 0;
  for (std::size_t first = 0, block = 0; first < district.size(); first += kLoadFactorBlock, ++block) {
    const std::size_t len = std::min(kLoadFactorBlock, district.size() - first);
    const auto slice = district.subspan(first, len);
    const double peak = *std::max_element(slice.begin(), slice.end());
    if (!(peak > 0.0)) {
      out.skipped.push_back(block);
      continue;
    }
    double sum = 0.0;
    for (double e : slice) sum += e;
    total += 1.0 - (sum / static_cast<double>(len)) / peak;
    ++used;
  }
  if (used > 0) out.value = total / static_cast<double>(used);
  return out;
}

enum class Kpi { D, C, G, Z, P, R, OneMinusL };
inline constexpr std::array<Kpi, 7> kAllKpis{Kpi::D, Kpi::C, Kpi::G, Kpi::Z, Kpi::P, Kpi::R, Kpi::OneMinusL};

inline std::string kpi_name(Kpi k) {
  static constexpr const char* names[] = {"D", "C", "G", "Z", "P", "R", "1-L"};
  return names[static_cast<int>(k)];
}

/// The seven KPI values; an empty entry means undefined.
struct KpiValues {
  std::array<std::optional<double>, 7> values{};

  std::optional<double>& operator[](Kpi k) { return values[static_cast<std::size_t>(k)]; }
  const std::optional<double>& operator[](Kpi k) const { return values[static_cast<std::size_t>(k)]; }
};

struct BuildingKpis {
  std::string id;
  double D{0.0}, C{0.0}, G{0.0}, Z{0.0};
};

inline BuildingKpis building_kpis(std::string id, std::span<const double> net, std::span<const double> rates,
                                  std::span<const double> intensity) {
  return {std::move(id), kpi_consumption(net), kpi_price(net, rates), kpi_emissions(net, intensity), kpi_zne(net)};
}

struct KpiReport {
  std::vector<BuildingKpis> buildings;
  KpiValues district;         // D, C, G, Z as building means; P, R, 1-L on the summed series
  double district_series_z{0.0};  // Z of the summed series, for reference
  std::vector<std::size_t> skipped_load_factor_blocks;

  /// Building row as KpiValues (P, R, 1-L left empty).
  KpiValues building_values(std::size_t i) const {
    KpiValues v;
    const auto& b = buildings.at(i);
    v[Kpi::D] = b.D;
    v[Kpi::C] = b.C;
    v[Kpi::G] = b.G;
    v[Kpi::Z] = b.Z;
    return v;
  }
};

/// Averages building KPIs and evaluates grid KPIs on the summed district series.
inline KpiReport district_aggregate(std::vector<BuildingKpis> buildings, std::span<const double> district_net) {
  if (buildings.empty()) throw std::invalid_argument("district_aggregate: no buildings");
  KpiReport r;
  r.buildings = std::move(buildings);
  const double n = static_cast<double>(r.buildings.size());
  double d = 0, c = 0, g = 0, z = 0;
  for (const auto& b : r.buildings) {
    d += b.D;
    c += b.C;
    g += b.G;
    z += b.Z;
  }
  r.district[Kpi::D] = d / n;
  r.district[Kpi::C] = c / n;
  r.district[Kpi::G] = g / n;
  r.district[Kpi::Z] = z / n;
  r.district_series_z = kpi_zne(district_net);
  r.district[Kpi::P] = kpi_avg_daily_peak(district_net);
  r.district[Kpi::R] = kpi_ramping(district_net);
  const auto lf = kpi_one_minus_load_factor(district_net);
  r.district[Kpi::OneMinusL] = lf.value;
  r.skipped_load_factor_blocks = lf.skipped;
  return r;
}

/// Full report from per-building net series.
inline KpiReport evaluate_kpis(const std::vector<std::string>& ids, const std::vector<std::vector<double>>& net,
                               std::span<const double> rates, std::span<const double> intensity) {
  if (ids.size() != net.size() || net.empty()) throw std::invalid_argument("evaluate_kpis: bad building set");
  std::vector<BuildingKpis> rows;
  std::vector<double> district(net.front().size(), 0.0);
  for (std::size_t b = 0; b < net.size(); ++b) {
    require_same_length(net[b], district, "evaluate_kpis");
    rows.push_back(building_kpis(ids[b], net[b], rates, intensity));
    for (std::size_t h = 0; h < district.size(); ++h) district[h] += net[b][h];
  }
  return district_aggregate(std::move(rows), district);
}

/// Elementwise control / baseline; entries with a zero or undefined
/// baseline (or undefined control) come back empty.
inline KpiValues normalize(const KpiValues& control, const KpiValues& baseline) {
  KpiValues out;
  for (std::size_t i = 0; i < out.values.size(); ++i) {
    const auto& c = control.values[i];
    const auto& b = baseline.values[i];
    if (c && b && *b != 0.0) out.values[i] = *c / *b;
  }
  return out;
}

struct NormalizedReport {
  std::vector<KpiValues> buildings;
  KpiValues district;
};

inline NormalizedReport normalize(const KpiReport& control, const KpiReport& baseline) {
  if (control.buildings.size() != baseline.buildings.size())
    throw std::invalid_argument("normalize: building counts differ");
  NormalizedReport out;
  for (std::size_t i = 0; i < control.buildings.size(); ++i)
    out.buildings.push_back(normalize(control.building_values(i), baseline.building_values(i)));
  out.district = normalize(control.district, baseline.district);
  return out;
}

inline nlohmann::json to_json_row(const KpiValues& v) {
  nlohmann::json j = nlohmann::json::object();
  for (Kpi k : kAllKpis) j[kpi_name(k)] = v[k] ? nlohmann::json(*v[k]) : nlohmann::json(nullptr);
  return j;
}

/// JSON rows {building | district} with raw and normalized values.
inline nlohmann::json kpi_report_json(const KpiReport& raw, const NormalizedReport* normalized) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < raw.buildings.size(); ++i) {
    nlohmann::json row{{"name", raw.buildings[i].id}, {"raw", to_json_row(raw.building_values(i))}};
    if (normalized) row["normalized"] = to_json_row(normalized->buildings.at(i));
    rows.push_back(row);
  }
  nlohmann::json d{{"name", "district"}, {"raw", to_json_row(raw.district)}, {"district_series_Z", raw.district_series_z}};
  if (normalized) d["normalized"] = to_json_row(normalized->district);
  if (!raw.skipped_load_factor_blocks.empty()) d["skipped_load_factor_blocks"] = raw.skipped_load_factor_blocks;
  rows.push_back(d);
  return rows;
}

inline std::string format_optional(const std::optional<double>& v) {
  if (!v) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", *v);
  return buf;
}

/// CSV: name, seven raw columns, seven normalized columns.
inline std::string kpi_report_csv(const KpiReport& raw, const NormalizedReport* normalized) {
  std::string out = "name";
  for (Kpi k : kAllKpis) out += "," + kpi_name(k);
  for (Kpi k : kAllKpis) out += ",norm_" + kpi_name(k);
  out += '\n';
  auto row = [&](const std::string& name, const KpiValues& r, const KpiValues* n) {
    out += name;
    for (Kpi k : kAllKpis) out += "," + format_optional(r[k]);
    for (Kpi k : kAllKpis) out += "," + (n ? format_optional((*n)[k]) : std::string());
    out += '\n';
  };
  for (std::size_t i = 0; i < raw.buildings.size(); ++i)
    row(raw.buildings[i].id, raw.building_values(i), normalized ? &normalized->buildings[i] : nullptr);
  row("district", raw.district, normalized ? &normalized->district : nullptr);
  return out;
}

}  // namespace gridtwin
