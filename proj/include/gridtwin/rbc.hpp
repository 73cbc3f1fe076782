#pragma once

// Expert rule-based battery strategies and the protocol that picks the
// reference strategy by comparing simulated and measured battery energy.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridtwin/data.hpp"
#include "gridtwin/devices.hpp"

namespace gridtwin {

enum class RbcVariant { SelfConsumption, TouPeakReduction, TouRateOptimization };

inline std::string to_string(RbcVariant v) {
  switch (v) {
    case RbcVariant::SelfConsumption: return "self-consumption";
    case RbcVariant::TouPeakReduction: return "tou-peak-reduction";
    case RbcVariant::TouRateOptimization: return "tou-rate-optimization";
  }
  return "?";
}

inline RbcVariant parse_rbc_variant(const std::string& s) {
  for (auto v : {RbcVariant::SelfConsumption, RbcVariant::TouPeakReduction, RbcVariant::TouRateOptimization})
    if (s == to_string(v)) return v;
  throw std::invalid_argument("unknown RBC variant '" + s + "'");
}

struct RbcStrategy {
  RbcVariant variant{RbcVariant::TouPeakReduction};
  int charge_start_hour{9};
  int charge_end_hour{12};  // exclusive; may wrap past midnight
  int discharge_start_hour{18};
  int discharge_end_hour{24};  // exclusive
  double charge_kwh_per_hour{0.0};  // 0 = capacity / window length
  double discharge_kwh_per_hour{2.0};  // 0 = power rating

  /// Charge 9:00-12:00, discharge from 18:00 at a constant 2 kW until the floor.
  static RbcStrategy tou_peak_reduction() { return {RbcVariant::TouPeakReduction, 9, 12, 18, 24, 0.0, 2.0}; }
  /// Charge from 19:00 (first full hour after 18:30) at up to 4.5 kW until
  /// noon, then discharge at the power rating until the floor.
  static RbcStrategy tou_rate_optimization() { return {RbcVariant::TouRateOptimization, 19, 12, 12, 19, 4.5, 0.0}; }
  /// Charge from net export, discharge into net import.
  static RbcStrategy self_consumption() { return {RbcVariant::SelfConsumption, 0, 0, 0, 0, 0.0, 0.0}; }

  static RbcStrategy of(RbcVariant v) {
    switch (v) {
      case RbcVariant::SelfConsumption: return self_consumption();
      case RbcVariant::TouPeakReduction: return tou_peak_reduction();
      case RbcVariant::TouRateOptimization: return tou_rate_optimization();
    }
    return tou_peak_reduction();
  }

  void validate(const BatterySpec& spec) const {
    auto in_day = [](int h) { return h >= 0 && h <= 24; };
    if (!in_day(charge_start_hour) || !in_day(charge_end_hour) || !in_day(discharge_start_hour) ||
        !in_day(discharge_end_hour))
      throw std::invalid_argument("RBC windows must lie within [0, 24]");
    if (charge_kwh_per_hour > spec.power_kw || discharge_kwh_per_hour > spec.power_kw)
      throw std::invalid_argument("RBC rates exceed the battery power rating");
  }
};

namespace detail {
inline bool in_window(int hour, int first, int end) {
  if (first == end) return false;
  return first < end ? (hour >= first && hour < end) : (hour >= first || hour < end);
}
inline int window_length(int first, int end) { return first < end ? end - first : 24 - first + end; }
}  // namespace detail

/// Action (fraction of capacity) the strategy takes at `hour`. `net_export_kwh`
/// is PV generation minus non-shiftable load for the hour.
inline double rbc_action(const RbcStrategy& s, int hour, double net_export_kwh, const BatteryState& state) {
  if (hour < 0 || hour >= 24) throw std::invalid_argument("hour must be in [0, 24)");
  const BatterySpec& spec = state.spec;
  const double cap = spec.capacity_kwh;
  const bool at_floor = state.stored_kwh <= spec.floor_kwh() + 1e-12;
  const bool full = state.stored_kwh >= cap - 1e-12;
  double energy = 0.0;

  switch (s.variant) {
    case RbcVariant::SelfConsumption:
      if (net_export_kwh > 0.0) {
        if (!full) energy = net_export_kwh;
      } else if (!at_floor) {
        energy = net_export_kwh;
      }
      break;
    case RbcVariant::TouPeakReduction:
    case RbcVariant::TouRateOptimization:
      if (detail::in_window(hour, s.charge_start_hour, s.charge_end_hour)) {
        if (!full) {
          double rate = s.charge_kwh_per_hour > 0.0
                            ? s.charge_kwh_per_hour
                            : cap / detail::window_length(s.charge_start_hour, s.charge_end_hour);
          if (s.variant == RbcVariant::TouRateOptimization)
            rate = std::min(rate, (cap - state.stored_kwh) / spec.one_way_efficiency());
          energy = rate;
        }
      } else if (detail::in_window(hour, s.discharge_start_hour, s.discharge_end_hour)) {
        if (!at_floor) energy = -(s.discharge_kwh_per_hour > 0.0 ? s.discharge_kwh_per_hour : spec.power_kw);
      }
      break;
  }
  return std::clamp(energy / cap, -1.0, 1.0);
}

/// Residual statistics of simulated minus measured battery energy over the
/// days kept by the mask.
struct RbcErrorStats {
  std::vector<double> residuals;
  double rmse{0.0};
  double median{0.0};
  double variance{0.0};
  std::size_t excluded_days{0};
  bool empty{true};
};

inline double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<long>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  double m = *mid;
  if (v.size() % 2 == 0) m = 0.5 * (m + *std::max_element(v.begin(), mid));
  return m;
}

inline RbcErrorStats validate_rbc(const HourlySeries& simulated, const HourlySeries& measured,
                                  const std::vector<bool>& keep_day) {
  if (simulated.size() != measured.size()) throw SchemaError("validate_rbc: series lengths differ");
  if (keep_day.size() * 24 != simulated.size()) throw SchemaError("validate_rbc: day mask does not match series");
  RbcErrorStats s;
  for (std::size_t d = 0; d < keep_day.size(); ++d) {
    if (!keep_day[d]) {
      ++s.excluded_days;
      continue;
    }
    for (std::size_t h = 24 * d; h < 24 * d + 24; ++h) s.residuals.push_back(simulated[h] - measured[h]);
  }
  s.empty = s.residuals.empty();
  if (s.empty) return s;
  const double n = static_cast<double>(s.residuals.size());
  double sum = 0.0, sq = 0.0;
  for (double r : s.residuals) {
    sum += r;
    sq += r * r;
  }
  const double mean = sum / n;
  s.rmse = std::sqrt(sq / n);
  s.variance = std::max(0.0, sq / n - mean * mean);
  s.median = median_of(s.residuals);
  return s;
}

/// Community-level error of one strategy: residuals pooled across buildings.
struct CommunityError {
  RbcVariant variant{};
  double rmse{0.0};
  double variance{0.0};
};

inline CommunityError aggregate_error(RbcVariant v, const std::vector<RbcErrorStats>& per_building) {
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (const auto& s : per_building)
    for (double r : s.residuals) {
      sum += r;
      sq += r * r;
      ++n;
    }
  if (n == 0) return {v, std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity()};
  const double mean = sum / static_cast<double>(n);
  return {v, std::sqrt(sq / static_cast<double>(n)), std::max(0.0, sq / static_cast<double>(n) - mean * mean)};
}

/// Strategy minimizing pooled community RMSE; ties go to lower variance, then
/// to declaration order of RbcVariant.
inline RbcStrategy select_reference_rbc(const std::map<RbcVariant, std::vector<RbcErrorStats>>& stats) {
  if (stats.empty()) throw std::invalid_argument("select_reference_rbc: no candidate strategies");
  std::optional<CommunityError> best;
  for (const auto& [variant, per_building] : stats) {
    const auto e = aggregate_error(variant, per_building);
    if (!best || e.rmse < best->rmse || (e.rmse == best->rmse && e.variance < best->variance)) best = e;
  }
  return RbcStrategy::of(best->variant);
}

/// Validation report: per building, per strategy error summary.
inline nlohmann::json validation_report(
    const std::vector<std::string>& building_ids,
    const std::map<RbcVariant, std::vector<RbcErrorStats>>& stats) {
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t b = 0; b < building_ids.size(); ++b) {
    nlohmann::json jb = nlohmann::json::object();
    for (const auto& [variant, per_building] : stats) {
      const auto& s = per_building.at(b);
      jb[to_string(variant)] = {{"rmse", s.rmse},
                                {"median", s.median},
                                {"variance", s.variance},
                                {"excluded_days", s.excluded_days},
                                {"empty", s.empty}};
    }
    j[building_ids[b]] = jb;
  }
  return j;
}

}  // namespace gridtwin
