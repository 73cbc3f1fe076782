#pragma once

// Time-series primitives for the district twin: minute power and hourly
// energy series, the power-to-energy resampler, non-shiftable load
// derivation and the low-activity day filter used for RBC validation.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "gridtwin/devices.hpp"

namespace gridtwin {

/// Raised for malformed input data (bad lengths, NaNs, missing columns).
class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using TimePoint = std::chrono::sys_seconds;

struct CalendarFields {
  int month{1};    // 1..12
  int weekday{0};  // 0 = Monday .. 6 = Sunday
  int hour{0};     // 0..23
  bool weekend() const { return weekday >= 5; }
};

inline CalendarFields calendar_fields(TimePoint t) {
  using namespace std::chrono;
  const auto day = floor<days>(t);
  const year_month_day ymd{day};
  const weekday wd{day};
  const auto since_midnight = duration_cast<hours>(t - day);
  return {static_cast<int>(static_cast<unsigned>(ymd.month())),
          static_cast<int>(wd.iso_encoding()) - 1, static_cast<int>(since_midnight.count())};
}

/// Parses `YYYY-MM-DDTHH:MM[:SS]` (a space separator is also accepted).
inline TimePoint parse_timestamp(std::string_view text) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
  const std::string buf(text);
  char sep = 0;
  const int n = std::sscanf(buf.c_str(), "%d-%d-%d%c%d:%d:%d", &y, &mo, &d, &sep, &h, &mi, &s);
  if (n < 3 || (n > 3 && n < 6) || (n >= 4 && sep != 'T' && sep != ' '))
    throw SchemaError("bad timestamp '" + buf + "'");
  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h < 0 || h > 23 || mi < 0 || mi > 59 || s < 0 || s > 59)
    throw SchemaError("bad timestamp '" + buf + "'");
  return sys_days{ymd} + hours{h} + minutes{mi} + seconds{s};
}

inline std::string format_timestamp(TimePoint t) {
  using namespace std::chrono;
  const auto day = floor<days>(t);
  const year_month_day ymd{day};
  const auto rest = t - day;
  const auto hh = duration_cast<hours>(rest);
  const auto mm = duration_cast<minutes>(rest - hh);
  const auto ss = duration_cast<seconds>(rest - hh - mm);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02d", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(hh.count()), static_cast<int>(mm.count()),
                static_cast<int>(ss.count()));
  return buf;
}

inline TimePoint default_start() { return parse_timestamp("2016-08-01T00:00:00"); }

/// Power samples in kW at one-minute resolution.
struct MinuteSeries {
  std::vector<double> values;
  TimePoint start{default_start()};
};

/// Energy samples in kWh at hourly resolution.
struct HourlySeries {
  std::vector<double> values;
  TimePoint start{default_start()};

  std::size_t size() const { return values.size(); }
  double operator[](std::size_t h) const { return values[h]; }
  TimePoint time_at(std::size_t h) const { return start + std::chrono::hours{static_cast<long>(h)}; }
};

/// Hourly carbon intensity, kg CO2e per kWh.
struct CarbonSeries {
  HourlySeries kg_per_kwh;
};

/// Hourly direct solar irradiance, W/m2.
struct WeatherSeries {
  HourlySeries direct_irradiance;
};

struct BuildingDataset {
  std::string id;
  HourlySeries non_shiftable;  // kWh, >= 0
  HourlySeries pv_generation;  // kWh, generation-positive
  BatterySpec battery{};
  double pv_capacity_kw{0.0};

  void validate() const {
    if (non_shiftable.size() != pv_generation.size())
      throw SchemaError("building " + id + ": series lengths differ");
    for (std::size_t h = 0; h < non_shiftable.size(); ++h) {
      if (!std::isfinite(non_shiftable[h]) || non_shiftable[h] < 0.0)
        throw SchemaError("building " + id + ": invalid non-shiftable load at hour " + std::to_string(h));
      if (!std::isfinite(pv_generation[h]) || pv_generation[h] < 0.0)
        throw SchemaError("building " + id + ": invalid PV generation at hour " + std::to_string(h));
    }
    battery.validate();
  }
};

/// E_h = sum over the 60 minutes of the hour of P_m / 60.
inline HourlySeries resample_power_to_energy(const MinuteSeries& power) {
  if (power.values.size() % 60 != 0)
    throw SchemaError("minute series length " + std::to_string(power.values.size()) +
                      " is not divisible by 60");
  HourlySeries out{std::vector<double>(power.values.size() / 60, 0.0), power.start};
  for (std::size_t h = 0; h < out.values.size(); ++h) {
    double e = 0.0;
    for (std::size_t m = 0; m < 60; ++m) {
      const double p = power.values[60 * h + m];
      if (!std::isfinite(p)) throw SchemaError("non-finite power sample at minute " + std::to_string(60 * h + m));
      e += p / 60.0;
    }
    out.values[h] = e;
  }
  return out;
}

/// Non-shiftable load from main-meter, battery and PV readings, with PV in the
/// raw meter convention (supply negative). Negative results are clamped to 0;
/// the clamped hour indices are appended to `clamped` when given.
inline HourlySeries derive_non_shiftable(const HourlySeries& main, const HourlySeries& battery,
                                         const HourlySeries& pv_raw,
                                         std::vector<std::size_t>* clamped = nullptr) {
  if (main.size() != battery.size() || main.size() != pv_raw.size())
    throw SchemaError("derive_non_shiftable: series lengths differ");
  HourlySeries out{std::vector<double>(main.size()), main.start};
  for (std::size_t h = 0; h < main.size(); ++h) {
    const double e = main[h] - (battery[h] + pv_raw[h]);
    if (e < 0.0) {
      out.values[h] = 0.0;
      if (clamped) clamped->push_back(h);
    } else {
      out.values[h] = e;
    }
  }
  return out;
}

/// Converts supply-negative meter PV into generation-positive PV.
inline HourlySeries pv_generation_from_meter(const HourlySeries& pv_raw) {
  HourlySeries out = pv_raw;
  for (double& v : out.values) v = std::max(0.0, -v);
  return out;
}

/// Day mask for validation: true where the day is kept. A day is excluded
/// when the sum of absolute hourly battery energy is <= threshold.
inline std::vector<bool> exclude_low_activity_days(const HourlySeries& battery, double threshold_kwh = 1.0) {
  if (battery.size() % 24 != 0) throw SchemaError("battery series does not cover whole days");
  std::vector<bool> keep(battery.size() / 24);
  for (std::size_t d = 0; d < keep.size(); ++d) {
    double total = 0.0;
    for (std::size_t h = 0; h < 24; ++h) total += std::abs(battery[24 * d + h]);
    keep[d] = total > threshold_kwh;
  }
  return keep;
}

}  // namespace gridtwin
