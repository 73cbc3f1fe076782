#pragma once

// Synthetic community generator, a stand-in for measured smart-meter data.
// Loads follow a sinusoidal diurnal profile around a per-building peak hour,
// modulated by a seasonal cosine and lognormal multiplicative noise. PV
// follows a daylight bell scaled by capacity and a shared cloudiness factor.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

#include "gridtwin/community.hpp"

namespace gridtwin {

struct SyntheticBuilding {
  double mean_daily_load_kwh{14.0};
  double peak_hour{19.0};
  double pv_capacity_kw{4.0};
};

struct SyntheticCommunityConfig {
  std::vector<SyntheticBuilding> buildings{SyntheticBuilding{}};
  std::size_t days{365};
  TimePoint start{default_start()};
  double diurnal_amplitude{0.6};   // relative, in [0, 1]
  double seasonal_amplitude{0.15};  // relative, in [0, 1)
  double noise{0.1};               // lognormal sigma, >= 0
  std::uint64_t seed{7};
  BatterySpec battery{};

  /// A varied community of `count` buildings; the last one of five or more
  /// has no PV.
  static SyntheticCommunityConfig varied(std::size_t count, std::uint64_t seed = 7) {
    static constexpr double kPeaks[] = {19.0, 18.0, 20.0, 8.0, 21.0, 17.0, 19.5};
    SyntheticCommunityConfig cfg;
    cfg.seed = seed;
    cfg.buildings.clear();
    for (std::size_t i = 0; i < count; ++i) {
      SyntheticBuilding b;
      b.mean_daily_load_kwh = 10.0 + 3.0 * static_cast<double>(i % 4);
      b.peak_hour = kPeaks[i % std::size(kPeaks)];
      b.pv_capacity_kw = 3.0 + static_cast<double>(i % 3);
      cfg.buildings.push_back(b);
    }
    if (count >= 5) cfg.buildings.back().pv_capacity_kw = 0.0;
    return cfg;
  }

  void validate() const {
    if (buildings.empty()) throw std::invalid_argument("synthetic community needs at least one building");
    if (days == 0) throw std::invalid_argument("synthetic community needs at least one day");
    if (!(noise >= 0.0)) throw std::invalid_argument("noise level must be >= 0");
    if (!(diurnal_amplitude >= 0.0 && diurnal_amplitude <= 1.0))
      throw std::invalid_argument("diurnal amplitude must be in [0, 1]");
    if (!(seasonal_amplitude >= 0.0 && seasonal_amplitude < 1.0))
      throw std::invalid_argument("seasonal amplitude must be in [0, 1)");
    for (const auto& b : buildings)
      if (!(b.mean_daily_load_kwh >= 0.0) || !(b.pv_capacity_kw >= 0.0))
        throw std::invalid_argument("building load and PV capacity must be >= 0");
    battery.validate();
  }
};

namespace detail {

inline double day_of_year(TimePoint t) {
  using namespace std::chrono;
  const auto day = floor<days>(t);
  const year_month_day ymd{day};
  const sys_days jan1{ymd.year() / January / 1};
  return static_cast<double>((day - jan1).count());
}

// Fraction of peak PV output for the hour starting at `hour`; zero at night.
inline double daylight_bell(int hour) {
  const double x = (static_cast<double>(hour) + 0.5 - 6.0) / 12.0;
  return (x <= 0.0 || x >= 1.0) ? 0.0 : std::sin(std::numbers::pi * x);
}

}  // namespace detail

inline Community generate_synthetic_community(const SyntheticCommunityConfig& cfg) {
  cfg.validate();
  using std::numbers::pi;
  const std::size_t n = cfg.days * 24;
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto lognormal = [&](double sigma) {
    const double z = gauss(rng);
    return std::exp(sigma * z - 0.5 * sigma * sigma);
  };

  Community c;
  c.carbon.kg_per_kwh = {std::vector<double>(n), cfg.start};
  c.weather.direct_irradiance = {std::vector<double>(n), cfg.start};
  for (std::size_t i = 0; i < cfg.buildings.size(); ++i) {
    BuildingDataset b;
    b.id = std::to_string(i + 1);
    b.non_shiftable = {std::vector<double>(n), cfg.start};
    b.pv_generation = {std::vector<double>(n), cfg.start};
    b.battery = cfg.battery;
    b.pv_capacity_kw = cfg.buildings[i].pv_capacity_kw;
    c.buildings.push_back(std::move(b));
  }

  for (std::size_t h = 0; h < n; ++h) {
    const TimePoint t = cfg.start + std::chrono::hours{static_cast<long>(h)};
    const auto f = calendar_fields(t);
    const double doy = detail::day_of_year(t);
    const double load_season = 1.0 + cfg.seasonal_amplitude * std::cos(2.0 * pi * (doy - 200.0) / 365.0);
    const double sun_season = 1.0 + 0.25 * std::cos(2.0 * pi * (doy - 172.0) / 365.0);
    const double cloud = std::min(1.25, lognormal(cfg.noise));
    const double bell = detail::daylight_bell(f.hour);

    c.weather.direct_irradiance.values[h] = 700.0 * bell * sun_season * cloud;
    c.carbon.kg_per_kwh.values[h] =
        0.30 + 0.08 * std::cos(2.0 * pi * (f.hour - 19.0) / 24.0) - 0.05 * bell * cloud;

    for (std::size_t i = 0; i < cfg.buildings.size(); ++i) {
      const auto& sb = cfg.buildings[i];
      const double diurnal = 1.0 + cfg.diurnal_amplitude * std::cos(2.0 * pi * (f.hour - sb.peak_hour) / 24.0);
      c.buildings[i].non_shiftable.values[h] =
          sb.mean_daily_load_kwh / 24.0 * diurnal * load_season * lognormal(cfg.noise);
      c.buildings[i].pv_generation.values[h] =
          std::min(sb.pv_capacity_kw, 0.8 * sb.pv_capacity_kw * bell * sun_season * cloud);
    }
  }
  c.validate();
  return c;
}

}  // namespace gridtwin
