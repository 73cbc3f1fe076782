#pragma once

// Hourly district simulation. Each building has a battery driven by a
// fractional action in [-1, 1]; a backup controller clips discharge so the
// battery never supplies more than the building's net load. Observations are
// the 21-element encoding of calendar, weather and building state.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridtwin/community.hpp"
#include "gridtwin/devices.hpp"

namespace gridtwin {

struct RewardParams {
  double w1{1.0};
  double w2{0.0};
  double e1{1.0};
  double e2{1.0};

  void validate() const {
    auto integral = [](double e) { return e >= 1.0 && std::floor(e) == e; };
    if (!integral(e1) || !integral(e2)) throw std::invalid_argument("reward exponents must be positive integers");
    if (!(w1 >= 0.0 && w2 >= 0.0)) throw std::invalid_argument("reward weights must be >= 0");
  }

  friend bool operator==(const RewardParams&, const RewardParams&) = default;
};

inline void to_json(nlohmann::json& j, const RewardParams& p) {
  j = {{"w1", p.w1}, {"w2", p.w2}, {"e1", p.e1}, {"e2", p.e2}};
}
inline void from_json(const nlohmann::json& j, RewardParams& p) {
  const RewardParams d{};
  p.w1 = j.value("w1", d.w1);
  p.w2 = j.value("w2", d.w2);
  p.e1 = j.value("e1", d.e1);
  p.e2 = j.value("e2", d.e2);
}

inline double sign(double x) { return (x > 0.0) - (x < 0.0); }

/// r = p * |w1 C^e1 + w2 G^e2| with p = -(1 + sign(C) * SOC), where C and G
/// are the hour's net cost and emissions.
inline double compute_reward(double net_kwh, double rate, double intensity, double soc_fraction,
                             const RewardParams& params) {
  const double cost = net_kwh * rate;
  const double emissions = net_kwh * intensity;
  const double penalty = -(1.0 + sign(cost) * soc_fraction);
  return penalty * std::abs(params.w1 * std::pow(cost, params.e1) + params.w2 * std::pow(emissions, params.e2));
}

inline constexpr std::size_t kObservationSize = 21;
using Observation = std::array<double, kObservationSize>;

// Layout of Observation.
namespace obs {
inline constexpr std::size_t kDay = 0;  // 7-wide one-hot, Monday first
inline constexpr std::size_t kHourSin = 7;
inline constexpr std::size_t kHourCos = 8;
inline constexpr std::size_t kIrradiance = 9;  // t, t+6, t+12, t+24
inline constexpr std::size_t kSolar = 13;
inline constexpr std::size_t kNet = 14;
inline constexpr std::size_t kNonShiftable = 15;
inline constexpr std::size_t kSoc = 16;
inline constexpr std::size_t kCarbon = 17;
inline constexpr std::size_t kPrice = 18;
inline constexpr std::size_t kPrice6h = 19;
inline constexpr std::size_t kPrice12h = 20;
}  // namespace obs

struct MinMax {
  double lo{0.0};
  double hi{1.0};

  double scale(double v) const {
    if (!(hi > lo)) return 0.0;
    return std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
  }
};

/// Min-max bounds for the continuous observation components of one building.
struct ObservationBounds {
  MinMax irradiance, solar, net, non_shiftable, soc, carbon, price, rate;

  /// Bounds derived from a building's series over the given community window.
  static ObservationBounds from_data(const Community& c, std::size_t b, std::span<const double> rates) {
    const auto& bd = c.buildings.at(b);
    auto range = [](auto&& values) {
      MinMax m{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
      for (double v : values) {
        m.lo = std::min(m.lo, v);
        m.hi = std::max(m.hi, v);
      }
      return m;
    };
    ObservationBounds o;
    o.irradiance = range(c.weather.direct_irradiance.values);
    o.solar = range(bd.pv_generation.values);
    o.non_shiftable = range(bd.non_shiftable.values);
    std::vector<double> base(bd.non_shiftable.size());
    for (std::size_t h = 0; h < base.size(); ++h) base[h] = bd.non_shiftable[h] - bd.pv_generation[h];
    const MinMax raw_net = range(base);
    o.net = {raw_net.lo - bd.battery.power_kw, raw_net.hi + bd.battery.power_kw};
    o.soc = {0.0, 1.0};
    auto product = [&](const MinMax& factor) {
      const double a = o.net.lo * factor.lo, b2 = o.net.lo * factor.hi;
      const double c2 = o.net.hi * factor.lo, d = o.net.hi * factor.hi;
      return MinMax{std::min({a, b2, c2, d, 0.0}), std::max({a, b2, c2, d, 0.0})};
    };
    o.carbon = product(range(c.carbon.kg_per_kwh.values));
    o.rate = range(rates);
    o.price = product(o.rate);
    return o;
  }
};

inline void to_json(nlohmann::json& j, const MinMax& m) { j = {m.lo, m.hi}; }
inline void from_json(const nlohmann::json& j, MinMax& m) { m = {j.at(0).get<double>(), j.at(1).get<double>()}; }
inline void to_json(nlohmann::json& j, const ObservationBounds& o) {
  j = {{"irradiance", o.irradiance}, {"solar", o.solar}, {"net", o.net}, {"non_shiftable", o.non_shiftable},
       {"soc", o.soc}, {"carbon", o.carbon}, {"price", o.price}, {"rate", o.rate}};
}
inline void from_json(const nlohmann::json& j, ObservationBounds& o) {
  j.at("irradiance").get_to(o.irradiance);
  j.at("solar").get_to(o.solar);
  j.at("net").get_to(o.net);
  j.at("non_shiftable").get_to(o.non_shiftable);
  j.at("soc").get_to(o.soc);
  j.at("carbon").get_to(o.carbon);
  j.at("price").get_to(o.price);
  j.at("rate").get_to(o.rate);
}

struct BuildingStep {
  Observation observation{};  // observation for the next hour
  double reward{0.0};
  double net_kwh{0.0};
  double battery_kwh{0.0};  // AC-side battery energy this hour
  double soc{0.0};          // after the step
};

struct StepResult {
  std::vector<BuildingStep> buildings;
  bool done{false};
};

class DistrictEnv {
 public:
  explicit DistrictEnv(Community community, RewardParams reward = {})
      : community_(std::move(community)), reward_(reward) {
    community_.validate();
    reward_.validate();
    rates_ = community_.tariff.rates(community_.start(), horizon());
    for (std::size_t b = 0; b < building_count(); ++b)
      bounds_.push_back(ObservationBounds::from_data(community_, b, rates_));
    reset();
  }

  std::size_t building_count() const { return community_.buildings.size(); }
  std::size_t horizon() const { return community_.horizon(); }
  std::size_t hour() const { return hour_; }
  bool done() const { return hour_ >= horizon(); }
  const Community& community() const { return community_; }
  const RewardParams& reward_params() const { return reward_; }
  std::span<const double> rates() const { return rates_; }
  const BatteryState& battery(std::size_t b) const { return batteries_.at(b); }
  const ObservationBounds& bounds(std::size_t b) const { return bounds_.at(b); }

  /// Replaces the min-max bounds of one building, e.g. with bounds frozen
  /// from a training window.
  void set_bounds(std::size_t b, const ObservationBounds& bounds) { bounds_.at(b) = bounds; }

  int hour_of_day(std::size_t h) const { return calendar(h).hour; }
  CalendarFields calendar(std::size_t h) const {
    return calendar_fields(community_.start() + std::chrono::hours{static_cast<long>(h)});
  }

  std::vector<Observation> reset() {
    hour_ = 0;
    batteries_.clear();
    for (const auto& b : community_.buildings) batteries_.push_back(BatteryState::at_floor(b.battery));
    last_net_.assign(building_count(), 0.0);
    last_carbon_.assign(building_count(), 0.0);
    last_price_.assign(building_count(), 0.0);
    std::vector<Observation> out;
    for (std::size_t b = 0; b < building_count(); ++b) out.push_back(encode_observation(b, 0));
    return out;
  }

  /// Energy request (kWh, AC side) after the backup controller: the action
  /// is a fraction of capacity and discharge never exceeds the net load.
  double backup_clip(double action, std::size_t b, std::size_t h) const {
    const auto& bd = community_.buildings.at(b);
    double request = std::clamp(action, -1.0, 1.0) * bd.battery.capacity_kwh;
    if (request < 0.0) request = -std::min(-request, std::max(0.0, bd.non_shiftable[h] - bd.pv_generation[h]));
    return request;
  }

  StepResult step(std::span<const double> actions) {
    if (actions.size() != building_count())
      throw std::invalid_argument("expected " + std::to_string(building_count()) + " actions, got " +
                                  std::to_string(actions.size()));
    if (done()) throw std::logic_error("step called after the episode finished");
    const std::size_t h = hour_;
    StepResult out;
    out.buildings.resize(building_count());
    for (std::size_t b = 0; b < building_count(); ++b) {
      const auto& bd = community_.buildings[b];
      const auto tx = battery_transact(batteries_[b], backup_clip(actions[b], b, h), 1.0);
      batteries_[b] = tx.state;
      const double net = bd.non_shiftable[h] - bd.pv_generation[h] + tx.grid_kwh;
      const double intensity = community_.carbon.kg_per_kwh[h];
      auto& r = out.buildings[b];
      r.net_kwh = net;
      r.battery_kwh = tx.grid_kwh;
      r.soc = soc(batteries_[b]);
      r.reward = compute_reward(net, rates_[h], intensity, r.soc, reward_);
      last_net_[b] = net;
      last_carbon_[b] = net * intensity;
      last_price_[b] = net * rates_[h];
    }
    ++hour_;
    out.done = done();
    for (std::size_t b = 0; b < building_count(); ++b)
      out.buildings[b].observation = encode_observation(b, hour_ % horizon());
    return out;
  }

  /// Observation of building `b` at hour `h`. Forecasts wrap around the
  /// horizon; net consumption, emissions and price are the last realized
  /// values (zero right after reset).
  Observation encode_observation(std::size_t b, std::size_t h) const {
    const std::size_t n = horizon();
    const auto& bd = community_.buildings.at(b);
    const auto& nb = bounds_.at(b);
    const auto f = calendar(h);
    Observation o{};
    o[obs::kDay + static_cast<std::size_t>(f.weekday)] = 1.0;
    const double angle = 2.0 * std::numbers::pi * f.hour / 24.0;
    o[obs::kHourSin] = std::sin(angle);
    o[obs::kHourCos] = std::cos(angle);
    const auto& dsi = community_.weather.direct_irradiance;
    o[obs::kIrradiance + 0] = nb.irradiance.scale(dsi[h % n]);
    o[obs::kIrradiance + 1] = nb.irradiance.scale(dsi[(h + 6) % n]);
    o[obs::kIrradiance + 2] = nb.irradiance.scale(dsi[(h + 12) % n]);
    o[obs::kIrradiance + 3] = nb.irradiance.scale(dsi[(h + 24) % n]);
    o[obs::kSolar] = nb.solar.scale(bd.pv_generation[h % n]);
    o[obs::kNet] = nb.net.scale(last_net_[b]);
    o[obs::kNonShiftable] = nb.non_shiftable.scale(bd.non_shiftable[h % n]);
    o[obs::kSoc] = nb.soc.scale(soc(batteries_[b]));
    o[obs::kCarbon] = nb.carbon.scale(last_carbon_[b]);
    o[obs::kPrice] = nb.price.scale(last_price_[b]);
    o[obs::kPrice6h] = nb.rate.scale(rates_[(h + 6) % n]);
    o[obs::kPrice12h] = nb.rate.scale(rates_[(h + 12) % n]);
    return o;
  }

 private:
  Community community_;
  RewardParams reward_;
  std::vector<double> rates_;
  std::vector<ObservationBounds> bounds_;
  std::vector<BatteryState> batteries_;
  std::vector<double> last_net_, last_carbon_, last_price_;
  std::size_t hour_{0};
};

/// One row of a per-step trace.
struct TraceRow {
  std::size_t h{0};
  std::string building_id;
  double action{0.0};
  double battery_kwh{0.0};
  double soc{0.0};
  double net_kwh{0.0};
  double reward{0.0};
};

inline void write_trace(const std::filesystem::path& path, const std::vector<TraceRow>& rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  out << "h,building_id,action,battery_kWh,soc,net_kWh,reward\n";
  for (const auto& r : rows)
    out << r.h << ',' << r.building_id << ',' << r.action << ',' << r.battery_kwh << ',' << r.soc << ','
        << r.net_kwh << ',' << r.reward << '\n';
}

inline std::vector<TraceRow> read_trace(const std::filesystem::path& path) {
  const auto t = csv::read(path);
  const std::string src = path.string();
  const std::size_t ch = t.column("h", src), cb = t.column("building_id", src), ca = t.column("action", src),
                    cbat = t.column("battery_kWh", src), cs = t.column("soc", src), cn = t.column("net_kWh", src),
                    cr = t.column("reward", src);
  std::vector<TraceRow> rows;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& row = t.rows[i];
    TraceRow r;
    double hv = 0.0;
    if (row.size() != t.header.size() || !csv::parse_number(row[ch], hv) || !csv::parse_number(row[ca], r.action) ||
        !csv::parse_number(row[cbat], r.battery_kwh) || !csv::parse_number(row[cs], r.soc) ||
        !csv::parse_number(row[cn], r.net_kwh) || !csv::parse_number(row[cr], r.reward))
      throw SchemaError(src + ": bad trace row at line " + std::to_string(t.line_numbers[i]));
    r.h = static_cast<std::size_t>(hv);
    r.building_id = row[cb];
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace gridtwin
