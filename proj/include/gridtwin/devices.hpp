#pragma once

// Battery device model: capacity, power rating, round-trip efficiency and a
// depth-of-discharge floor. Energies are kWh, the time step is in hours.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace gridtwin {

struct BatterySpec {
  double capacity_kwh{6.4};
  double power_kw{5.0};
  double round_trip_efficiency{0.90};
  double depth_of_discharge{0.75};

  double floor_kwh() const { return (1.0 - depth_of_discharge) * capacity_kwh; }

  // One-way efficiency applied on each of charge and discharge.
  double one_way_efficiency() const { return std::sqrt(round_trip_efficiency); }

  void validate() const {
    if (!(capacity_kwh > 0.0)) throw std::invalid_argument("battery capacity must be > 0");
    if (!(power_kw > 0.0)) throw std::invalid_argument("battery power rating must be > 0");
    if (!(round_trip_efficiency > 0.0 && round_trip_efficiency <= 1.0))
      throw std::invalid_argument("round-trip efficiency must be in (0, 1]");
    if (!(depth_of_discharge > 0.0 && depth_of_discharge <= 1.0))
      throw std::invalid_argument("depth of discharge must be in (0, 1]");
  }

  friend bool operator==(const BatterySpec&, const BatterySpec&) = default;
};

struct BatteryState {
  double stored_kwh{0.0};
  BatterySpec spec{};

  static BatteryState at_floor(const BatterySpec& spec) { return {spec.floor_kwh(), spec}; }
};

struct TransactResult {
  BatteryState state;
  // AC-side energy seen by the building meter: positive while charging,
  // negative while discharging.
  double grid_kwh{0.0};
};

/// Charge (request > 0) or discharge (request < 0) the battery by an AC-side
/// energy amount. The request is clipped to the power rating and to the
/// storage headroom above the floor / below capacity; clipping never fails.
/// Charging stores e*sqrt(eta); discharging removes e/sqrt(eta) from storage.
inline TransactResult battery_transact(const BatteryState& state, double requested_kwh,
                                       double dt_hours = 1.0) {
  if (!(dt_hours > 0.0)) throw std::invalid_argument("time step must be positive");
  const BatterySpec& spec = state.spec;
  const double eff = spec.one_way_efficiency();
  const double power_limit = spec.power_kw * dt_hours;
  TransactResult out{state, 0.0};

  if (requested_kwh > 0.0) {
    const double headroom = std::max(0.0, spec.capacity_kwh - state.stored_kwh);
    const double ac = std::min({requested_kwh, power_limit, headroom / eff});
    out.grid_kwh = ac;
    out.state.stored_kwh = std::min(spec.capacity_kwh, state.stored_kwh + ac * eff);
  } else if (requested_kwh < 0.0) {
    const double available = std::max(0.0, state.stored_kwh - spec.floor_kwh());
    const double ac = std::min({-requested_kwh, power_limit, available * eff});
    out.grid_kwh = -ac;
    out.state.stored_kwh = std::max(spec.floor_kwh(), state.stored_kwh - ac / eff);
  }
  return out;
}

/// Stored energy as a fraction of nominal capacity.
inline double soc(const BatteryState& state) { return state.stored_kwh / state.spec.capacity_kwh; }

}  // namespace gridtwin
