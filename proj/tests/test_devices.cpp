#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gridtwin/devices.hpp"

using namespace gridtwin;

TEST(Battery, PaperSpecDerivedQuantities) {
  const BatterySpec s;
  EXPECT_DOUBLE_EQ(s.capacity_kwh, 6.4);
  EXPECT_DOUBLE_EQ(s.power_kw, 5.0);
  EXPECT_NEAR(s.floor_kwh(), 1.6, 1e-12);
  EXPECT_NEAR(s.one_way_efficiency() * s.one_way_efficiency(), 0.9, 1e-15);
}

TEST(Battery, InvalidSpecsRejected) {
  BatterySpec s;
  s.round_trip_efficiency = 1.2;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = {};
  s.capacity_kwh = 0.0;
  EXPECT_THROW(s.validate(), std::invalid_argument);
  s = {};
  s.depth_of_discharge = 1.5;
  EXPECT_THROW(s.validate(), std::invalid_argument);
}

TEST(Battery, ChargeStoresEfficiencyScaledEnergy) {
  const auto st = BatteryState::at_floor(BatterySpec{});
  const auto r = battery_transact(st, 2.0);
  EXPECT_DOUBLE_EQ(r.grid_kwh, 2.0);
  EXPECT_NEAR(r.state.stored_kwh, 1.6 + 2.0 * std::sqrt(0.9), 1e-12);
}

TEST(Battery, ChargeClippedByPowerRating) {
  const auto r = battery_transact(BatteryState::at_floor(BatterySpec{}), 6.4);
  EXPECT_DOUBLE_EQ(r.grid_kwh, 5.0);
}

TEST(Battery, ChargeClippedByHeadroom) {
  const BatterySpec s;
  const auto r = battery_transact({6.0, s}, 5.0);
  EXPECT_NEAR(r.state.stored_kwh, 6.4, 1e-12);
  EXPECT_NEAR(r.grid_kwh, 0.4 / std::sqrt(0.9), 1e-12);
}

TEST(Battery, DischargeStopsAtFloor) {
  const BatterySpec s;
  const auto r = battery_transact({2.0, s}, -5.0);
  EXPECT_NEAR(r.state.stored_kwh, 1.6, 1e-12);
  EXPECT_NEAR(r.grid_kwh, -0.4 * std::sqrt(0.9), 1e-12);
  const auto again = battery_transact(r.state, -1.0);
  EXPECT_EQ(again.grid_kwh, 0.0);
  EXPECT_EQ(again.state.stored_kwh, r.state.stored_kwh);
}

TEST(Battery, ZeroRequestIsNoOp) {
  const BatteryState st{3.0, BatterySpec{}};
  const auto r = battery_transact(st, 0.0);
  EXPECT_EQ(r.grid_kwh, 0.0);
  EXPECT_EQ(r.state.stored_kwh, 3.0);
}

TEST(Battery, SubHourStepScalesPowerLimit) {
  const auto r = battery_transact(BatteryState::at_floor(BatterySpec{}), 4.0, 0.5);
  EXPECT_DOUBLE_EQ(r.grid_kwh, 2.5);
  EXPECT_THROW(battery_transact(BatteryState::at_floor(BatterySpec{}), 1.0, 0.0), std::invalid_argument);
}

// Stored energy changes by exactly charge*eff - discharge/eff, for any sequence.
TEST(Battery, EnergyBalanceHoldsOnRandomSequences) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> req(-7.0, 7.0);
  const BatterySpec s;
  const double eff = s.one_way_efficiency();
  for (int seq = 0; seq < 200; ++seq) {
    BatteryState st = BatteryState::at_floor(s);
    double in = 0.0, out = 0.0;
    for (int h = 0; h < 100; ++h) {
      const auto r = battery_transact(st, req(rng));
      (r.grid_kwh > 0 ? in : out) += std::abs(r.grid_kwh);
      st = r.state;
      ASSERT_GE(st.stored_kwh, s.floor_kwh() - 1e-12);
      ASSERT_LE(st.stored_kwh, s.capacity_kwh + 1e-12);
      ASSERT_LE(std::abs(r.grid_kwh), s.power_kw + 1e-12);
    }
    EXPECT_NEAR(st.stored_kwh - s.floor_kwh(), in * eff - out / eff, 1e-9);
  }
}
