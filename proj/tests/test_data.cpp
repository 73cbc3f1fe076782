#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace gridtwin;

TEST(Timestamps, ParseAndFormatRoundTrip) {
  const auto t = parse_timestamp("2016-08-01T13:00:00");
  EXPECT_EQ(format_timestamp(t), "2016-08-01T13:00:00");
  EXPECT_EQ(parse_timestamp("2016-08-01 13:00"), t);
}

TEST(Timestamps, CalendarFieldsMondayFirst) {
  // 2016-08-01 was a Monday; 2016-08-06 a Saturday.
  const auto mon = calendar_fields(parse_timestamp("2016-08-01T05:00"));
  EXPECT_EQ(mon.weekday, 0);
  EXPECT_EQ(mon.month, 8);
  EXPECT_EQ(mon.hour, 5);
  EXPECT_FALSE(mon.weekend());
  EXPECT_TRUE(calendar_fields(parse_timestamp("2016-08-06T00:00")).weekend());
  EXPECT_EQ(calendar_fields(parse_timestamp("2016-08-07T23:00")).weekday, 6);
}

TEST(Timestamps, RejectsGarbage) {
  EXPECT_THROW(parse_timestamp("yesterday"), SchemaError);
  EXPECT_THROW(parse_timestamp("2016-13-01T00:00"), SchemaError);
  EXPECT_THROW(parse_timestamp("2016-02-30T00:00"), SchemaError);
}

TEST(Resample, ConstantPowerGivesEqualEnergy) {
  MinuteSeries p{std::vector<double>(120, 3.0)};
  const auto e = resample_power_to_energy(p);
  ASSERT_EQ(e.size(), 2u);
  EXPECT_NEAR(e[0], 3.0, 1e-12);
  EXPECT_NEAR(e[1], 3.0, 1e-12);
}

TEST(Resample, RampAveragesOverTheHour) {
  MinuteSeries p;
  for (int m = 0; m < 60; ++m) p.values.push_back(m);
  EXPECT_NEAR(resample_power_to_energy(p)[0], 29.5, 1e-12);
}

TEST(Resample, PartialHourIsRejected) {
  EXPECT_THROW(resample_power_to_energy(MinuteSeries{std::vector<double>(59, 1.0)}), SchemaError);
}

TEST(NonShiftable, SubtractsBatteryAndRawPv) {
  // main 2, battery charging 1, PV supplying 3 (raw -3): 2 - (1 - 3) = 4.
  const HourlySeries main{{2.0}}, battery{{1.0}}, pv{{-3.0}};
  EXPECT_DOUBLE_EQ(derive_non_shiftable(main, battery, pv)[0], 4.0);
}

TEST(NonShiftable, NegativeResultClampedAndReported) {
  const HourlySeries main{{0.5, 1.0}}, battery{{2.0, 0.0}}, pv{{0.0, 0.0}};
  std::vector<std::size_t> clamped;
  const auto e = derive_non_shiftable(main, battery, pv, &clamped);
  EXPECT_EQ(e[0], 0.0);
  EXPECT_EQ(e[1], 1.0);
  EXPECT_EQ(clamped, std::vector<std::size_t>{0});
}

TEST(NonShiftable, LengthMismatchThrows) {
  EXPECT_THROW(derive_non_shiftable(HourlySeries{{1.0}}, HourlySeries{{1.0, 2.0}}, HourlySeries{{1.0}}), SchemaError);
}

TEST(PvFromMeter, FlipsSignAndDropsConsumption) {
  const auto pv = pv_generation_from_meter(HourlySeries{{-2.0, 0.0, 0.1}});
  EXPECT_EQ(pv.values, (std::vector<double>{2.0, 0.0, 0.0}));
}

TEST(LowActivityDays, ThresholdIsExclusive) {
  HourlySeries b{std::vector<double>(72, 0.0)};
  b.values[0] = 0.5;
  b.values[1] = -0.5;  // day 0 total exactly 1.0 -> excluded
  b.values[30] = 2.0;  // day 1 active
  const auto keep = exclude_low_activity_days(b);
  EXPECT_EQ(keep, (std::vector<bool>{false, true, false}));
}
