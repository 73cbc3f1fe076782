#include <gtest/gtest.h>

#include <random>

#include "kpi_oracle.hpp"
#include "test_util.hpp"

using namespace gridtwin;

TEST(Kpi, BuildingSumsUseOnlyPositiveHours) {
  const std::vector<double> net{2.0, -1.0, 3.0, -4.0};
  const std::vector<double> rate{0.5, 0.5, 0.2, 0.2};
  const std::vector<double> carbon{0.1, 0.1, 0.3, 0.3};
  EXPECT_DOUBLE_EQ(kpi_consumption(net), 5.0);
  EXPECT_DOUBLE_EQ(kpi_price(net, rate), 1.0 + 0.6);
  EXPECT_DOUBLE_EQ(kpi_emissions(net, carbon), 0.2 + 0.9);
  EXPECT_DOUBLE_EQ(kpi_zne(net), 0.0);
  EXPECT_THROW(kpi_price(net, std::vector<double>{1.0}), std::invalid_argument);
}

TEST(Kpi, AverageDailyPeak) {
  std::vector<double> d(48, 1.0);
  d[5] = 4.0;
  d[30] = 2.0;
  EXPECT_DOUBLE_EQ(kpi_avg_daily_peak(d), 3.0);
  std::vector<double> partial(30, 1.0);
  partial[26] = 4.0;  // second, 6-hour day
  EXPECT_DOUBLE_EQ(kpi_avg_daily_peak(partial), 2.5);
  EXPECT_THROW(kpi_avg_daily_peak(std::vector<double>{}), std::invalid_argument);
}

TEST(Kpi, RampingStartsAtSecondHour) {
  EXPECT_DOUBLE_EQ(kpi_ramping(std::vector<double>{5.0, 1.0, 2.0, 2.0}), 5.0);
  EXPECT_DOUBLE_EQ(kpi_ramping(std::vector<double>{1.0, 1.0}), 0.0);
}

TEST(Kpi, LoadFactorFlatIsZero) {
  const auto r = kpi_one_minus_load_factor(std::vector<double>(730 * 2, 3.0));
  ASSERT_TRUE(r.value);
  EXPECT_NEAR(*r.value, 0.0, 1e-15);
}

TEST(Kpi, LoadFactorPartialBlockAndSkips) {
  std::vector<double> d(730 + 10, -1.0);
  d[730] = 2.0;  // trailing block: mean (2 - 9) / 10, max 2
  const auto r = kpi_one_minus_load_factor(d);
  EXPECT_EQ(r.skipped, std::vector<std::size_t>{0});
  ASSERT_TRUE(r.value);
  EXPECT_NEAR(*r.value, 1.0 - (-0.7 / 2.0), 1e-12);
  EXPECT_FALSE(kpi_one_minus_load_factor(std::vector<double>(24, -1.0)).value);
}

TEST(Kpi, NormalizationHandlesZeroAndUndefined) {
  KpiValues c, b;
  c[Kpi::D] = 2.0;
  b[Kpi::D] = 4.0;
  c[Kpi::Z] = 1.0;
  b[Kpi::Z] = 0.0;
  c[Kpi::P] = 1.0;
  const auto n = normalize(c, b);
  EXPECT_DOUBLE_EQ(*n[Kpi::D], 0.5);
  EXPECT_FALSE(n[Kpi::Z]);
  EXPECT_FALSE(n[Kpi::P]);
}

TEST(Kpi, DistrictAggregatesBuildingsAndSummedSeries) {
  const std::vector<double> rate(48, 0.2), carbon(48, 0.5);
  std::vector<double> a(48, 1.0), b(48, -0.5);
  a[20] = 3.0;
  const auto r = evaluate_kpis({"a", "b"}, {a, b}, rate, carbon);
  EXPECT_DOUBLE_EQ(*r.district[Kpi::D], (47.0 + 3.0) / 2.0);
  EXPECT_DOUBLE_EQ(*r.district[Kpi::Z], (50.0 - 24.0) / 2.0);
  EXPECT_DOUBLE_EQ(r.district_series_z, 26.0);
  EXPECT_DOUBLE_EQ(*r.district[Kpi::P], (2.5 + 0.5) / 2.0);
  EXPECT_DOUBLE_EQ(*r.district[Kpi::R], 4.0);
}

TEST(Kpi, BaselineNormalizesToOne) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(1.0, 1.0);
  std::vector<std::vector<double>> net(3, std::vector<double>(744));
  for (auto& s : net)
    for (double& v : s) v = g(rng);
  const std::vector<double> rate(744, 0.3), carbon(744, 0.4);
  const auto r = evaluate_kpis({"a", "b", "c"}, net, rate, carbon);
  const auto n = normalize(r, r);
  for (Kpi k : kAllKpis) EXPECT_EQ(*n.district[k], 1.0);
  for (const auto& b : n.buildings)
    for (Kpi k : {Kpi::D, Kpi::C, Kpi::G, Kpi::Z}) EXPECT_EQ(*b[k], 1.0);
}

TEST(Kpi, MatchesReferenceEvaluatorOnRandomCommunities) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g(0.5, 1.5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 24 * (10 + trial * 13);  // includes partial 730-hour blocks
    std::vector<std::vector<double>> net(3, std::vector<double>(n));
    std::vector<double> rate(n), carbon(n);
    for (auto& s : net)
      for (double& v : s) v = g(rng);
    for (std::size_t h = 0; h < n; ++h) {
      rate[h] = 0.1 + 0.5 * u(rng);
      carbon[h] = 0.2 + 0.2 * u(rng);
    }
    const auto mine = evaluate_kpis({"a", "b", "c"}, net, rate, carbon);
    const auto ref = oracle::evaluate(net, rate, carbon);
    for (std::size_t k = 0; k < 7; ++k)
      EXPECT_TRUE(oracle::close(*mine.district.values[k], ref.district[k], 1e-9)) << trial << " kpi " << k;
    for (std::size_t b = 0; b < 3; ++b) {
      EXPECT_TRUE(oracle::close(mine.buildings[b].D, ref.buildings[b][0], 1e-9));
      EXPECT_TRUE(oracle::close(mine.buildings[b].C, ref.buildings[b][1], 1e-9));
      EXPECT_TRUE(oracle::close(mine.buildings[b].G, ref.buildings[b][2], 1e-9));
      EXPECT_TRUE(oracle::close(mine.buildings[b].Z, ref.buildings[b][3], 1e-9));
    }
  }
}

TEST(Kpi, ReportFormats) {
  const std::vector<double> rate(24, 0.2), carbon(24, 0.5);
  std::vector<double> net(24, 1.0);
  net[7] = 2.0;
  const auto r = evaluate_kpis({"x"}, {net}, rate, carbon);
  const auto n = normalize(r, r);
  const auto j = kpi_report_json(r, &n);
  ASSERT_EQ(j.size(), 2u);
  EXPECT_EQ(j[1]["name"], "district");
  EXPECT_EQ(j[1]["normalized"]["1-L"], 1.0);
  EXPECT_TRUE(j[0]["raw"]["P"].is_null());
  const auto csv = kpi_report_csv(r, &n);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "name,D,C,G,Z,P,R,1-L,norm_D,norm_C,norm_G,norm_Z,norm_P,norm_R,norm_1-L");
}
