#pragma once

// Seasonal time-of-use tariff. A tariff is a list of bands, each covering a
// month range, a day type and an hour range; ranges may wrap around (e.g.
// October-May, 9 PM-8 AM). Construction checks that the bands tile every
// (month, day type, hour) cell exactly once.

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gridtwin/data.hpp"

namespace gridtwin {

enum class DayType { Any, Weekday, Weekend };

struct TariffBand {
  int first_month{1};  // inclusive, 1..12
  int last_month{12};  // inclusive
  DayType days{DayType::Any};
  int first_hour{0};  // inclusive, 0..23
  int end_hour{24};   // exclusive, 1..24; end <= first wraps past midnight
  double rate{0.0};   // $/kWh

  bool covers_month(int m) const {
    return first_month <= last_month ? (m >= first_month && m <= last_month)
                                     : (m >= first_month || m <= last_month);
  }
  bool covers_hour(int h) const {
    return first_hour < end_hour ? (h >= first_hour && h < end_hour) : (h >= first_hour || h < end_hour);
  }
  bool covers_day(bool weekend) const {
    return days == DayType::Any || (days == DayType::Weekend) == weekend;
  }
};

class Tariff {
 public:
  Tariff() : Tariff(tou_d_prime()) {}
  Tariff(std::string name, std::vector<TariffBand> bands) : name_(std::move(name)), bands_(std::move(bands)) {
    validate();
  }

  /// Residential battery TOU plan: June-September and October-May seasons,
  /// with 8 AM-4 PM, 4 PM-9 PM and 9 PM-8 AM bands.
  static Tariff tou_d_prime() {
    return Tariff("TOU-D-PRIME", {
                                     {6, 9, DayType::Any, 8, 16, 0.21},
                                     {6, 9, DayType::Weekday, 16, 21, 0.54},
                                     {6, 9, DayType::Weekend, 16, 21, 0.40},
                                     {6, 9, DayType::Any, 21, 8, 0.21},
                                     {10, 5, DayType::Any, 8, 16, 0.20},
                                     {10, 5, DayType::Weekday, 16, 21, 0.50},
                                     {10, 5, DayType::Weekend, 16, 21, 0.50},
                                     {10, 5, DayType::Any, 21, 8, 0.20},
                                 });
  }

  const std::string& name() const { return name_; }
  const std::vector<TariffBand>& bands() const { return bands_; }

  double rate(int month, bool weekend, int hour) const {
    for (const auto& b : bands_)
      if (b.covers_month(month) && b.covers_day(weekend) && b.covers_hour(hour)) return b.rate;
    throw SchemaError("tariff has no rate for month " + std::to_string(month));
  }

  double rate(TimePoint t) const {
    const auto f = calendar_fields(t);
    return rate(f.month, f.weekend(), f.hour);
  }

  /// Rates for each hour of a series starting at `start`.
  std::vector<double> rates(TimePoint start, std::size_t hours) const {
    std::vector<double> out(hours);
    for (std::size_t h = 0; h < hours; ++h) out[h] = rate(start + std::chrono::hours{static_cast<long>(h)});
    return out;
  }

 private:
  void validate() const {
    for (const auto& b : bands_) {
      if (!(b.rate > 0.0)) throw SchemaError("tariff rates must be positive");
      if (b.first_month < 1 || b.first_month > 12 || b.last_month < 1 || b.last_month > 12 ||
          b.first_hour < 0 || b.first_hour > 23 || b.end_hour < 1 || b.end_hour > 24)
        throw SchemaError("tariff band out of range");
    }
    for (int m = 1; m <= 12; ++m)
      for (int weekend = 0; weekend < 2; ++weekend)
        for (int h = 0; h < 24; ++h) {
          int hits = 0;
          for (const auto& b : bands_)
            hits += b.covers_month(m) && b.covers_day(weekend != 0) && b.covers_hour(h);
          if (hits != 1)
            throw SchemaError("tariff covers month " + std::to_string(m) + (weekend ? " weekend" : " weekday") +
                              " hour " + std::to_string(h) + " " + std::to_string(hits) + " times");
        }
  }

  std::string name_;
  std::vector<TariffBand> bands_;
};

/// Free-function form of Tariff::rate.
inline double tariff_rate(const Tariff& t, TimePoint when) { return t.rate(when); }

NLOHMANN_JSON_SERIALIZE_ENUM(DayType, {{DayType::Any, "any"}, {DayType::Weekday, "weekday"}, {DayType::Weekend, "weekend"}})

inline void to_json(nlohmann::json& j, const Tariff& t) {
  j["name"] = t.name();
  j["bands"] = nlohmann::json::array();
  for (const auto& b : t.bands())
    j["bands"].push_back({{"months", {b.first_month, b.last_month}},
                          {"days", b.days},
                          {"hours", {b.first_hour, b.end_hour}},
                          {"rate", b.rate}});
}

inline void from_json(const nlohmann::json& j, Tariff& t) {
  std::vector<TariffBand> bands;
  for (const auto& jb : j.at("bands")) {
    TariffBand b;
    b.first_month = jb.at("months").at(0).get<int>();
    b.last_month = jb.at("months").at(1).get<int>();
    b.days = jb.value("days", DayType::Any);
    b.first_hour = jb.at("hours").at(0).get<int>();
    b.end_hour = jb.at("hours").at(1).get<int>();
    b.rate = jb.at("rate").get<double>();
    bands.push_back(b);
  }
  t = Tariff(j.value("name", std::string("custom")), std::move(bands));
}

}  // namespace gridtwin
