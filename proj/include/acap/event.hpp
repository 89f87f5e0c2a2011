#pragma once

#include <string>

#include "acap/geocode.hpp"

namespace acap {

inline constexpr int kFirstYear = 2016;

/// Hour-resolution time stamp as published by the accident statistics: the
/// calendar day is withheld, only year, month, weekday and hour are known.
/// `day_of_week` follows the dataset convention 1 = Sunday ... 7 = Saturday.
struct TimeSlot {
  int year = kFirstYear;
  int month = 1;
  int day_of_week = 1;
  int hour = 0;

  /// Months since January of kFirstYear.
  int month_index() const noexcept { return (year - kFirstYear) * 12 + (month - 1); }

  /// The hour before, stepping the weekday back across midnight. Year and
  /// month stay fixed since the day of month is unknown.
  TimeSlot previous_hour() const noexcept;

  bool is_valid() const noexcept;

  friend bool operator==(const TimeSlot&, const TimeSlot&) = default;
  friend auto operator<=>(const TimeSlot&, const TimeSlot&) = default;
};

/// One recorded accident.
struct Event {
  std::string id;
  GeoPoint location;
  TimeSlot time;
  std::string accident_type;
  std::string road_condition;

  friend bool operator==(const Event&, const Event&) = default;
};

}  // namespace acap
