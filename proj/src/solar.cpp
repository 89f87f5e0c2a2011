#include <algorithm>
#include <cmath>
#include <numbers>

#include "acap/errors.hpp"
#include "acap/features.hpp"

namespace acap {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

/// Julian day of a proleptic Gregorian date at a fractional UTC hour.
double julian_day(int year, int month, int day, double hour_utc) {
  if (month <= 2) {
    year -= 1;
    month += 12;
  }
  const int a = year / 100;
  const int b = 2 - a + a / 4;
  return std::floor(365.25 * (year + 4716)) + std::floor(30.6001 * (month + 1)) + day + b - 1524.5 +
         hour_utc / 24.0;
}

}  // namespace

SolarGeometry solar_position(int year, int month, double hour_utc, const GeoPoint& location,
                             int day) {
  validate(location);
  if (month < 1 || month > 12) throw DomainError("month must be 1..12");
  if (day < 1 || day > 31) throw DomainError("day must be 1..31");
  if (!(hour_utc >= 0.0 && hour_utc < 24.0)) throw DomainError("hour must be in [0, 24)");

  // Low-accuracy solar coordinates after Meeus; about 0.01 degrees for
  // 1950..2050.
  const double jd = julian_day(year, month, day, hour_utc);
  const double t = (jd - 2451545.0) / 36525.0;
  const double mean_long = 280.46646 + t * (36000.76983 + 0.0003032 * t);
  const double mean_anom = (357.52911 + t * (35999.05029 - 0.0001537 * t)) * kDeg;
  const double center = (1.914602 - t * (0.004817 + 0.000014 * t)) * std::sin(mean_anom) +
                        (0.019993 - 0.000101 * t) * std::sin(2 * mean_anom) +
                        0.000289 * std::sin(3 * mean_anom);
  const double node = (125.04 - 1934.136 * t) * kDeg;
  const double apparent_long = (mean_long + center - 0.00569 - 0.00478 * std::sin(node)) * kDeg;
  const double obliquity = (23.439291 - 0.0130042 * t + 0.00256 * std::cos(node)) * kDeg;
  const double decl = std::asin(std::sin(obliquity) * std::sin(apparent_long));
  const double right_asc =
      std::atan2(std::cos(obliquity) * std::sin(apparent_long), std::cos(apparent_long));
  const double sidereal_deg = 280.46061837 + 360.98564736629 * (jd - 2451545.0);
  const double hour_angle = std::remainder(sidereal_deg + location.lon - right_asc / kDeg, 360.0) * kDeg;
  const double lat = location.lat * kDeg;

  double cos_zenith =
      std::sin(lat) * std::sin(decl) + std::cos(lat) * std::cos(decl) * std::cos(hour_angle);
  cos_zenith = std::clamp(cos_zenith, -1.0, 1.0);
  const double elevation = 90.0 - std::acos(cos_zenith) / kDeg;

  double azimuth = std::atan2(std::sin(hour_angle),
                              std::cos(hour_angle) * std::sin(lat) - std::tan(decl) * std::cos(lat)) /
                       kDeg +
                   180.0;
  azimuth = std::fmod(azimuth, 360.0);
  if (azimuth < 0.0) azimuth += 360.0;
  if (azimuth >= 360.0) azimuth = 0.0;
  return {elevation, azimuth};
}

int berlin_utc_offset_hours(int month) {
  if (month < 1 || month > 12) throw DomainError("month must be 1..12");
  // Summer time runs from the last Sunday of March to the last Sunday of
  // October; both switches fall after the 15th.
  return (month >= 4 && month <= 10) ? 2 : 1;
}

}  // namespace acap
