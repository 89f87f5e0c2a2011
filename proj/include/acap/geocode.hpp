#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace acap {

/// WGS84 coordinate in degrees.
struct GeoPoint {
  double lat = 0.0;
  double lon = 0.0;

  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;
};

bool is_valid(const GeoPoint& p) noexcept;

/// Throws DomainError when the point is NaN or out of range.
void validate(const GeoPoint& p);

inline constexpr double kEarthRadiusMeters = 6'371'000.0;
inline constexpr int kMaxGeohashPrecision = 12;
inline constexpr std::string_view kGeohashAlphabet = "0123456789bcdefghjkmnpqrstuvwxyz";

/// A geohash cell code. Always holds a non-empty code over the base-32
/// alphabet with 1..12 characters.
class GeohashCell {
 public:
  /// Parses and validates `code`; throws ParseError on bad input.
  explicit GeohashCell(std::string code);

  const std::string& code() const noexcept { return code_; }
  int precision() const noexcept { return static_cast<int>(code_.size()); }

  /// Ancestor cell at a coarser precision (a prefix of this code).
  GeohashCell parent(int precision) const;

  friend bool operator==(const GeohashCell&, const GeohashCell&) = default;
  friend auto operator<=>(const GeohashCell&, const GeohashCell&) = default;

 private:
  std::string code_;
};

struct BoundingBox {
  double lat_min = 0.0;
  double lat_max = 0.0;
  double lon_min = 0.0;
  double lon_max = 0.0;

  bool contains(const GeoPoint& p) const noexcept {
    return p.lat >= lat_min && p.lat <= lat_max && p.lon >= lon_min && p.lon <= lon_max;
  }
  GeoPoint center() const noexcept { return {(lat_min + lat_max) / 2.0, (lon_min + lon_max) / 2.0}; }
  double lat_span() const noexcept { return lat_max - lat_min; }
  double lon_span() const noexcept { return lon_max - lon_min; }
};

struct DecodedCell {
  BoundingBox bbox;
  GeoPoint center;
};

/// Standard geohash of `point` (longitude bit first).
GeohashCell encode(const GeoPoint& point, int precision);

DecodedCell decode(const GeohashCell& cell);

/// Cell height and width in degrees at a given precision.
struct CellSize {
  double lat_deg;
  double lon_deg;
};
CellSize cell_size(int precision);

enum class Direction { N, NE, E, SE, S, SW, W, NW };
inline constexpr std::array<Direction, 8> kAllDirections = {
    Direction::N, Direction::NE, Direction::E, Direction::SE,
    Direction::S, Direction::SW, Direction::W, Direction::NW};

/// Adjacent cell in one direction at the same precision. Throws
/// UnsupportedRegionError if the step would cross a pole or the antimeridian.
GeohashCell neighbor(const GeohashCell& cell, Direction dir);

/// The 8 surrounding cells in N, NE, E, SE, S, SW, W, NW order.
std::array<GeohashCell, 8> neighbors8(const GeohashCell& cell);

/// Great-circle distance on a sphere of radius kEarthRadiusMeters.
double haversine(const GeoPoint& a, const GeoPoint& b);

/// All cells of the given precision whose centers fall inside `box`, ordered by
/// code.
std::vector<GeohashCell> cells_covering(const BoundingBox& box, int precision);

}  // namespace acap

template <>
struct std::hash<acap::GeohashCell> {
  std::size_t operator()(const acap::GeohashCell& c) const noexcept {
    return std::hash<std::string>{}(c.code());
  }
};
