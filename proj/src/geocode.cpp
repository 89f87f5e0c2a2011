#include "acap/geocode.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "acap/errors.hpp"

namespace acap {

namespace {

int char_value(char c) {
  auto pos = kGeohashAlphabet.find(c);
  return pos == std::string_view::npos ? -1 : static_cast<int>(pos);
}

double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }

}  // namespace

bool is_valid(const GeoPoint& p) noexcept {
  return std::isfinite(p.lat) && std::isfinite(p.lon) && p.lat >= -90.0 && p.lat <= 90.0 &&
         p.lon >= -180.0 && p.lon <= 180.0;
}

void validate(const GeoPoint& p) {
  if (!is_valid(p)) {
    throw DomainError("coordinate out of range: lat=" + std::to_string(p.lat) +
                      " lon=" + std::to_string(p.lon));
  }
}

GeohashCell::GeohashCell(std::string code) : code_(std::move(code)) {
  if (code_.empty() || code_.size() > static_cast<std::size_t>(kMaxGeohashPrecision)) {
    throw ParseError("geohash length must be 1.." + std::to_string(kMaxGeohashPrecision) +
                     ", got '" + code_ + "'");
  }
  for (char c : code_) {
    if (char_value(c) < 0) {
      throw ParseError("invalid geohash character '" + std::string(1, c) + "' in '" + code_ + "'");
    }
  }
}

GeohashCell GeohashCell::parent(int precision) const {
  if (precision < 1 || precision > this->precision()) {
    throw DomainError("parent precision " + std::to_string(precision) + " invalid for '" + code_ +
                      "'");
  }
  return GeohashCell(code_.substr(0, static_cast<std::size_t>(precision)));
}

GeohashCell encode(const GeoPoint& point, int precision) {
  validate(point);
  if (precision < 1 || precision > kMaxGeohashPrecision) {
    throw DomainError("geohash precision must be 1.." + std::to_string(kMaxGeohashPrecision));
  }
  double lat_lo = -90.0, lat_hi = 90.0;
  double lon_lo = -180.0, lon_hi = 180.0;
  std::string code;
  code.reserve(static_cast<std::size_t>(precision));
  bool even = true;  // even bits refine longitude
  int bit = 0;
  int value = 0;
  while (static_cast<int>(code.size()) < precision) {
    if (even) {
      double mid = (lon_lo + lon_hi) / 2.0;
      if (point.lon >= mid) {
        value = value * 2 + 1;
        lon_lo = mid;
      } else {
        value *= 2;
        lon_hi = mid;
      }
    } else {
      double mid = (lat_lo + lat_hi) / 2.0;
      if (point.lat >= mid) {
        value = value * 2 + 1;
        lat_lo = mid;
      } else {
        value *= 2;
        lat_hi = mid;
      }
    }
    even = !even;
    if (++bit == 5) {
      code.push_back(kGeohashAlphabet[static_cast<std::size_t>(value)]);
      bit = 0;
      value = 0;
    }
  }
  return GeohashCell(std::move(code));
}

DecodedCell decode(const GeohashCell& cell) {
  BoundingBox box{-90.0, 90.0, -180.0, 180.0};
  bool even = true;
  for (char c : cell.code()) {
    int v = char_value(c);
    for (int shift = 4; shift >= 0; --shift) {
      bool one = ((v >> shift) & 1) != 0;
      if (even) {
        double mid = (box.lon_min + box.lon_max) / 2.0;
        (one ? box.lon_min : box.lon_max) = mid;
      } else {
        double mid = (box.lat_min + box.lat_max) / 2.0;
        (one ? box.lat_min : box.lat_max) = mid;
      }
      even = !even;
    }
  }
  return {box, box.center()};
}

CellSize cell_size(int precision) {
  if (precision < 1 || precision > kMaxGeohashPrecision) {
    throw DomainError("geohash precision must be 1.." + std::to_string(kMaxGeohashPrecision));
  }
  int bits = 5 * precision;
  int lon_bits = (bits + 1) / 2;
  int lat_bits = bits / 2;
  return {180.0 / std::ldexp(1.0, lat_bits), 360.0 / std::ldexp(1.0, lon_bits)};
}

GeohashCell neighbor(const GeohashCell& cell, Direction dir) {
  auto [box, center] = decode(cell);
  int dlat = 0, dlon = 0;
  switch (dir) {
    case Direction::N: dlat = 1; break;
    case Direction::NE: dlat = 1; dlon = 1; break;
    case Direction::E: dlon = 1; break;
    case Direction::SE: dlat = -1; dlon = 1; break;
    case Direction::S: dlat = -1; break;
    case Direction::SW: dlat = -1; dlon = -1; break;
    case Direction::W: dlon = -1; break;
    case Direction::NW: dlat = 1; dlon = -1; break;
  }
  if ((dlat > 0 && box.lat_max >= 90.0) || (dlat < 0 && box.lat_min <= -90.0)) {
    throw UnsupportedRegionError("neighbor of '" + cell.code() + "' crosses a pole");
  }
  if ((dlon > 0 && box.lon_max >= 180.0) || (dlon < 0 && box.lon_min <= -180.0)) {
    throw UnsupportedRegionError("neighbor of '" + cell.code() + "' crosses the antimeridian");
  }
  GeoPoint next{center.lat + dlat * box.lat_span(), center.lon + dlon * box.lon_span()};
  return encode(next, cell.precision());
}

std::array<GeohashCell, 8> neighbors8(const GeohashCell& cell) {
  return {neighbor(cell, Direction::N),  neighbor(cell, Direction::NE),
          neighbor(cell, Direction::E),  neighbor(cell, Direction::SE),
          neighbor(cell, Direction::S),  neighbor(cell, Direction::SW),
          neighbor(cell, Direction::W),  neighbor(cell, Direction::NW)};
}

double haversine(const GeoPoint& a, const GeoPoint& b) {
  validate(a);
  validate(b);
  double phi1 = deg2rad(a.lat);
  double phi2 = deg2rad(b.lat);
  double sdphi = std::sin((phi2 - phi1) / 2.0);
  double sdlam = std::sin(deg2rad(b.lon - a.lon) / 2.0);
  double h = sdphi * sdphi + std::cos(phi1) * std::cos(phi2) * sdlam * sdlam;
  return 2.0 * kEarthRadiusMeters * std::asin(std::min(1.0, std::sqrt(h)));
}

std::vector<GeohashCell> cells_covering(const BoundingBox& box, int precision) {
  auto size = cell_size(precision);
  auto first = [](double lo, double origin, double step) {
    return static_cast<long long>(std::ceil((lo - origin) / step - 0.5));
  };
  auto last = [](double hi, double origin, double step) {
    return static_cast<long long>(std::floor((hi - origin) / step - 0.5));
  };
  std::vector<GeohashCell> cells;
  for (long long i = first(box.lat_min, -90.0, size.lat_deg);
       i <= last(box.lat_max, -90.0, size.lat_deg); ++i) {
    double lat = -90.0 + (static_cast<double>(i) + 0.5) * size.lat_deg;
    for (long long j = first(box.lon_min, -180.0, size.lon_deg);
         j <= last(box.lon_max, -180.0, size.lon_deg); ++j) {
      double lon = -180.0 + (static_cast<double>(j) + 0.5) * size.lon_deg;
      cells.push_back(encode({lat, lon}, precision));
    }
  }
  std::sort(cells.begin(), cells.end());
  return cells;
}

}  // namespace acap
