#include <algorithm>
#include <limits>

#include "acap/cluster.hpp"
#include "acap/errors.hpp"

namespace acap {

std::string to_string(RegionKind kind) {
  switch (kind) {
    case RegionKind::GrownCluster: return "cluster";
    case RegionKind::BaseGridFallback: return "fallback";
    case RegionKind::GridCell: return "grid";
    case RegionKind::Prototype: return "prototype";
    case RegionKind::Noise: return "noise";
  }
  return "unknown";
}

std::string RegionId::to_string() const {
  std::string out = acap::to_string(kind) + ":" + std::to_string(index);
  if (!code.empty()) out += ":" + code;
  return out;
}

std::map<RegionId, std::vector<GeohashCell>> Aggregation::region_cells(
    std::span<const GeohashCell> area_cells) const {
  std::map<RegionId, std::vector<GeohashCell>> out;
  for (const auto& cell : area_cells) out[assign(decode(cell).center)].push_back(cell);
  return out;
}

GridAggregation::GridAggregation(int precision) : precision_(precision) {
  if (precision < 1 || precision > kMaxGeohashPrecision) {
    throw ConfigError("grid precision must lie in 1..12");
  }
}

// The two study grids carry their command-line names.
std::string GridAggregation::name() const {
  if (precision_ == 6) return "g1";
  if (precision_ == 5) return "g5";
  return "grid" + std::to_string(precision_);
}

RegionId GridAggregation::assign(const GeoPoint& point) const {
  return {RegionKind::GridCell, 0, encode(point, precision_).code()};
}

nlohmann::json GridAggregation::to_json() const {
  return {{"kind", "grid"}, {"precision", precision_}};
}

CoordinateScaling CoordinateScaling::fit(std::span<const GeoPoint> points) {
  if (points.empty()) throw DomainError("cannot fit a scaling to zero points");
  auto [lat_lo, lat_hi] = std::minmax_element(
      points.begin(), points.end(), [](const auto& a, const auto& b) { return a.lat < b.lat; });
  auto [lon_lo, lon_hi] = std::minmax_element(
      points.begin(), points.end(), [](const auto& a, const auto& b) { return a.lon < b.lon; });
  CoordinateScaling s;
  s.lat_min = lat_lo->lat;
  s.lon_min = lon_lo->lon;
  s.lat_range = lat_hi->lat - lat_lo->lat;
  s.lon_range = lon_hi->lon - lon_lo->lon;
  if (s.lat_range <= 0.0) s.lat_range = 1.0;
  if (s.lon_range <= 0.0) s.lon_range = 1.0;
  return s;
}

PrototypeAggregation::PrototypeAggregation(std::string name,
                                           std::vector<std::array<double, 2>> prototypes,
                                           CoordinateScaling scaling)
    : name_(std::move(name)), prototypes_(std::move(prototypes)), scaling_(scaling) {
  if (prototypes_.empty()) throw DomainError("prototype aggregation needs at least one prototype");
}

RegionId PrototypeAggregation::assign(const GeoPoint& point) const {
  validate(point);
  auto x = scaling_.apply(point);
  double best = std::numeric_limits<double>::infinity();
  int best_i = 0;
  for (std::size_t i = 0; i < prototypes_.size(); ++i) {
    double d0 = x[0] - prototypes_[i][0];
    double d1 = x[1] - prototypes_[i][1];
    double d = d0 * d0 + d1 * d1;
    if (d < best) {
      best = d;
      best_i = static_cast<int>(i);
    }
  }
  return {RegionKind::Prototype, best_i, {}};
}

nlohmann::json PrototypeAggregation::to_json() const {
  nlohmann::json protos = nlohmann::json::array();
  for (const auto& p : prototypes_) protos.push_back({p[0], p[1]});
  return {{"kind", "prototype"},
          {"name", name_},
          {"scaling",
           {{"lat_min", scaling_.lat_min},
            {"lat_range", scaling_.lat_range},
            {"lon_min", scaling_.lon_min},
            {"lon_range", scaling_.lon_range}}},
          {"prototypes", std::move(protos)}};
}

}  // namespace acap
