#include <algorithm>
#include <cmath>
#include <numbers>
#include <queue>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "acap/cluster.hpp"
#include "acap/errors.hpp"

namespace acap {

void GridGrowingParams::validate() const {
  if (delta_detail < 1 || delta_detail > kMaxGeohashPrecision || delta_base < 1 ||
      delta_base > kMaxGeohashPrecision) {
    throw ConfigError("grid precisions must lie in 1..12");
  }
  if (delta_base >= delta_detail) {
    throw ConfigError("base grid precision must be coarser than the detail precision");
  }
  if (!(distance_threshold_m > 0.0) || !std::isfinite(distance_threshold_m)) {
    throw ConfigError("distance threshold must be a positive number of meters");
  }
}

namespace {

bool is_8_connected(const std::vector<GeohashCell>& cells) {
  std::unordered_set<GeohashCell> members(cells.begin(), cells.end());
  std::unordered_set<GeohashCell> seen{cells.front()};
  std::vector<GeohashCell> stack{cells.front()};
  while (!stack.empty()) {
    GeohashCell cur = stack.back();
    stack.pop_back();
    for (const auto& n : neighbors8(cur)) {
      if (members.contains(n) && seen.insert(n).second) stack.push_back(n);
    }
  }
  return seen.size() == members.size();
}

}  // namespace

ClusterModel::ClusterModel(GridGrowingParams params, std::vector<std::vector<GeohashCell>> clusters)
    : params_(params), clusters_(std::move(clusters)) {
  params_.validate();
  std::set<GeohashCell> all;
  for (auto& cluster : clusters_) {
    if (cluster.empty()) throw DomainError("cluster with no cells");
    std::sort(cluster.begin(), cluster.end());
    for (const auto& cell : cluster) {
      if (cell.precision() != params_.delta_detail) {
        throw DomainError("cluster cell '" + cell.code() + "' does not have detail precision");
      }
      if (!all.insert(cell).second) {
        throw DomainError("cell '" + cell.code() + "' belongs to more than one cluster");
      }
    }
    if (!is_8_connected(cluster)) {
      throw DomainError("cluster starting at '" + cluster.front().code() + "' is not 8-connected");
    }
  }
  std::sort(clusters_.begin(), clusters_.end(),
            [](const auto& a, const auto& b) { return a.front() < b.front(); });
  build_index();
}

ClusterModel::ClusterModel(const ClusterModel& other)
    : params_(other.params_),
      clusters_(other.clusters_),
      centers_by_lat_(other.centers_by_lat_) {
  std::lock_guard lock(*other.overflow_mutex_);
  overflow_ = other.overflow_;
}

ClusterModel::ClusterModel(ClusterModel&& other) noexcept
    : params_(other.params_),
      clusters_(std::move(other.clusters_)),
      centers_by_lat_(std::move(other.centers_by_lat_)),
      overflow_(std::move(other.overflow_)) {}

ClusterModel& ClusterModel::operator=(ClusterModel other) noexcept {
  swap(*this, other);
  return *this;
}

void swap(ClusterModel& a, ClusterModel& b) noexcept {
  using std::swap;
  swap(a.params_, b.params_);
  swap(a.clusters_, b.clusters_);
  swap(a.centers_by_lat_, b.centers_by_lat_);
  swap(a.overflow_mutex_, b.overflow_mutex_);
  swap(a.overflow_, b.overflow_);
}

void ClusterModel::build_index() {
  centers_by_lat_.clear();
  for (std::size_t i = 0; i < clusters_.size(); ++i) {
    for (const auto& cell : clusters_[i]) {
      auto c = decode(cell).center;
      centers_by_lat_.push_back({c.lat, c.lon, static_cast<int>(i)});
    }
  }
  std::sort(centers_by_lat_.begin(), centers_by_lat_.end(),
            [](const MemberCenter& a, const MemberCenter& b) { return a.lat < b.lat; });
}

double ClusterModel::distance_to_cluster(const GeoPoint& point, std::size_t index) const {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& cell : clusters_.at(index)) {
    best = std::min(best, haversine(point, decode(cell).center));
  }
  return best;
}

RegionId ClusterModel::assign(const GeoPoint& point) const {
  validate(point);
  // Great-circle distance is at least R * |dlat|, so only members inside this
  // latitude band can be closer than the threshold.
  const double band_deg = params_.distance_threshold_m / kEarthRadiusMeters * 180.0 / std::numbers::pi;
  auto lo = std::lower_bound(centers_by_lat_.begin(), centers_by_lat_.end(), point.lat - band_deg,
                             [](const MemberCenter& m, double v) { return m.lat < v; });
  double best = std::numeric_limits<double>::infinity();
  int best_cluster = -1;
  for (auto it = lo; it != centers_by_lat_.end() && it->lat <= point.lat + band_deg; ++it) {
    double d = haversine(point, {it->lat, it->lon});
    if (d < best || (d == best && it->cluster < best_cluster)) {
      best = d;
      best_cluster = it->cluster;
    }
  }
  if (best_cluster >= 0 && best < params_.distance_threshold_m) {
    return {RegionKind::GrownCluster, best_cluster, {}};
  }
  std::string base = encode(point, params_.delta_base).code();
  std::lock_guard lock(*overflow_mutex_);
  auto [it, inserted] = overflow_.try_emplace(
      base, static_cast<int>(clusters_.size() + overflow_.size()));
  return {RegionKind::BaseGridFallback, it->second, base};
}

std::map<RegionId, std::vector<GeohashCell>> ClusterModel::region_cells(
    std::span<const GeohashCell> area_cells) const {
  std::map<RegionId, std::vector<GeohashCell>> out;
  for (std::size_t i = 0; i < clusters_.size(); ++i) {
    out[{RegionKind::GrownCluster, static_cast<int>(i), {}}] = clusters_[i];
  }
  for (const auto& cell : area_cells) {
    RegionId id = assign(decode(cell).center);
    if (id.kind == RegionKind::BaseGridFallback) out[id].push_back(cell);
  }
  return out;
}

std::map<std::string, int> ClusterModel::overflow_regions() const {
  std::lock_guard lock(*overflow_mutex_);
  return overflow_;
}

nlohmann::json ClusterModel::to_json() const {
  nlohmann::json clusters = nlohmann::json::array();
  for (const auto& cluster : clusters_) {
    nlohmann::json codes = nlohmann::json::array();
    for (const auto& cell : cluster) codes.push_back(cell.code());
    clusters.push_back(std::move(codes));
  }
  nlohmann::json overflow = nlohmann::json::object();
  for (const auto& [code, id] : overflow_regions()) overflow[code] = id;
  return {{"kind", "grid_growing"},
          {"params",
           {{"delta_detail", params_.delta_detail},
            {"delta_base", params_.delta_base},
            {"distance_threshold_m", params_.distance_threshold_m}}},
          {"clusters", std::move(clusters)},
          {"overflow", std::move(overflow)}};
}

ClusterModel ClusterModel::from_json(const nlohmann::json& doc) {
  try {
    GridGrowingParams params;
    const auto& p = doc.at("params");
    params.delta_detail = p.at("delta_detail").get<int>();
    params.delta_base = p.at("delta_base").get<int>();
    params.distance_threshold_m = p.at("distance_threshold_m").get<double>();
    std::vector<std::vector<GeohashCell>> clusters;
    for (const auto& c : doc.at("clusters")) {
      auto& cells = clusters.emplace_back();
      for (const auto& code : c) cells.emplace_back(code.get<std::string>());
    }
    ClusterModel model(params, std::move(clusters));
    if (doc.contains("overflow")) {
      for (const auto& [code, id] : doc.at("overflow").items()) {
        GeohashCell check(code);
        if (check.precision() != params.delta_base) {
          throw ParseError("overflow cell '" + code + "' does not have base precision");
        }
        model.overflow_[code] = id.get<int>();
      }
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed cluster model: ") + e.what());
  }
}

ClusterModel grid_grow(std::span<const GeoPoint> events, const GridGrowingParams& params,
                       std::mt19937_64& rng) {
  params.validate();
  if (events.empty()) throw DomainError("grid growing needs at least one event");

  std::vector<GeohashCell> event_cell;
  event_cell.reserve(events.size());
  std::unordered_map<GeohashCell, std::vector<std::size_t>> events_in_cell;
  for (std::size_t i = 0; i < events.size(); ++i) {
    event_cell.push_back(encode(events[i], params.delta_detail));
    events_in_cell[event_cell.back()].push_back(i);
  }

  std::vector<bool> marked(events.size(), false);
  std::vector<std::size_t> unmarked(events.size());
  for (std::size_t i = 0; i < unmarked.size(); ++i) unmarked[i] = i;

  std::vector<std::vector<GeohashCell>> clusters;
  while (!unmarked.empty()) {
    std::uniform_int_distribution<std::size_t> pick(0, unmarked.size() - 1);
    std::size_t seed = unmarked[pick(rng)];

    std::unordered_set<GeohashCell> region{event_cell[seed]};
    std::queue<GeohashCell> frontier;
    frontier.push(event_cell[seed]);
    while (!frontier.empty()) {
      GeohashCell cur = frontier.front();
      frontier.pop();
      for (const auto& n : neighbors8(cur)) {
        if (events_in_cell.contains(n) && region.insert(n).second) frontier.push(n);
      }
    }

    for (const auto& cell : region) {
      for (std::size_t e : events_in_cell.at(cell)) marked[e] = true;
    }
    std::erase_if(unmarked, [&](std::size_t e) { return marked[e]; });
    clusters.emplace_back(region.begin(), region.end());
  }
  return ClusterModel(params, std::move(clusters));
}

}  // namespace acap
