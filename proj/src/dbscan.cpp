#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numbers>
#include <numeric>
#include <set>

#include "acap/cluster.hpp"
#include "acap/errors.hpp"

namespace acap {

namespace {

constexpr int kUnvisited = -2;

double meters_to_lat_deg(double m) { return m / kEarthRadiusMeters * 180.0 / std::numbers::pi; }

/// Latitude-sorted index answering "all points within eps" queries.
class LatIndex {
 public:
  explicit LatIndex(std::span<const GeoPoint> points) : points_(points), order_(points.size()) {
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::sort(order_.begin(), order_.end(),
              [&](std::size_t a, std::size_t b) { return points_[a].lat < points_[b].lat; });
    lats_.reserve(order_.size());
    for (auto i : order_) lats_.push_back(points_[i].lat);
  }

  std::vector<std::size_t> within(std::size_t i, double eps_m) const {
    double band = meters_to_lat_deg(eps_m);
    const GeoPoint& p = points_[i];
    auto lo = std::lower_bound(lats_.begin(), lats_.end(), p.lat - band);
    std::vector<std::size_t> out;
    for (auto it = lo; it != lats_.end() && *it <= p.lat + band; ++it) {
      std::size_t j = order_[static_cast<std::size_t>(it - lats_.begin())];
      if (haversine(p, points_[j]) <= eps_m) out.push_back(j);
    }
    return out;
  }

 private:
  std::span<const GeoPoint> points_;
  std::vector<std::size_t> order_;
  std::vector<double> lats_;
};

std::vector<std::size_t> canonical_order(std::span<const GeoPoint> points) {
  std::vector<std::string> keys;
  keys.reserve(points.size());
  for (const auto& p : points) keys.push_back(encode(p, kMaxGeohashPrecision).code());
  std::vector<std::size_t> order(points.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return keys[a] != keys[b] ? keys[a] < keys[b] : a < b;
  });
  return order;
}

}  // namespace

std::vector<int> dbscan(std::span<const GeoPoint> points, double eps_m, int min_pts) {
  if (!(eps_m > 0.0)) throw DomainError("DBSCAN eps must be positive");
  if (min_pts < 1) throw DomainError("DBSCAN min_pts must be at least 1");
  for (const auto& p : points) validate(p);

  const auto order = canonical_order(points);
  std::vector<std::size_t> rank(points.size());
  for (std::size_t r = 0; r < order.size(); ++r) rank[order[r]] = r;
  auto by_rank = [&](std::size_t a, std::size_t b) { return rank[a] < rank[b]; };

  LatIndex index(points);
  std::vector<int> labels(points.size(), kUnvisited);
  int cluster = 0;
  for (std::size_t seed : order) {
    if (labels[seed] != kUnvisited) continue;
    auto seeds = index.within(seed, eps_m);
    if (static_cast<int>(seeds.size()) < min_pts) {
      labels[seed] = kNoiseLabel;
      continue;
    }
    labels[seed] = cluster;
    std::sort(seeds.begin(), seeds.end(), by_rank);
    std::deque<std::size_t> queue(seeds.begin(), seeds.end());
    while (!queue.empty()) {
      std::size_t j = queue.front();
      queue.pop_front();
      if (labels[j] == kNoiseLabel) labels[j] = cluster;  // border point
      if (labels[j] != kUnvisited) continue;
      labels[j] = cluster;
      auto nbrs = index.within(j, eps_m);
      if (static_cast<int>(nbrs.size()) >= min_pts) {
        std::sort(nbrs.begin(), nbrs.end(), by_rank);
        queue.insert(queue.end(), nbrs.begin(), nbrs.end());
      }
    }
    ++cluster;
  }
  return labels;
}

std::vector<double> estimate_eps_dmdbscan(std::span<const GeoPoint> points, int k) {
  if (points.size() < 3) throw DomainError("DMDBSCAN needs at least 3 points");
  if (k < 1 || static_cast<std::size_t>(k) >= points.size()) {
    throw DomainError("neighbor rank k must be in 1..n-1");
  }
  for (const auto& p : points) validate(p);

  std::vector<double> kdist;
  kdist.reserve(points.size());
  std::vector<double> d(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = 0; j < points.size(); ++j) d[j] = haversine(points[i], points[j]);
    // d contains the self-distance 0, so the k-th neighbor sits at position k.
    std::nth_element(d.begin(), d.begin() + k, d.end());
    kdist.push_back(d[static_cast<std::size_t>(k)]);
  }
  std::sort(kdist.begin(), kdist.end());

  // Split the curve wherever consecutive values jump by more than 1.5x; each
  // sufficiently populated segment is one density level.
  constexpr double kJumpRatio = 1.5;
  const std::size_t min_segment = std::max<std::size_t>(3, points.size() / 20);
  std::vector<std::pair<std::size_t, std::size_t>> segments;
  std::size_t start = 0;
  for (std::size_t i = 1; i <= kdist.size(); ++i) {
    bool split = i == kdist.size() || (kdist[i - 1] > 0.0 && kdist[i] / kdist[i - 1] > kJumpRatio);
    if (split) {
      if (i - start >= min_segment) segments.emplace_back(start, i);
      start = i;
    }
  }
  if (segments.empty()) segments.emplace_back(0, kdist.size());

  std::vector<double> candidates;
  for (auto [lo, hi] : segments) {
    double vmin = kdist[lo];
    double vmax = kdist[hi - 1];
    if (vmax <= 0.0) continue;
    if (vmin > 0.0 && vmax / vmin <= 1.1) {
      candidates.push_back(vmax);
      continue;
    }
    // Kneedle on the normalized segment: the knee of an increasing convex curve
    // is where it falls furthest below the chord.
    std::size_t n = hi - lo;
    std::size_t knee = hi - 1;
    double best = -1.0;
    for (std::size_t i = lo; i < hi; ++i) {
      double x = n > 1 ? static_cast<double>(i - lo) / static_cast<double>(n - 1) : 0.0;
      double y = (kdist[i] - vmin) / (vmax - vmin);
      if (x - y > best) {
        best = x - y;
        knee = i;
      }
    }
    candidates.push_back(kdist[knee]);
  }
  std::sort(candidates.begin(), candidates.end());
  std::vector<double> unique;
  for (double c : candidates) {
    if (unique.empty() || c > unique.back() * 1.01) unique.push_back(c);
  }
  if (unique.empty()) unique.push_back(kdist.back() > 0.0 ? kdist.back() : 1.0);
  return unique;
}

double silhouette(std::span<const GeoPoint> points, std::span<const int> labels) {
  if (points.size() != labels.size()) throw DomainError("points and labels differ in length");
  std::set<int> distinct(labels.begin(), labels.end());
  if (distinct.size() < 2) throw DomainError("silhouette needs at least two clusters");

  std::map<int, std::size_t> slot;
  for (int l : distinct) slot.emplace(l, slot.size());
  std::vector<std::size_t> size(slot.size(), 0);
  for (int l : labels) ++size[slot.at(l)];

  double total = 0.0;
  std::vector<double> sums(slot.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    std::fill(sums.begin(), sums.end(), 0.0);
    for (std::size_t j = 0; j < points.size(); ++j) {
      if (i != j) sums[slot.at(labels[j])] += haversine(points[i], points[j]);
    }
    std::size_t own = slot.at(labels[i]);
    if (size[own] <= 1) continue;  // singleton: s = 0
    double a = sums[own] / static_cast<double>(size[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < sums.size(); ++c) {
      if (c != own) b = std::min(b, sums[c] / static_cast<double>(size[c]));
    }
    double denom = std::max(a, b);
    if (denom > 0.0) total += (b - a) / denom;
  }
  return total / static_cast<double>(points.size());
}

DbscanSelection select_dbscan_params(std::span<const GeoPoint> points,
                                     std::span<const int> min_pts_grid) {
  DbscanSelection best;
  for (double eps : estimate_eps_dmdbscan(points)) {
    for (int n : min_pts_grid) {
      auto labels = dbscan(points, eps, n);
      std::vector<GeoPoint> kept;
      std::vector<int> kept_labels;
      for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != kNoiseLabel) {
          kept.push_back(points[i]);
          kept_labels.push_back(labels[i]);
        }
      }
      std::set<int> distinct(kept_labels.begin(), kept_labels.end());
      if (distinct.size() < 2) continue;
      double score = silhouette(kept, kept_labels);
      if (score > best.score) best = {eps, n, score, std::move(labels)};
    }
  }
  if (best.labels.empty()) {
    throw DomainError("no DBSCAN parameter pair produced two or more clusters");
  }
  return best;
}

DbscanAggregation::DbscanAggregation(std::span<const GeoPoint> points,
                                     std::span<const int> labels, double eps_m, int min_pts)
    : eps_m_(eps_m), min_pts_(min_pts) {
  if (points.size() != labels.size()) throw DomainError("points and labels differ in length");
  LatIndex index(points);
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (labels[i] == kNoiseLabel) continue;
    if (static_cast<int>(index.within(i, eps_m).size()) >= min_pts) {
      cores_by_lat_.push_back({points[i], labels[i]});
    }
  }
  std::sort(cores_by_lat_.begin(), cores_by_lat_.end(),
            [](const Core& a, const Core& b) { return a.p.lat < b.p.lat; });
}

RegionId DbscanAggregation::assign(const GeoPoint& point) const {
  validate(point);
  double band = meters_to_lat_deg(eps_m_);
  auto lo = std::lower_bound(cores_by_lat_.begin(), cores_by_lat_.end(), point.lat - band,
                             [](const Core& c, double v) { return c.p.lat < v; });
  double best = std::numeric_limits<double>::infinity();
  int label = kNoiseLabel;
  for (auto it = lo; it != cores_by_lat_.end() && it->p.lat <= point.lat + band; ++it) {
    double d = haversine(point, it->p);
    if (d <= eps_m_ && (d < best || (d == best && it->label < label))) {
      best = d;
      label = it->label;
    }
  }
  if (label == kNoiseLabel) return {RegionKind::Noise, 0, {}};
  return {RegionKind::Prototype, label, {}};
}

nlohmann::json DbscanAggregation::to_json() const {
  nlohmann::json cores = nlohmann::json::array();
  for (const auto& c : cores_by_lat_) cores.push_back({c.p.lat, c.p.lon, c.label});
  return {{"kind", "dbscan"}, {"eps_m", eps_m_}, {"min_pts", min_pts_}, {"cores", std::move(cores)}};
}

}  // namespace acap
