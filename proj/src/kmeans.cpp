#include <algorithm>
#include <cmath>
#include <limits>

#include "acap/cluster.hpp"
#include "acap/errors.hpp"

namespace acap {

namespace {

double sq_dist(const GeoPoint& a, const GeoPoint& b) {
  double dl = a.lat - b.lat;
  double dn = a.lon - b.lon;
  return dl * dl + dn * dn;
}

std::vector<GeoPoint> plus_plus_seeds(std::span<const GeoPoint> points, int k,
                                      std::mt19937_64& rng) {
  std::vector<GeoPoint> seeds;
  std::uniform_int_distribution<std::size_t> first(0, points.size() - 1);
  seeds.push_back(points[first(rng)]);
  std::vector<double> d2(points.size(), std::numeric_limits<double>::infinity());
  while (static_cast<int>(seeds.size()) < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      d2[i] = std::min(d2[i], sq_dist(points[i], seeds.back()));
      total += d2[i];
    }
    if (total <= 0.0) {
      // All remaining mass sits on existing seeds (duplicate points).
      seeds.push_back(points[first(rng)]);
      continue;
    }
    std::uniform_real_distribution<double> u(0.0, total);
    double target = u(rng);
    std::size_t chosen = points.size() - 1;
    double acc = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      acc += d2[i];
      if (acc >= target && d2[i] > 0.0) {
        chosen = i;
        break;
      }
    }
    seeds.push_back(points[chosen]);
  }
  return seeds;
}

}  // namespace

KMeansResult kmeans(std::span<const GeoPoint> points, int k, std::mt19937_64& rng, int max_iter,
                    double tol_deg) {
  if (k < 1) throw DomainError("k must be at least 1");
  if (static_cast<std::size_t>(k) > points.size()) {
    throw DomainError("k = " + std::to_string(k) + " exceeds the number of points (" +
                      std::to_string(points.size()) + ")");
  }
  for (const auto& p : points) validate(p);

  KMeansResult res;
  res.centroids = plus_plus_seeds(points, k, rng);
  res.labels.assign(points.size(), 0);

  for (int iter = 0; iter < max_iter; ++iter) {
    for (std::size_t i = 0; i < points.size(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        double d = sq_dist(points[i], res.centroids[static_cast<std::size_t>(c)]);
        if (d < best) {
          best = d;
          res.labels[i] = c;
        }
      }
    }

    std::vector<GeoPoint> sums(static_cast<std::size_t>(k), GeoPoint{0.0, 0.0});
    std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
      auto c = static_cast<std::size_t>(res.labels[i]);
      sums[c].lat += points[i].lat;
      sums[c].lon += points[i].lon;
      ++counts[c];
    }

    double max_move = 0.0;
    for (std::size_t c = 0; c < sums.size(); ++c) {
      GeoPoint next = res.centroids[c];
      if (counts[c] > 0) {
        next = {sums[c].lat / static_cast<double>(counts[c]),
                sums[c].lon / static_cast<double>(counts[c])};
      } else {
        // Re-seed an empty cluster with the point worst served by its centroid.
        std::size_t worst = 0;
        double worst_d = -1.0;
        for (std::size_t i = 0; i < points.size(); ++i) {
          double d = sq_dist(points[i], res.centroids[static_cast<std::size_t>(res.labels[i])]);
          if (d > worst_d) {
            worst_d = d;
            worst = i;
          }
        }
        next = points[worst];
        res.labels[worst] = static_cast<int>(c);
      }
      max_move = std::max({max_move, std::abs(next.lat - res.centroids[c].lat),
                           std::abs(next.lon - res.centroids[c].lon)});
      res.centroids[c] = next;
    }

    double wcss = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      wcss += sq_dist(points[i], res.centroids[static_cast<std::size_t>(res.labels[i])]);
    }
    res.wcss_history.push_back(wcss);
    res.wcss = wcss;
    res.iterations = iter + 1;
    if (max_move < tol_deg) break;
  }
  return res;
}

ElbowResult elbow_from_curve(std::vector<double> wcss) {
  ElbowResult out;
  out.wcss = std::move(wcss);
  out.k = 1;
  out.flat = true;
  if (out.wcss.size() < 3 || !(out.wcss.front() > 0.0)) return out;

  // Second differences of log-WCSS: log(W(k-1)) - 2 log(W(k)) + log(W(k+1))
  // is the log of how much the relative drop flattens after k.
  constexpr double kFloor = 1e-300;
  constexpr double kMinCurvature = 0.6931471805599453;  // the drop must at least halve
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i + 1 < out.wcss.size(); ++i) {
    double prev = std::log(std::max(out.wcss[i - 1], kFloor));
    double cur = std::log(std::max(out.wcss[i], kFloor));
    double next = std::log(std::max(out.wcss[i + 1], kFloor));
    double curvature = prev - 2.0 * cur + next;
    if (curvature > best) {
      best = curvature;
      out.k = static_cast<int>(i) + 1;
    }
  }
  if (best < kMinCurvature) {
    out.k = 1;
    out.flat = true;
  } else {
    out.flat = false;
  }
  return out;
}

ElbowResult elbow_k(std::span<const GeoPoint> points, int k_max, std::mt19937_64& rng,
                    int restarts) {
  if (k_max < 2) throw DomainError("elbow search needs k_max >= 2");
  k_max = std::min<int>(k_max, static_cast<int>(points.size()));
  std::vector<double> curve;
  for (int k = 1; k <= k_max; ++k) {
    double best = std::numeric_limits<double>::infinity();
    for (int r = 0; r < std::max(1, restarts); ++r) best = std::min(best, kmeans(points, k, rng).wcss);
    curve.push_back(best);
  }
  return elbow_from_curve(std::move(curve));
}

}  // namespace acap
