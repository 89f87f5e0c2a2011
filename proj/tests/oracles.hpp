#pragma once

// Test-only reference implementations. None of these call into the library;
// they reproduce the expected values by a different route.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace oracle {

constexpr double kPi = std::numbers::pi;
constexpr double kRad = kPi / 180.0;
constexpr double kEarthRadius = 6'371'000.0;
inline const std::string kBase32 = "0123456789bcdefghjkmnpqrstuvwxyz";

// ---------------------------------------------------------------------------
// Geohash by bit interleaving and the classic neighbor lookup tables.

inline std::string geohash_encode(double lat, double lon, int precision) {
  double lat_lo = -90, lat_hi = 90, lon_lo = -180, lon_hi = 180;
  std::string out;
  bool even = true;
  int bit = 0, ch = 0;
  while (static_cast<int>(out.size()) < precision) {
    if (even) {
      const double mid = (lon_lo + lon_hi) / 2;
      if (lon >= mid) {
        ch = ch * 2 + 1;
        lon_lo = mid;
      } else {
        ch = ch * 2;
        lon_hi = mid;
      }
    } else {
      const double mid = (lat_lo + lat_hi) / 2;
      if (lat >= mid) {
        ch = ch * 2 + 1;
        lat_lo = mid;
      } else {
        ch = ch * 2;
        lat_hi = mid;
      }
    }
    even = !even;
    if (++bit == 5) {
      out += kBase32[static_cast<std::size_t>(ch)];
      bit = 0;
      ch = 0;
    }
  }
  return out;
}

struct Box {
  double lat_lo, lat_hi, lon_lo, lon_hi;
};

inline Box geohash_decode(const std::string& code) {
  Box b{-90, 90, -180, 180};
  bool even = true;
  for (char c : code) {
    const int v = static_cast<int>(kBase32.find(c));
    for (int mask = 16; mask > 0; mask >>= 1) {
      const bool on = (v & mask) != 0;
      if (even) {
        const double mid = (b.lon_lo + b.lon_hi) / 2;
        (on ? b.lon_lo : b.lon_hi) = mid;
      } else {
        const double mid = (b.lat_lo + b.lat_hi) / 2;
        (on ? b.lat_lo : b.lat_hi) = mid;
      }
      even = !even;
    }
  }
  return b;
}

enum Side { kTop = 0, kRight = 1, kBottom = 2, kLeft = 3 };

inline std::string geohash_adjacent(const std::string& code, Side side) {
  // Tables for even-length codes; odd lengths swap top/right and bottom/left.
  static const std::array<std::string, 4> kNeighborEven = {
      "p0r21436x8zb9dcf5h7kjnmqesgutwvy", "bc01fg45238967deuvhjyznpkmstqrwx",
      "14365h7k9dcfesgujnmqp0r2twvyx8zb", "238967debc01fg45kmstqrwxuvhjyznp"};
  static const std::array<std::string, 4> kBorderEven = {"prxz", "bcfguvyz", "028b", "0145hjnp"};
  static const std::array<int, 4> kSwap = {kRight, kTop, kLeft, kBottom};
  const char last = code.back();
  std::string base = code.substr(0, code.size() - 1);
  const bool odd = code.size() % 2 == 1;
  const int table = odd ? kSwap[side] : side;
  if (kBorderEven[static_cast<std::size_t>(table)].find(last) != std::string::npos &&
      !base.empty()) {
    base = geohash_adjacent(base, side);
  }
  return base + kBase32[kNeighborEven[static_cast<std::size_t>(table)].find(last)];
}

/// Neighbors in N, NE, E, SE, S, SW, W, NW order.
inline std::array<std::string, 8> geohash_neighbors(const std::string& code) {
  const std::string n = geohash_adjacent(code, kTop);
  const std::string s = geohash_adjacent(code, kBottom);
  return {n,
          geohash_adjacent(n, kRight),
          geohash_adjacent(code, kRight),
          geohash_adjacent(s, kRight),
          s,
          geohash_adjacent(s, kLeft),
          geohash_adjacent(code, kLeft),
          geohash_adjacent(n, kLeft)};
}

/// Great-circle distance by the atan2 form of the Vincenty formula on a sphere.
inline double great_circle(double lat1, double lon1, double lat2, double lon2) {
  const double p1 = lat1 * kRad, p2 = lat2 * kRad, dl = (lon2 - lon1) * kRad;
  const double a = std::cos(p2) * std::sin(dl);
  const double b = std::cos(p1) * std::sin(p2) - std::sin(p1) * std::cos(p2) * std::cos(dl);
  const double c = std::sin(p1) * std::sin(p2) + std::cos(p1) * std::cos(p2) * std::cos(dl);
  return kEarthRadius * std::atan2(std::hypot(a, b), c);
}

// ---------------------------------------------------------------------------
// Connected components of occupied cells on the integer grid.

/// Integer (row, col) of a geohash cell of any fixed precision.
inline std::pair<long, long> grid_index(const std::string& code) {
  const Box b = geohash_decode(code);
  const double h = b.lat_hi - b.lat_lo, w = b.lon_hi - b.lon_lo;
  return {std::lround((b.lat_lo + 90.0) / h), std::lround((b.lon_lo + 180.0) / w)};
}

/// Partition of the distinct cells into 8-connected components, each sorted,
/// components ordered by their first cell.
inline std::vector<std::vector<std::string>> components(std::vector<std::string> cells) {
  std::sort(cells.begin(), cells.end());
  cells.erase(std::unique(cells.begin(), cells.end()), cells.end());
  std::map<std::pair<long, long>, std::size_t> at;
  for (std::size_t i = 0; i < cells.size(); ++i) at[grid_index(cells[i])] = i;
  std::vector<std::size_t> parent(cells.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& [rc, i] : at) {
    for (long dr = -1; dr <= 1; ++dr) {
      for (long dc = -1; dc <= 1; ++dc) {
        auto it = at.find({rc.first + dr, rc.second + dc});
        if (it != at.end()) parent[find(i)] = find(it->second);
      }
    }
  }
  std::map<std::size_t, std::vector<std::string>> groups;
  for (std::size_t i = 0; i < cells.size(); ++i) groups[find(i)].push_back(cells[i]);
  std::vector<std::vector<std::string>> out;
  for (auto& [root, g] : groups) out.push_back(std::move(g));
  std::sort(out.begin(), out.end());
  return out;
}

/// True if the cells form one 8-connected component.
inline bool connected(const std::vector<std::string>& cells) {
  return !cells.empty() && components(cells).size() == 1;
}

// ---------------------------------------------------------------------------
// DBSCAN by brute force.

struct DbscanTruth {
  std::vector<bool> core;
  /// Component id of every core point under the eps graph restricted to cores.
  std::vector<int> core_component;
  /// For non-core points: the components of cores within eps (empty = noise).
  std::vector<std::set<int>> reachable;
};

inline DbscanTruth dbscan_truth(const std::vector<std::pair<double, double>>& pts, double eps,
                                int min_pts) {
  const std::size_t n = pts.size();
  std::vector<std::vector<std::size_t>> within(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (great_circle(pts[i].first, pts[i].second, pts[j].first, pts[j].second) <= eps) {
        within[i].push_back(j);
      }
    }
  }
  DbscanTruth t;
  t.core.resize(n);
  for (std::size_t i = 0; i < n; ++i) t.core[i] = static_cast<int>(within[i].size()) >= min_pts;
  t.core_component.assign(n, -1);
  int next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!t.core[i] || t.core_component[i] >= 0) continue;
    std::vector<std::size_t> stack = {i};
    t.core_component[i] = next;
    while (!stack.empty()) {
      const std::size_t u = stack.back();
      stack.pop_back();
      for (std::size_t v : within[u]) {
        if (t.core[v] && t.core_component[v] < 0) {
          t.core_component[v] = next;
          stack.push_back(v);
        }
      }
    }
    ++next;
  }
  t.reachable.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (t.core[i]) continue;
    for (std::size_t j : within[i]) {
      if (t.core[j]) t.reachable[i].insert(t.core_component[j]);
    }
  }
  return t;
}

/// Mean silhouette with great-circle distances; singletons and noise (-1)
/// handled like the reference definition: singletons score 0.
inline double silhouette(const std::vector<std::pair<double, double>>& pts,
                         const std::vector<int>& labels) {
  const std::size_t n = pts.size();
  std::map<int, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < n; ++i) members[labels[i]].push_back(i);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& own = members[labels[i]];
    if (own.size() == 1) continue;
    double a = 0.0;
    for (std::size_t j : own) {
      if (j != i) a += great_circle(pts[i].first, pts[i].second, pts[j].first, pts[j].second);
    }
    a /= static_cast<double>(own.size() - 1);
    double b = std::numeric_limits<double>::infinity();
    for (const auto& [label, other] : members) {
      if (label == labels[i]) continue;
      double d = 0.0;
      for (std::size_t j : other) {
        d += great_circle(pts[i].first, pts[i].second, pts[j].first, pts[j].second);
      }
      b = std::min(b, d / static_cast<double>(other.size()));
    }
    if (std::max(a, b) > 0) total += (b - a) / std::max(a, b);
  }
  return total / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Solar position from the low-precision almanac formulas (mean longitude,
// mean anomaly, ecliptic longitude, sidereal time).

struct Sun {
  double elevation_deg;
  double azimuth_deg;  // clockwise from north
};

inline double julian_day(int year, int month, int day, double hour_utc) {
  if (month <= 2) {
    year -= 1;
    month += 12;
  }
  const int a = year / 100;
  const int b = 2 - a + a / 4;
  return std::floor(365.25 * (year + 4716)) + std::floor(30.6001 * (month + 1)) + day + b -
         1524.5 + hour_utc / 24.0;
}

inline double wrap(double x, double period) {
  x = std::fmod(x, period);
  return x < 0 ? x + period : x;
}

inline Sun sun_position(int year, int month, int day, double hour_utc, double lat, double lon) {
  const double n = julian_day(year, month, day, hour_utc) - 2451545.0;
  const double mean_long = wrap(280.460 + 0.9856474 * n, 360.0);
  const double mean_anom = wrap(357.528 + 0.9856003 * n, 360.0) * kRad;
  const double ecl_long =
      wrap(mean_long + 1.915 * std::sin(mean_anom) + 0.020 * std::sin(2 * mean_anom), 360.0) * kRad;
  const double obliquity = (23.439 - 0.0000004 * n) * kRad;
  const double ra = std::atan2(std::cos(obliquity) * std::sin(ecl_long), std::cos(ecl_long));
  const double dec = std::asin(std::sin(obliquity) * std::sin(ecl_long));
  const double gmst_h = wrap(18.697374558 + 24.06570982441908 * n, 24.0);
  const double lmst = wrap(gmst_h * 15.0 + lon, 360.0) * kRad;
  const double ha = lmst - ra;
  const double phi = lat * kRad;
  const double el = std::asin(std::sin(dec) * std::sin(phi) +
                              std::cos(dec) * std::cos(phi) * std::cos(ha));
  const double az = std::atan2(-std::sin(ha) * std::cos(dec),
                               std::cos(phi) * std::sin(dec) - std::sin(phi) * std::cos(dec) * std::cos(ha));
  return {el / kRad, wrap(az / kRad, 360.0)};
}

// ---------------------------------------------------------------------------
// Metrics and statistics.

inline double f1_positive(const std::vector<int>& pred, const std::vector<int>& truth) {
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    tp += pred[i] == 1 && truth[i] == 1;
    fp += pred[i] == 1 && truth[i] == 0;
    fn += pred[i] == 0 && truth[i] == 1;
  }
  if (tp == 0) return 0.0;
  const double precision = tp / (tp + fp), recall = tp / (tp + fn);
  return 2 * precision * recall / (precision + recall);
}

/// Upper tail of the chi-square distribution via the regularized incomplete
/// gamma function (series / continued fraction).
inline double chi_square_survival(double x, double dof) {
  const double a = dof / 2.0, z = x / 2.0;
  if (z <= 0) return 1.0;
  const double log_prefix = a * std::log(z) - z - std::lgamma(a);
  if (z < a + 1) {
    double term = 1.0 / a, sum = term;
    for (int k = 1; k < 10000; ++k) {
      term *= z / (a + k);
      sum += term;
      if (term < sum * 1e-15) break;
    }
    return 1.0 - sum * std::exp(log_prefix);
  }
  double b = z + 1 - a, c = 1e300, d = 1 / b, h = d;
  for (int k = 1; k < 10000; ++k) {
    const double an = -k * (k - a);
    b += 2;
    d = an * d + b;
    if (std::abs(d) < 1e-300) d = 1e-300;
    c = b + an / c;
    if (std::abs(c) < 1e-300) c = 1e-300;
    d = 1 / d;
    const double delta = d * c;
    h *= delta;
    if (std::abs(delta - 1) < 1e-15) break;
  }
  return std::exp(log_prefix) * h;
}

/// One-feature logistic regression fitted by Newton's method on the mean
/// log-loss (no regularization). Returns {intercept, weight}.
inline std::pair<double, double> logistic_newton(const std::vector<double>& x,
                                                 const std::vector<int>& y, int iterations = 50) {
  double b0 = 0, b1 = 0;
  for (int it = 0; it < iterations; ++it) {
    double g0 = 0, g1 = 0, h00 = 0, h01 = 0, h11 = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double p = 1 / (1 + std::exp(-(b0 + b1 * x[i])));
      g0 += p - y[i];
      g1 += (p - y[i]) * x[i];
      const double w = p * (1 - p);
      h00 += w;
      h01 += w * x[i];
      h11 += w * x[i] * x[i];
    }
    const double det = h00 * h11 - h01 * h01;
    b0 -= (h11 * g0 - h01 * g1) / det;
    b1 -= (-h01 * g0 + h00 * g1) / det;
  }
  return {b0, b1};
}

}  // namespace oracle
