#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "acap/geocode.hpp"
#include "json.hpp"

namespace acap {

enum class RegionKind {
  GrownCluster,
  BaseGridFallback,
  GridCell,
  Prototype,
  Noise,
};

std::string to_string(RegionKind kind);

/// Identifier of one spatial aggregation region. Grown clusters and prototype
/// regions carry an index; grid cells and fallback regions carry their cell code.
struct RegionId {
  RegionKind kind = RegionKind::GrownCluster;
  int index = 0;
  std::string code;

  std::string to_string() const;

  friend bool operator==(const RegionId&, const RegionId&) = default;
  friend auto operator<=>(const RegionId&, const RegionId&) = default;
};

/// A learned or fixed mapping from locations to regions.
class Aggregation {
 public:
  virtual ~Aggregation() = default;

  virtual std::string name() const = 0;
  virtual RegionId assign(const GeoPoint& point) const = 0;

  /// Groups the study-area cells by region. The default assigns each cell by
  /// its center.
  virtual std::map<RegionId, std::vector<GeohashCell>> region_cells(
      std::span<const GeohashCell> area_cells) const;

  virtual nlohmann::json to_json() const = 0;
};

// ---------------------------------------------------------------------------
// Grid growing

struct GridGrowingParams {
  int delta_detail = 7;
  int delta_base = 6;
  double distance_threshold_m = 400.0;

  /// Throws ConfigError for precisions outside 1..12, base not coarser than
  /// detail, or a non-positive threshold.
  void validate() const;
};

/// Output of grid growing: disjoint, 8-connected sets of detail cells plus the
/// nearest-cluster / base-grid fallback assignment rule.
///
/// Clusters are stored canonically: cells sorted inside each cluster, clusters
/// sorted by their smallest cell code. Fallback regions are created on first
/// use and numbered after the grown clusters; `assign` is safe to call from
/// several threads.
class ClusterModel final : public Aggregation {
 public:
  ClusterModel(GridGrowingParams params, std::vector<std::vector<GeohashCell>> clusters);
  ClusterModel(const ClusterModel& other);
  ClusterModel(ClusterModel&& other) noexcept;
  ClusterModel& operator=(ClusterModel other) noexcept;

  std::string name() const override { return "gg"; }
  RegionId assign(const GeoPoint& point) const override;
  std::map<RegionId, std::vector<GeohashCell>> region_cells(
      std::span<const GeohashCell> area_cells) const override;
  nlohmann::json to_json() const override;
  static ClusterModel from_json(const nlohmann::json& doc);

  const GridGrowingParams& params() const noexcept { return params_; }
  const std::vector<std::vector<GeohashCell>>& clusters() const noexcept { return clusters_; }
  std::size_t cluster_count() const noexcept { return clusters_.size(); }

  /// Minimum haversine distance from `point` to a member-cell center of
  /// cluster `index`.
  double distance_to_cluster(const GeoPoint& point, std::size_t index) const;

  /// Base-cell code -> region index for every fallback region created so far.
  std::map<std::string, int> overflow_regions() const;

  friend void swap(ClusterModel& a, ClusterModel& b) noexcept;

 private:
  struct MemberCenter {
    double lat;
    double lon;
    int cluster;
  };

  void build_index();

  GridGrowingParams params_;
  std::vector<std::vector<GeohashCell>> clusters_;
  std::vector<MemberCenter> centers_by_lat_;
  mutable std::unique_ptr<std::mutex> overflow_mutex_ = std::make_unique<std::mutex>();
  mutable std::map<std::string, int> overflow_;
};

/// Grows 8-connected regions of occupied detail cells from randomly chosen
/// seed events until every event is marked. Throws DomainError on empty input.
ClusterModel grid_grow(std::span<const GeoPoint> events, const GridGrowingParams& params,
                       std::mt19937_64& rng);

/// Uniform geohash grid at a fixed precision (the 1x1 / 5x5 baselines).
class GridAggregation final : public Aggregation {
 public:
  explicit GridAggregation(int precision);
  std::string name() const override;
  RegionId assign(const GeoPoint& point) const override;
  nlohmann::json to_json() const override;
  int precision() const noexcept { return precision_; }

 private:
  int precision_;
};

/// Min-max scaling of (lat, lon) onto [0,1]^2.
struct CoordinateScaling {
  double lat_min = 0.0;
  double lat_range = 1.0;
  double lon_min = 0.0;
  double lon_range = 1.0;

  static CoordinateScaling identity() { return {}; }
  static CoordinateScaling fit(std::span<const GeoPoint> points);
  std::array<double, 2> apply(const GeoPoint& p) const {
    return {(p.lat - lat_min) / lat_range, (p.lon - lon_min) / lon_range};
  }
};

/// Nearest-prototype regions (K-means centroids, SOM units). Distances are
/// Euclidean in the scaled coordinate space.
class PrototypeAggregation final : public Aggregation {
 public:
  PrototypeAggregation(std::string name, std::vector<std::array<double, 2>> prototypes,
                       CoordinateScaling scaling);
  std::string name() const override { return name_; }
  RegionId assign(const GeoPoint& point) const override;
  nlohmann::json to_json() const override;
  std::size_t size() const noexcept { return prototypes_.size(); }

 private:
  std::string name_;
  std::vector<std::array<double, 2>> prototypes_;
  CoordinateScaling scaling_;
};

// ---------------------------------------------------------------------------
// K-means

struct KMeansResult {
  std::vector<int> labels;
  std::vector<GeoPoint> centroids;
  /// Objective after every completed Lloyd iteration.
  std::vector<double> wcss_history;
  double wcss = 0.0;
  int iterations = 0;
};

/// Lloyd's algorithm in (lat, lon) degrees with k-means++ seeding. Stops when
/// no centroid moves more than `tol_deg` or after `max_iter` iterations.
KMeansResult kmeans(std::span<const GeoPoint> points, int k, std::mt19937_64& rng,
                    int max_iter = 300, double tol_deg = 1e-6);

struct ElbowResult {
  int k = 1;
  bool flat = false;  // no pronounced elbow; k defaults to 1
  std::vector<double> wcss;  // wcss[i] is the objective for k = i + 1
};

ElbowResult elbow_k(std::span<const GeoPoint> points, int k_max, std::mt19937_64& rng,
                    int restarts = 5);

/// Picks the elbow from a WCSS curve (wcss[i] for k = i + 1).
ElbowResult elbow_from_curve(std::vector<double> wcss);

// ---------------------------------------------------------------------------
// DBSCAN

inline constexpr int kNoiseLabel = -1;

/// Density-based clustering with haversine distances. Points are scanned in
/// ascending order of their precision-12 geohash; border points join the first
/// cluster that reaches them. Labels are 0..C-1, noise is kNoiseLabel.
std::vector<int> dbscan(std::span<const GeoPoint> points, double eps_m, int min_pts);

/// Knee values of the sorted k-nearest-neighbor distance curve, ascending.
std::vector<double> estimate_eps_dmdbscan(std::span<const GeoPoint> points, int k = 3);

/// Mean silhouette with haversine distances. Singletons contribute 0.
double silhouette(std::span<const GeoPoint> points, std::span<const int> labels);

struct DbscanSelection {
  double eps_m = 0.0;
  int min_pts = 0;
  double score = -1.0;
  std::vector<int> labels;
};

inline const std::vector<int> kDefaultMinPtsSweep = {3, 4, 5, 8, 10};

/// Sweeps DMDBSCAN eps candidates x `min_pts_grid`, keeping the pair with the
/// highest silhouette over non-noise points.
DbscanSelection select_dbscan_params(std::span<const GeoPoint> points,
                                     std::span<const int> min_pts_grid = kDefaultMinPtsSweep);

/// Nearest core point within eps decides the cluster; everything else falls
/// into a single noise region.
class DbscanAggregation final : public Aggregation {
 public:
  DbscanAggregation(std::span<const GeoPoint> points, std::span<const int> labels, double eps_m,
                    int min_pts);
  std::string name() const override { return "dbscan"; }
  RegionId assign(const GeoPoint& point) const override;
  nlohmann::json to_json() const override;

 private:
  struct Core {
    GeoPoint p;
    int label;
  };
  std::vector<Core> cores_by_lat_;
  double eps_m_;
  int min_pts_;
};

// ---------------------------------------------------------------------------
// Self-organizing map

struct SomParams {
  int rows = 30;
  int cols = 30;
  int epochs = 20;
  double learning_rate_start = 0.5;
  double learning_rate_end = 0.01;
};

struct SomResult {
  int rows = 0;
  int cols = 0;
  std::vector<std::array<double, 2>> weights;  // row-major units, scaled space
  CoordinateScaling scaling;
  std::vector<int> assignment;  // best-matching unit per input point
  double initial_quantization_error = 0.0;
  double final_quantization_error = 0.0;

  std::vector<int> nonempty_units() const;
  /// One region per non-empty unit.
  PrototypeAggregation to_aggregation() const;
};

SomResult som_train(std::span<const GeoPoint> points, const SomParams& params,
                    std::mt19937_64& rng);

}  // namespace acap
