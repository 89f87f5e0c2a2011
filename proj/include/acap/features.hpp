#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "acap/event.hpp"
#include "acap/geocode.hpp"
#include "json.hpp"

namespace acap {

// ---------------------------------------------------------------------------
// Solar geometry

struct SolarGeometry {
  double elevation_deg = 0.0;  // [-90, 90]
  double azimuth_deg = 0.0;    // [0, 360), clockwise from north
};

/// NOAA general solar position approximation for the given UTC time on
/// `day` of the month.
SolarGeometry solar_position(int year, int month, double hour_utc, const GeoPoint& location,
                             int day = 15);

/// Offset of German civil time from UTC on the 15th of `month` (1 in winter,
/// 2 under daylight saving time).
int berlin_utc_offset_hours(int month);

/// Elevation at which the upper solar limb touches the horizon.
inline constexpr double kDaylightElevationDeg = -0.833;

// ---------------------------------------------------------------------------
// Temporal one-hot encoding

/// Block layout of the temporal one-hot vector. With the defaults the blocks
/// are weekend(2) season(4) weekday(7) hour-bin(6) year(4) daylight(2)
/// elevation(3) azimuth(4) quarter(4), 36 dimensions in total.
struct TemporalLayout {
  int first_year = kFirstYear;
  int year_count = 4;
  int hours_per_bin = 4;
  double elevation_mid_deg = 10.0;   // low < mid <= elevation < high
  double elevation_high_deg = 30.0;

  int dimension() const;
  /// (name, width) per block, in vector order.
  std::vector<std::pair<std::string, int>> blocks() const;
};

inline constexpr int kTemporalDim = 36;

/// One-hot temporal features of a local-time slot at `location`. Solar terms are
/// evaluated at the middle of the hour on the 15th of the month. Throws
/// DomainError for out-of-range calendar fields.
std::vector<double> encode_temporal(const TimeSlot& slot, const GeoPoint& location,
                                    const TemporalLayout& layout = {});

// ---------------------------------------------------------------------------
// Accident features

/// Accident-kind and road-condition code lists. Codes outside the lists land
/// in a trailing "other" slot of their block.
struct AccidentVocabulary {
  std::vector<std::string> types;
  std::vector<std::string> road_conditions;

  /// UART 0..9 and STRZUSTAND 0..2 of the German accident atlas.
  static AccidentVocabulary accident_atlas();
  static AccidentVocabulary from_json(const nlohmann::json& doc);

  int type_block() const { return static_cast<int>(types.size()) + 1; }
  int road_block() const { return static_cast<int>(road_conditions.size()) + 1; }
  int dimension() const { return type_block() + road_block(); }
  int type_slot(const std::string& code) const;
  int road_slot(const std::string& code) const;
};

/// Half-open month-index range [begin, end).
struct MonthWindow {
  int begin = 0;
  int end = 0;
  bool contains(int month_index) const noexcept { return month_index >= begin && month_index < end; }
  int size() const noexcept { return end - begin; }
};

/// Mean of one-hot(type) ++ one-hot(road condition) over the region's events,
/// all-zero for an empty region. Throws LeakageError if an event lies outside
/// `training_window`.
std::vector<double> aggregate_accident_features(std::span<const Event> region_events,
                                                const MonthWindow& training_window,
                                                const AccidentVocabulary& vocab);

// ---------------------------------------------------------------------------
// Regional features

/// Per precision-7 cell values keyed by feature name (open vocabulary).
class CellFeatureTable {
 public:
  /// Returns true if an existing value was overwritten.
  bool set(const std::string& cell, const std::string& feature, double value);
  std::optional<double> get(const std::string& cell, const std::string& feature) const;
  std::size_t size() const noexcept { return entries_; }
  std::size_t cell_count() const noexcept { return cells_.size(); }
  const std::unordered_map<std::string, std::map<std::string, double>>& cells() const noexcept {
    return cells_;
  }

 private:
  std::unordered_map<std::string, std::map<std::string, double>> cells_;
  std::size_t entries_ = 0;
};

/// Which table features make up the regional vector, in order: summed counts,
/// a highway-type histogram, then the average maximum speed.
struct RegionalSchema {
  std::vector<std::string> count_features;
  std::vector<std::string> highway_types;  // stored as "highway_<type>"
  std::string max_speed = "maxspeed";
  std::string street_length = "street_length";

  static RegionalSchema osm_default();
  int dimension() const {
    return static_cast<int>(count_features.size() + highway_types.size()) + 1;
  }
  std::vector<std::string> column_names() const;
};

/// Raw (unnormalized) regional vector of one region. Counts are summed over
/// the member cells; max speed is street-length weighted when lengths exist.
/// Cells missing from the table contribute zeros.
std::vector<double> aggregate_regional_raw(std::span<const GeohashCell> cells,
                                           const CellFeatureTable& table,
                                           const RegionalSchema& schema);

/// Column-wise min-max scaling to [0,1]; constant columns become 0.
void min_max_normalize(std::vector<std::vector<double>>& rows);

/// Raw aggregation for every region followed by min-max normalization across
/// them.
std::vector<std::vector<double>> aggregate_regional(
    const std::vector<std::vector<GeohashCell>>& regions, const CellFeatureTable& table,
    const RegionalSchema& schema);

}  // namespace acap
