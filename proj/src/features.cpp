#include <algorithm>
#include <cmath>

#include "acap/errors.hpp"
#include "acap/features.hpp"

namespace acap {

TimeSlot TimeSlot::previous_hour() const noexcept {
  TimeSlot prev = *this;
  if (prev.hour > 0) {
    --prev.hour;
  } else {
    prev.hour = 23;
    prev.day_of_week = prev.day_of_week == 1 ? 7 : prev.day_of_week - 1;
  }
  return prev;
}

bool TimeSlot::is_valid() const noexcept {
  return month >= 1 && month <= 12 && day_of_week >= 1 && day_of_week <= 7 && hour >= 0 &&
         hour <= 23;
}

// ---------------------------------------------------------------------------

int TemporalLayout::dimension() const {
  int total = 0;
  for (const auto& [name, width] : blocks()) total += width;
  return total;
}

std::vector<std::pair<std::string, int>> TemporalLayout::blocks() const {
  return {{"weekend", 2},  {"season", 4},    {"weekday", 7},
          {"hour", (24 + hours_per_bin - 1) / hours_per_bin},
          {"year", year_count}, {"daylight", 2}, {"elevation", 3},
          {"azimuth", 4},  {"quarter", 4}};
}

std::vector<double> encode_temporal(const TimeSlot& slot, const GeoPoint& location,
                                    const TemporalLayout& layout) {
  if (!slot.is_valid()) {
    throw DomainError("time slot out of range: month=" + std::to_string(slot.month) +
                      " weekday=" + std::to_string(slot.day_of_week) +
                      " hour=" + std::to_string(slot.hour));
  }
  if (slot.year < layout.first_year || slot.year >= layout.first_year + layout.year_count) {
    throw DomainError("year " + std::to_string(slot.year) + " outside the encoded range");
  }

  double utc = slot.hour + 0.5 - berlin_utc_offset_hours(slot.month);
  if (utc < 0.0) utc += 24.0;
  auto sun = solar_position(slot.year, slot.month, utc, location);

  const bool weekend = slot.day_of_week == 1 || slot.day_of_week == 7;
  const int season = (slot.month % 12) / 3;  // Dec-Feb, Mar-May, Jun-Aug, Sep-Nov
  const int elevation_bin = sun.elevation_deg < layout.elevation_mid_deg    ? 0
                            : sun.elevation_deg < layout.elevation_high_deg ? 1
                                                                            : 2;
  const int hot[] = {
      weekend ? 1 : 0,
      season,
      slot.day_of_week - 1,
      slot.hour / layout.hours_per_bin,
      slot.year - layout.first_year,
      sun.elevation_deg > kDaylightElevationDeg ? 1 : 0,
      elevation_bin,
      std::min(3, static_cast<int>(sun.azimuth_deg / 90.0)),
      (slot.month - 1) / 3,
  };

  std::vector<double> out(static_cast<std::size_t>(layout.dimension()), 0.0);
  std::size_t offset = 0;
  std::size_t b = 0;
  for (const auto& [name, width] : layout.blocks()) {
    out[offset + static_cast<std::size_t>(hot[b++])] = 1.0;
    offset += static_cast<std::size_t>(width);
  }
  return out;
}

// ---------------------------------------------------------------------------

AccidentVocabulary AccidentVocabulary::accident_atlas() {
  return {{"1", "2", "3", "4", "5", "6", "7", "8", "9", "0"}, {"0", "1", "2"}};
}

AccidentVocabulary AccidentVocabulary::from_json(const nlohmann::json& doc) {
  try {
    return {doc.at("types").get<std::vector<std::string>>(),
            doc.at("road_conditions").get<std::vector<std::string>>()};
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed vocabulary: ") + e.what());
  }
}

int AccidentVocabulary::type_slot(const std::string& code) const {
  auto it = std::find(types.begin(), types.end(), code);
  return static_cast<int>(it - types.begin());
}

int AccidentVocabulary::road_slot(const std::string& code) const {
  auto it = std::find(road_conditions.begin(), road_conditions.end(), code);
  return static_cast<int>(it - road_conditions.begin());
}

std::vector<double> aggregate_accident_features(std::span<const Event> region_events,
                                                const MonthWindow& training_window,
                                                const AccidentVocabulary& vocab) {
  std::vector<double> out(static_cast<std::size_t>(vocab.dimension()), 0.0);
  for (const auto& e : region_events) {
    if (!training_window.contains(e.time.month_index())) {
      throw LeakageError("event '" + e.id + "' lies outside the training window");
    }
  }
  if (region_events.empty()) return out;
  const double w = 1.0 / static_cast<double>(region_events.size());
  const auto road_offset = static_cast<std::size_t>(vocab.type_block());
  for (const auto& e : region_events) {
    out[static_cast<std::size_t>(vocab.type_slot(e.accident_type))] += w;
    out[road_offset + static_cast<std::size_t>(vocab.road_slot(e.road_condition))] += w;
  }
  return out;
}

// ---------------------------------------------------------------------------

bool CellFeatureTable::set(const std::string& cell, const std::string& feature, double value) {
  auto [it, inserted] = cells_[cell].insert_or_assign(feature, value);
  if (inserted) ++entries_;
  return !inserted;
}

std::optional<double> CellFeatureTable::get(const std::string& cell,
                                            const std::string& feature) const {
  auto c = cells_.find(cell);
  if (c == cells_.end()) return std::nullopt;
  auto f = c->second.find(feature);
  if (f == c->second.end()) return std::nullopt;
  return f->second;
}

RegionalSchema RegionalSchema::osm_default() {
  RegionalSchema s;
  s.count_features = {"amenities", "crossings",       "junctions",     "railways",  "stations",
                      "stop_signs", "traffic_signals", "turning_loops", "give_ways"};
  s.highway_types = {"motorway", "trunk", "primary", "secondary", "tertiary", "residential", "other"};
  return s;
}

std::vector<std::string> RegionalSchema::column_names() const {
  std::vector<std::string> names = count_features;
  for (const auto& h : highway_types) names.push_back("highway_" + h);
  names.push_back(max_speed);
  return names;
}

std::vector<double> aggregate_regional_raw(std::span<const GeohashCell> cells,
                                           const CellFeatureTable& table,
                                           const RegionalSchema& schema) {
  std::vector<double> out(static_cast<std::size_t>(schema.dimension()), 0.0);
  const auto names = schema.column_names();
  const std::size_t summed = names.size() - 1;
  double weighted_speed = 0.0, total_length = 0.0;
  double plain_speed = 0.0;
  int speed_cells = 0;
  for (const auto& cell : cells) {
    for (std::size_t i = 0; i < summed; ++i) {
      out[i] += table.get(cell.code(), names[i]).value_or(0.0);
    }
    if (auto speed = table.get(cell.code(), schema.max_speed)) {
      plain_speed += *speed;
      ++speed_cells;
      double len = table.get(cell.code(), schema.street_length).value_or(0.0);
      if (len > 0.0) {
        weighted_speed += len * *speed;
        total_length += len;
      }
    }
  }
  if (total_length > 0.0) {
    out[summed] = weighted_speed / total_length;
  } else if (speed_cells > 0) {
    out[summed] = plain_speed / speed_cells;
  }
  return out;
}

void min_max_normalize(std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return;
  const std::size_t dim = rows.front().size();
  for (std::size_t j = 0; j < dim; ++j) {
    double lo = rows.front()[j], hi = rows.front()[j];
    for (const auto& r : rows) {
      lo = std::min(lo, r[j]);
      hi = std::max(hi, r[j]);
    }
    for (auto& r : rows) r[j] = hi > lo ? (r[j] - lo) / (hi - lo) : 0.0;
  }
}

std::vector<std::vector<double>> aggregate_regional(
    const std::vector<std::vector<GeohashCell>>& regions, const CellFeatureTable& table,
    const RegionalSchema& schema) {
  std::vector<std::vector<double>> rows;
  rows.reserve(regions.size());
  for (const auto& cells : regions) rows.push_back(aggregate_regional_raw(cells, table, schema));
  min_max_normalize(rows);
  return rows;
}

}  // namespace acap
