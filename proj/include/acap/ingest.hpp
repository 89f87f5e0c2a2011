#pragma once

#include <filesystem>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "acap/event.hpp"
#include "acap/features.hpp"
#include "acap/geocode.hpp"
#include "json.hpp"

namespace acap {

inline constexpr int kLastYear = 2019;

struct StudyArea {
  std::string name;
  BoundingBox bbox;

  /// Throws ConfigError for an inverted, empty or out-of-range box.
  void validate() const;

  static StudyArea hannover();
  static StudyArea from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;
};

/// Source column names for each Event field. The accident atlas renames
/// columns between releases, so this is part of the run configuration.
struct ColumnMapping {
  std::string id = "OBJECTID";
  std::string lat = "YGCSWGS84";
  std::string lon = "XGCSWGS84";
  std::string year = "UJAHR";
  std::string month = "UMONAT";
  std::string day_of_week = "UWOCHENTAG";
  std::string hour = "USTUNDE";
  std::string accident_type = "UART";
  std::string road_condition = "STRZUSTAND";

  static ColumnMapping accident_atlas() { return {}; }
  /// Overrides only the fields present in `doc`.
  static ColumnMapping from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;
};

struct Rejection {
  std::size_t line = 0;  // 1-based physical line number
  std::string reason;
};

/// Every data row ends up either accepted or in `rejections`.
struct IngestReport {
  std::size_t rows = 0;
  std::size_t accepted = 0;
  std::size_t outside_area = 0;
  std::vector<Rejection> rejections;
};

struct AccidentData {
  std::vector<Event> events;
  IngestReport report;
};

struct CsvFormat {
  char delimiter = ';';
  /// Accept "52,37" style numbers; only honoured when the delimiter is not ','.
  bool decimal_comma = false;
};

/// Parses accident records. A missing mandatory column is a ConfigError; bad
/// rows are reported, never silently dropped.
AccidentData parse_accidents(std::istream& in, const StudyArea& area,
                             const ColumnMapping& columns = ColumnMapping::accident_atlas(),
                             const CsvFormat& format = {});
AccidentData parse_accidents(const std::filesystem::path& path, const StudyArea& area,
                             const ColumnMapping& columns = ColumnMapping::accident_atlas(),
                             const CsvFormat& format = {});

/// Writes events so that parse_accidents with the same mapping and format
/// reads them back unchanged.
void write_accidents(std::ostream& out, std::span<const Event> events,
                     const ColumnMapping& columns = ColumnMapping::accident_atlas(),
                     const CsvFormat& format = {});

struct RegionalData {
  CellFeatureTable table;
  std::size_t rows = 0;
  std::size_t duplicates = 0;  // overwritten (cell, feature) keys, last row wins
  std::vector<Rejection> rejections;
};

/// Reads `geohash7,feature_name,value` rows (header required).
RegionalData parse_regional_features(std::istream& in, char delimiter = ',');
RegionalData parse_regional_features(const std::filesystem::path& path, char delimiter = ',');

void write_regional_features(std::ostream& out, const CellFeatureTable& table,
                             char delimiter = ',');

}  // namespace acap
