#include "acap/ingest.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "acap/csv.hpp"
#include "acap/errors.hpp"

namespace acap {

void StudyArea::validate() const {
  const auto& b = bbox;
  if (!(b.lat_min < b.lat_max) || !(b.lon_min < b.lon_max)) {
    throw ConfigError("study area '" + name + "' has a degenerate bounding box");
  }
  if (!is_valid({b.lat_min, b.lon_min}) || !is_valid({b.lat_max, b.lon_max})) {
    throw ConfigError("study area '" + name + "' lies outside valid coordinates");
  }
}

StudyArea StudyArea::hannover() { return {"hannover", {52.30, 52.45, 9.60, 9.92}}; }

StudyArea StudyArea::from_json(const nlohmann::json& doc) {
  try {
    StudyArea area;
    area.name = doc.value("name", std::string("area"));
    const auto& b = doc.at("bbox");
    area.bbox = {b.at("lat_min").get<double>(), b.at("lat_max").get<double>(),
                 b.at("lon_min").get<double>(), b.at("lon_max").get<double>()};
    area.validate();
    return area;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed study area: ") + e.what());
  }
}

nlohmann::json StudyArea::to_json() const {
  return {{"name", name},
          {"bbox",
           {{"lat_min", bbox.lat_min},
            {"lat_max", bbox.lat_max},
            {"lon_min", bbox.lon_min},
            {"lon_max", bbox.lon_max}}}};
}

ColumnMapping ColumnMapping::from_json(const nlohmann::json& doc) {
  ColumnMapping m;
  auto take = [&](const char* key, std::string& field) {
    if (doc.contains(key)) field = doc.at(key).get<std::string>();
  };
  take("id", m.id);
  take("lat", m.lat);
  take("lon", m.lon);
  take("year", m.year);
  take("month", m.month);
  take("day_of_week", m.day_of_week);
  take("hour", m.hour);
  take("accident_type", m.accident_type);
  take("road_condition", m.road_condition);
  return m;
}

nlohmann::json ColumnMapping::to_json() const {
  return {{"id", id},
          {"lat", lat},
          {"lon", lon},
          {"year", year},
          {"month", month},
          {"day_of_week", day_of_week},
          {"hour", hour},
          {"accident_type", accident_type},
          {"road_condition", road_condition}};
}

namespace {

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open input file '" + path.string() + "'");
  return in;
}

std::size_t column_index(const std::vector<std::string>& header, const std::string& name) {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw ConfigError("missing mandatory column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

}  // namespace

AccidentData parse_accidents(std::istream& in, const StudyArea& area, const ColumnMapping& columns,
                             const CsvFormat& format) {
  area.validate();
  const bool decimal_comma = format.decimal_comma && format.delimiter != ',';
  std::string line;
  if (!csv::read_line(in, line)) throw ConfigError("accident file is empty (header required)");
  csv::strip_bom(line);
  const auto header = csv::split(line, format.delimiter);

  const std::size_t c_id = column_index(header, columns.id);
  const std::size_t c_lat = column_index(header, columns.lat);
  const std::size_t c_lon = column_index(header, columns.lon);
  const std::size_t c_year = column_index(header, columns.year);
  const std::size_t c_month = column_index(header, columns.month);
  const std::size_t c_dow = column_index(header, columns.day_of_week);
  const std::size_t c_hour = column_index(header, columns.hour);
  const std::size_t c_type = column_index(header, columns.accident_type);
  const std::size_t c_road = column_index(header, columns.road_condition);

  AccidentData data;
  std::size_t line_no = 1;
  while (csv::read_line(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    ++data.report.rows;
    auto reject = [&](std::string reason) {
      data.report.rejections.push_back({line_no, std::move(reason)});
    };

    const auto f = csv::split(line, format.delimiter);
    if (f.size() != header.size()) {
      reject("expected " + std::to_string(header.size()) + " fields, got " +
             std::to_string(f.size()));
      continue;
    }
    auto lat = csv::parse_double(f[c_lat], decimal_comma);
    auto lon = csv::parse_double(f[c_lon], decimal_comma);
    if (!lat || !lon || !is_valid({*lat, *lon})) {
      reject("invalid coordinates '" + f[c_lat] + "', '" + f[c_lon] + "'");
      continue;
    }
    auto in_range = [&](std::size_t col, const char* what, long long lo, long long hi,
                        int& target) {
      auto v = csv::parse_int(f[col]);
      if (!v || *v < lo || *v > hi) {
        reject(std::string(what) + " '" + f[col] + "' out of range " + std::to_string(lo) + ".." +
               std::to_string(hi));
        return false;
      }
      target = static_cast<int>(*v);
      return true;
    };
    Event e;
    if (!in_range(c_year, "year", kFirstYear, kLastYear, e.time.year) ||
        !in_range(c_month, "month", 1, 12, e.time.month) ||
        !in_range(c_dow, "day of week", 1, 7, e.time.day_of_week) ||
        !in_range(c_hour, "hour", 0, 23, e.time.hour)) {
      continue;
    }
    if (f[c_id].empty()) {
      reject("empty accident id");
      continue;
    }
    e.id = f[c_id];
    e.location = {*lat, *lon};
    e.accident_type = f[c_type];
    e.road_condition = f[c_road];
    if (!area.bbox.contains(e.location)) {
      ++data.report.outside_area;
      reject("outside study area '" + area.name + "'");
      continue;
    }
    data.events.push_back(std::move(e));
    ++data.report.accepted;
  }
  return data;
}

AccidentData parse_accidents(const std::filesystem::path& path, const StudyArea& area,
                             const ColumnMapping& columns, const CsvFormat& format) {
  auto in = open_input(path);
  return parse_accidents(in, area, columns, format);
}

void write_accidents(std::ostream& out, std::span<const Event> events,
                     const ColumnMapping& columns, const CsvFormat& format) {
  const char d = format.delimiter;
  out << csv::escape(columns.id, d) << d << csv::escape(columns.lat, d) << d
      << csv::escape(columns.lon, d) << d << csv::escape(columns.year, d) << d
      << csv::escape(columns.month, d) << d << csv::escape(columns.day_of_week, d) << d
      << csv::escape(columns.hour, d) << d << csv::escape(columns.accident_type, d) << d
      << csv::escape(columns.road_condition, d) << '\n';
  for (const auto& e : events) {
    out << csv::escape(e.id, d) << d << csv::format_double(e.location.lat) << d
        << csv::format_double(e.location.lon) << d << e.time.year << d << e.time.month << d
        << e.time.day_of_week << d << e.time.hour << d << csv::escape(e.accident_type, d) << d
        << csv::escape(e.road_condition, d) << '\n';
  }
}

RegionalData parse_regional_features(std::istream& in, char delimiter) {
  std::string line;
  if (!csv::read_line(in, line)) throw ConfigError("regional feature file is empty (header required)");
  csv::strip_bom(line);
  const auto header = csv::split(line, delimiter);
  const std::size_t c_cell = column_index(header, "geohash7");
  const std::size_t c_name = column_index(header, "feature_name");
  const std::size_t c_value = column_index(header, "value");

  RegionalData data;
  std::size_t line_no = 1;
  while (csv::read_line(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    ++data.rows;
    const auto f = csv::split(line, delimiter);
    if (f.size() != header.size()) {
      data.rejections.push_back({line_no, "expected " + std::to_string(header.size()) +
                                              " fields, got " + std::to_string(f.size())});
      continue;
    }
    try {
      GeohashCell cell(f[c_cell]);
      if (cell.precision() != 7) throw ParseError("not a precision-7 geohash");
    } catch (const ParseError&) {
      data.rejections.push_back({line_no, "malformed geohash '" + f[c_cell] + "'"});
      continue;
    }
    if (f[c_name].empty()) {
      data.rejections.push_back({line_no, "empty feature name"});
      continue;
    }
    auto value = csv::parse_double(f[c_value]);
    if (!value) {
      data.rejections.push_back({line_no, "non-finite value '" + f[c_value] + "'"});
      continue;
    }
    if (data.table.set(f[c_cell], f[c_name], *value)) ++data.duplicates;
  }
  return data;
}

RegionalData parse_regional_features(const std::filesystem::path& path, char delimiter) {
  auto in = open_input(path);
  return parse_regional_features(in, delimiter);
}

void write_regional_features(std::ostream& out, const CellFeatureTable& table, char delimiter) {
  out << "geohash7" << delimiter << "feature_name" << delimiter << "value\n";
  std::map<std::string, const std::map<std::string, double>*> sorted;
  for (const auto& [cell, features] : table.cells()) sorted.emplace(cell, &features);
  for (const auto& [cell, features] : sorted) {
    for (const auto& [name, value] : *features) {
      out << cell << delimiter << csv::escape(name, delimiter) << delimiter
          << csv::format_double(value) << '\n';
    }
  }
}

}  // namespace acap
