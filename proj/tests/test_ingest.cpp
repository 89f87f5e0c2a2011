#include <random>
#include <sstream>

#include "acap/csv.hpp"
#include "acap/errors.hpp"
#include "acap/ingest.hpp"
#include "doctest.h"

using namespace acap;

namespace {

const std::string kHeader =
    "OBJECTID;UJAHR;UMONAT;USTUNDE;UWOCHENTAG;UART;STRZUSTAND;XGCSWGS84;YGCSWGS84\n";

AccidentData parse(const std::string& text, CsvFormat format = {}) {
  std::istringstream in(text);
  return parse_accidents(in, StudyArea::hannover(), ColumnMapping::accident_atlas(), format);
}

}  // namespace

TEST_CASE("three valid rows give three events") {
  const auto data = parse(kHeader +
                          "1;2017;3;8;2;5;0;9.7320;52.3759\n"
                          "2;2017;4;17;6;2;1;9.7400;52.3700\n"
                          "3;2018;12;0;1;1;2;9.7000;52.4000\n");
  REQUIRE(data.events.size() == 3);
  CHECK(data.report.rows == 3);
  CHECK(data.report.accepted == 3);
  CHECK(data.report.rejections.empty());
  const Event& e = data.events[1];
  CHECK(e.id == "2");
  CHECK(e.time == TimeSlot{2017, 4, 6, 17});
  CHECK(e.location == GeoPoint{52.37, 9.74});
  CHECK(e.accident_type == "2");
  CHECK(e.road_condition == "1");
}

TEST_CASE("bad rows are reported with their line numbers") {
  const auto data = parse(kHeader +
                          "1;2017;3;25;2;5;0;9.7320;52.3759\n"   // hour 25
                          "2;2017;13;8;2;5;0;9.7320;52.3759\n"   // month 13
                          "3;2017;3;8;2;5;0;abc;52.3759\n"       // coordinate
                          "4;2017;3;8;2;5;0;9.7320\n"            // short row
                          "5;2017;3;8;2;5;0;13.40;52.52\n"       // Berlin
                          "6;2017;3;8;2;5;0;9.7320;52.3759\n");
  CHECK(data.events.size() == 1);
  CHECK(data.report.rows == 6);
  CHECK(data.report.accepted + data.report.rejections.size() == data.report.rows);
  CHECK(data.report.outside_area == 1);
  REQUIRE(data.report.rejections.size() == 5);
  CHECK(data.report.rejections[0].line == 2);
  CHECK(data.report.rejections[0].reason.find("hour") != std::string::npos);
  CHECK(data.report.rejections[4].line == 6);
}

TEST_CASE("a missing mandatory column is a configuration error") {
  CHECK_THROWS_AS(parse("OBJECTID;UJAHR;UMONAT;USTUNDE;UWOCHENTAG;UART;XGCSWGS84;YGCSWGS84\n"),
                  ConfigError);
}

TEST_CASE("decimal commas, quotes, BOM and CRLF") {
  CsvFormat f;
  f.decimal_comma = true;
  const auto data = parse("\xEF\xBB\xBF" + kHeader + "\"7\";2017;3;8;2;5;0;9,7320;52,3759\r\n", f);
  REQUIRE(data.events.size() == 1);
  CHECK(data.events[0].id == "7");
  CHECK(data.events[0].location == GeoPoint{52.3759, 9.7320});
}

TEST_CASE("column mapping overrides") {
  const auto m = ColumnMapping::from_json({{"lat", "LAT"}, {"lon", "LON"}});
  CHECK(m.lat == "LAT");
  CHECK(m.hour == "USTUNDE");
  std::istringstream in("OBJECTID,UJAHR,UMONAT,USTUNDE,UWOCHENTAG,UART,STRZUSTAND,LON,LAT\n"
                        "1,2017,3,8,2,5,0,9.73,52.37\n");
  CsvFormat f;
  f.delimiter = ',';
  const auto data = parse_accidents(in, StudyArea::hannover(), m, f);
  CHECK(data.events.size() == 1);
}

TEST_CASE("accident records survive a write/parse round trip") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> lat(52.33, 52.42), lon(9.66, 9.82);
  std::uniform_int_distribution<int> month(1, 12), dow(1, 7), hour(0, 23), type(0, 9);
  std::vector<Event> events;
  for (int i = 0; i < 500; ++i) {
    Event e;
    e.id = "id-" + std::to_string(i) + (i % 7 == 0 ? ";x" : "");
    e.location = {lat(rng), lon(rng)};
    e.time = {2016 + i % 4, month(rng), dow(rng), hour(rng)};
    e.accident_type = std::to_string(type(rng));
    e.road_condition = std::to_string(i % 3);
    events.push_back(e);
  }
  for (const CsvFormat format : {CsvFormat{';', false}, CsvFormat{';', true}, CsvFormat{',', false}}) {
    std::ostringstream out;
    write_accidents(out, events, ColumnMapping::accident_atlas(), format);
    std::istringstream in(out.str());
    const auto back = parse_accidents(in, StudyArea::hannover(), ColumnMapping::accident_atlas(), format);
    CHECK(back.report.rejections.empty());
    CHECK(back.events == events);
  }
}

TEST_CASE("regional feature rows") {
  std::istringstream in(
      "geohash7,feature_name,value\n"
      "u1qcvmk,junctions,3\n"
      "u1qcvmk,bike_lanes,2\n"      // unknown features are kept verbatim
      "u1qcvmk,junctions,4\n"       // duplicate key: last row wins
      "u1qcvm,junctions,1\n"        // not precision 7
      "u1qcvmk,crossings,nan\n"
      "u1qcvma,crossings,1\n");     // 'a' is not a geohash digit
  const auto data = parse_regional_features(in);
  CHECK(data.rows == 6);
  CHECK(data.duplicates == 1);
  CHECK(data.rejections.size() == 3);
  CHECK(data.table.get("u1qcvmk", "junctions") == 4.0);
  CHECK(data.table.get("u1qcvmk", "bike_lanes") == 2.0);
  CHECK(data.table.size() == 2);
}

TEST_CASE("regional features survive a write/parse round trip") {
  CellFeatureTable t;
  t.set("u1qcvmk", "junctions", 3);
  t.set("u1qcvmk", "maxspeed", 47.123456789);
  t.set("u1qcvms", "weird,name", 0.1);
  std::ostringstream out;
  write_regional_features(out, t);
  std::istringstream in(out.str());
  const auto back = parse_regional_features(in);
  CHECK(back.rejections.empty());
  CHECK(back.table.cells() == t.cells());
}

TEST_CASE("csv helpers") {
  CHECK(csv::split("a;\"b;c\";\"d\"\"e\"; f ", ';') ==
        std::vector<std::string>{"a", "b;c", "d\"e", "f"});
  CHECK(csv::parse_double("1,5", true) == 1.5);
  CHECK_FALSE(csv::parse_double("1,5", false).has_value());
  CHECK_FALSE(csv::parse_double("inf").has_value());
  CHECK(csv::parse_int("42") == 42);
  CHECK_FALSE(csv::parse_int("4x").has_value());
  const double x = 0.1 + 0.2;
  CHECK(csv::parse_double(csv::format_double(x)) == x);
}

TEST_CASE("study area validation") {
  StudyArea a = StudyArea::hannover();
  CHECK_NOTHROW(a.validate());
  a.bbox.lat_min = a.bbox.lat_max + 1.0;
  CHECK_THROWS_AS(a.validate(), ConfigError);
  CHECK(StudyArea::from_json(StudyArea::hannover().to_json()).bbox.lon_max ==
        StudyArea::hannover().bbox.lon_max);
}
