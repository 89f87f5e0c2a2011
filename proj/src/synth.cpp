#include <algorithm>
#include <cmath>
#include <numbers>

#include "acap/errors.hpp"
#include "acap/pipeline.hpp"

namespace acap {

namespace {

constexpr double kMetersPerDegreeLat = kEarthRadiusMeters * std::numbers::pi / 180.0;

std::vector<double> default_hour_profile() {
  std::vector<double> p(24, 1.0);
  for (int h : {7, 8, 16, 17, 18}) p[static_cast<std::size_t>(h)] = 6.0;
  for (int h : {6, 9, 15}) p[static_cast<std::size_t>(h)] = 3.0;
  for (int h = 0; h < 5; ++h) p[static_cast<std::size_t>(h)] = 0.3;
  return p;
}

/// Snaps a coordinate to the nearest precision-5 cell border.
double snap(double value, double origin, double span) {
  return origin + std::round((value - origin) / span) * span;
}

GeoPoint offset(const GeoPoint& c, double north_m, double east_m) {
  const double lat = c.lat + north_m / kMetersPerDegreeLat;
  const double lon =
      c.lon + east_m / (kMetersPerDegreeLat * std::cos(c.lat * std::numbers::pi / 180.0));
  return {lat, lon};
}

GeoPoint uniform_point(const BoundingBox& box, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return {box.lat_min + u(rng) * box.lat_span(), box.lon_min + u(rng) * box.lon_span()};
}

/// Accident attributes are drawn independently of location, so the accident
/// vector of a region mostly tells whether it has a history at all.
const std::vector<std::pair<std::string, double>> kTypeWeights = {
    {"1", 0.05}, {"2", 0.20}, {"3", 0.10}, {"4", 0.08}, {"5", 0.25},
    {"6", 0.20}, {"7", 0.04}, {"8", 0.02}, {"9", 0.01}, {"0", 0.05}};
const std::vector<std::pair<std::string, double>> kRoadWeights = {
    {"0", 0.70}, {"1", 0.25}, {"2", 0.05}};

std::string draw(const std::vector<std::pair<std::string, double>>& table, std::mt19937_64& rng) {
  std::vector<double> w;
  for (const auto& [code, weight] : table) w.push_back(weight);
  std::discrete_distribution<std::size_t> d(w.begin(), w.end());
  return table[d(rng)].first;
}

}  // namespace

nlohmann::json Hotspot::to_json() const {
  return {{"lat", center.lat},
          {"lon", center.lon},
          {"sigma_m", sigma_m},
          {"rate", rate},
          {"active_from_month", active_from_month}};
}

void SynthSpec::validate() const {
  area.validate();
  if (months < 1) throw ConfigError("synthetic city needs at least one month");
  if (first_month < 0) throw ConfigError("first month must be non-negative");
  if (kFirstYear + (first_month + months - 1) / 12 > kLastYear) {
    throw ConfigError("synthetic months extend past " + std::to_string(kLastYear));
  }
  if (background_rate < 0.0) throw ConfigError("background rate must be non-negative");
  if (feature_noise < 0.0) throw ConfigError("feature noise must be non-negative");
  if (!hour_profile.empty()) {
    if (hour_profile.size() != 24) throw ConfigError("hour profile needs 24 weights");
    for (double w : hour_profile) {
      if (!(w >= 0.0)) throw ConfigError("hour weights must be non-negative");
    }
  }
  for (const auto& h : hotspots) {
    if (!area.bbox.contains(h.center)) throw ConfigError("hotspot center outside the study area");
    if (!(h.sigma_m > 0.0)) throw ConfigError("hotspot spread must be positive");
    if (h.rate < 0.0) throw ConfigError("hotspot rate must be non-negative");
    if (h.active_from_month < 0 || h.active_from_month >= months) {
      throw ConfigError("hotspot activation month outside the synthetic period");
    }
  }
}

nlohmann::json SynthSpec::to_json() const {
  nlohmann::json hs = nlohmann::json::array();
  for (const auto& h : hotspots) hs.push_back(h.to_json());
  return {{"area", area.to_json()},        {"hotspots", hs},
          {"background_rate", background_rate}, {"first_month", first_month},
          {"months", months},              {"hour_profile", hour_profile},
          {"feature_noise", feature_noise}};
}

SynthSpec SynthSpec::from_json(const nlohmann::json& doc) {
  SynthSpec s = straddling_default();
  try {
    if (doc.contains("area")) s.area = StudyArea::from_json(doc.at("area"));
    if (doc.contains("hotspots")) {
      s.hotspots.clear();
      for (const auto& h : doc.at("hotspots")) {
        Hotspot hs;
        hs.center = {h.at("lat").get<double>(), h.at("lon").get<double>()};
        hs.sigma_m = h.value("sigma_m", hs.sigma_m);
        hs.rate = h.value("rate", hs.rate);
        hs.active_from_month = h.value("active_from_month", hs.active_from_month);
        s.hotspots.push_back(hs);
      }
    }
    s.background_rate = doc.value("background_rate", s.background_rate);
    s.first_month = doc.value("first_month", s.first_month);
    s.months = doc.value("months", s.months);
    s.hour_profile = doc.value("hour_profile", s.hour_profile);
    s.feature_noise = doc.value("feature_noise", s.feature_noise);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid synthetic city spec: ") + e.what());
  }
  s.validate();
  return s;
}

SynthSpec SynthSpec::straddling_default() {
  SynthSpec s;
  s.area = {"synthetic", {52.33, 52.42, 9.66, 9.82}};
  const CellSize coarse = cell_size(5);
  // Border lines of the precision-5 grid run at -90 + k * span and -180 + k * span.
  auto corner = [&](double lat, double lon, bool snap_lat, bool snap_lon) {
    return GeoPoint{snap_lat ? snap(lat, -90.0, coarse.lat_deg) : lat,
                    snap_lon ? snap(lon, -180.0, coarse.lon_deg) : lon};
  };
  s.hotspots = {
      {corner(52.39, 9.74, true, true), 180.0, 3.0, 0},
      {corner(52.36, 9.70, true, false), 200.0, 2.5, 0},
      {corner(52.40, 9.79, false, true), 160.0, 2.0, 0},
      {corner(52.35, 9.78, true, true), 220.0, 2.0, 0},
      {corner(52.41, 9.69, false, true), 200.0, 4.0, 29},
  };
  s.background_rate = 2.0;
  s.hour_profile = default_hour_profile();
  return s;
}

SynthCity synth_city(const SynthSpec& spec, std::mt19937_64& rng) {
  spec.validate();
  const std::vector<double> profile =
      spec.hour_profile.empty() ? std::vector<double>(24, 1.0) : spec.hour_profile;
  std::discrete_distribution<int> hotspot_hour(profile.begin(), profile.end());
  std::uniform_int_distribution<int> any_hour(0, 23);
  std::uniform_int_distribution<int> any_dow(1, 7);
  std::normal_distribution<double> gauss(0.0, 1.0);

  SynthCity city;
  city.area = spec.area;
  city.hotspots = spec.hotspots;
  int next_id = 0;
  auto emit = [&](const GeoPoint& p, int month, int hour, int source) {
    Event e;
    e.id = "synth-" + std::to_string(next_id++);
    e.location = p;
    e.time = time_slot_from_month(spec.first_month + month, any_dow(rng), hour);
    e.accident_type = draw(kTypeWeights, rng);
    e.road_condition = draw(kRoadWeights, rng);
    city.events.push_back(std::move(e));
    city.event_hotspot.push_back(source);
  };

  for (int m = 0; m < spec.months; ++m) {
    for (std::size_t h = 0; h < spec.hotspots.size(); ++h) {
      const Hotspot& hs = spec.hotspots[h];
      if (m < hs.active_from_month || hs.rate <= 0.0) continue;
      const int count = std::poisson_distribution<int>(hs.rate)(rng);
      for (int k = 0; k < count; ++k) {
        GeoPoint p;
        do {
          p = offset(hs.center, gauss(rng) * hs.sigma_m, gauss(rng) * hs.sigma_m);
        } while (!spec.area.bbox.contains(p));
        emit(p, m, hotspot_hour(rng), static_cast<int>(h));
      }
    }
    if (spec.background_rate > 0.0) {
      const int count = std::poisson_distribution<int>(spec.background_rate)(rng);
      for (int k = 0; k < count; ++k) emit(uniform_point(spec.area.bbox, rng), m, any_hour(rng), -1);
    }
  }
  if (city.events.empty()) throw DomainError("synthetic city spec produced no events");

  // Infrastructure follows a smooth risk field around every hotspot, including
  // ones that only become active later.
  std::lognormal_distribution<double> noise(0.0, spec.feature_noise);
  auto noisy_count = [&](double mean) {
    return static_cast<double>(std::poisson_distribution<int>(mean)(rng)) *
           (spec.feature_noise > 0.0 ? noise(rng) : 1.0);
  };
  for (const auto& cell : cells_covering(spec.area.bbox, 7)) {
    const GeoPoint c = decode(cell).center;
    double risk = 0.0;
    for (const auto& hs : spec.hotspots) {
      const double d = haversine(c, hs.center) / (2.0 * hs.sigma_m);
      risk += std::exp(-0.5 * d * d);
    }
    risk = std::min(risk, 1.0);
    auto put = [&](const std::string& name, double value) {
      if (value != 0.0) city.features.set(cell.code(), name, value);
    };
    put("traffic_signals", noisy_count(0.05 + 3.0 * risk));
    put("junctions", noisy_count(0.3 + 4.0 * risk));
    put("crossings", noisy_count(0.2 + 3.0 * risk));
    put("amenities", noisy_count(0.5 + 2.0 * risk));
    put("stop_signs", noisy_count(0.1 + 1.0 * risk));
    put("give_ways", noisy_count(0.1 + 1.0 * risk));
    put("railways", noisy_count(0.05));
    put("stations", noisy_count(0.05 + 0.5 * risk));
    put("turning_loops", noisy_count(0.02));
    put("highway_primary", noisy_count(0.1 + 2.0 * risk));
    put("highway_secondary", noisy_count(0.2 + 1.0 * risk));
    put("highway_residential", noisy_count(1.0));
    put("highway_other", noisy_count(0.3));
    put("street_length", 100.0 + 300.0 * risk);
    put("maxspeed", std::max(10.0, 30.0 + 20.0 * risk + 5.0 * gauss(rng)));
  }
  return city;
}

}  // namespace acap
