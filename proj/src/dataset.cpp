#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "acap/errors.hpp"
#include "acap/pipeline.hpp"

namespace acap {

void SplitSpec::validate() const {
  if (first_month < 0) throw ConfigError("first study month must be non-negative");
  if (train_months < 2) throw ConfigError("at least two training months are required");
  if (test_months < 1) throw ConfigError("at least one test month is required");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("validation fraction must lie in (0, 1)");
  }
  if (validation_months() >= train_months) {
    throw ConfigError("validation would consume every training month");
  }
  const int last = first_month + total_months() - 1;
  if (kFirstYear + last / 12 > kLastYear) throw ConfigError("study months extend past " +
                                                            std::to_string(kLastYear));
}

int SplitSpec::validation_months() const {
  return std::max(1, static_cast<int>(std::lround(train_months * validation_fraction)));
}

MonthWindow SplitSpec::fit_window() const {
  return {first_month, first_month + train_months - validation_months()};
}

MonthWindow SplitSpec::validation_window() const {
  return {first_month + train_months - validation_months(), first_month + train_months};
}

MonthWindow SplitSpec::test_window() const {
  return {first_month + train_months, first_month + total_months()};
}

nlohmann::json SplitSpec::to_json() const {
  return {{"first_month", first_month},
          {"train_months", train_months},
          {"test_months", test_months},
          {"validation_fraction", validation_fraction}};
}

SplitSpec SplitSpec::from_json(const nlohmann::json& doc) {
  SplitSpec s;
  s.first_month = doc.value("first_month", s.first_month);
  s.train_months = doc.value("train_months", s.train_months);
  s.test_months = doc.value("test_months", s.test_months);
  s.validation_fraction = doc.value("validation_fraction", s.validation_fraction);
  s.validate();
  return s;
}

SplitPart split_part(const SplitSpec& spec, int month_index) {
  if (spec.fit_window().contains(month_index)) return SplitPart::Train;
  if (spec.validation_window().contains(month_index)) return SplitPart::Validation;
  if (spec.test_window().contains(month_index)) return SplitPart::Test;
  return SplitPart::Outside;
}

TimeSlot time_slot_from_month(int month_index, int day_of_week, int hour) {
  if (month_index < 0) throw DomainError("month index must be non-negative");
  return {kFirstYear + month_index / 12, month_index % 12 + 1, day_of_week, hour};
}

// ---------------------------------------------------------------------------

std::vector<Anchor> positive_anchors(std::span<const Event> events) {
  std::vector<Anchor> out;
  out.reserve(events.size());
  for (const auto& e : events) out.push_back({e.location, e.time, 1, e.id});
  return out;
}

namespace {

std::string collision_key(const std::string& cell, const TimeSlot& t) {
  return cell + '|' + std::to_string(t.year) + '|' + std::to_string(t.month) + '|' +
         std::to_string(t.hour);
}

constexpr int kMaxRedraws = 10000;

}  // namespace

std::vector<Anchor> negative_sample(std::span<const Event> events, int ratio,
                                    const StudyArea& area, const SplitSpec& split,
                                    std::mt19937_64& rng) {
  if (ratio < 1) throw ConfigError("negative ratio must be at least 1");
  split.validate();
  const auto cells = cells_covering(area.bbox, 7);
  if (cells.empty()) throw DomainError("study area contains no precision-7 cells");

  std::unordered_set<std::string> occupied;
  for (const auto& e : events) occupied.insert(collision_key(encode(e.location, 7).code(), e.time));

  std::uniform_int_distribution<std::size_t> pick_cell(0, cells.size() - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> pick_dow(1, 7);
  std::uniform_int_distribution<int> pick_hour(0, 23);

  std::vector<Anchor> out;
  for (const auto& e : events) {
    MonthWindow window;
    switch (split_part(split, e.time.month_index())) {
      case SplitPart::Train: window = split.fit_window(); break;
      case SplitPart::Validation: window = split.validation_window(); break;
      case SplitPart::Test: window = split.test_window(); break;
      case SplitPart::Outside: continue;
    }
    std::uniform_int_distribution<int> pick_month(window.begin, window.end - 1);
    for (int k = 0; k < ratio; ++k) {
      for (int attempt = 0;; ++attempt) {
        if (attempt == kMaxRedraws) {
          throw DomainError("could not place a negative sample away from recorded accidents");
        }
        const GeohashCell& cell = cells[pick_cell(rng)];
        // Edge cells overhang the study area; draw inside the overlap only.
        const BoundingBox c = decode(cell).bbox;
        const double lat_lo = std::max(c.lat_min, area.bbox.lat_min);
        const double lat_hi = std::min(c.lat_max, area.bbox.lat_max);
        const double lon_lo = std::max(c.lon_min, area.bbox.lon_min);
        const double lon_hi = std::min(c.lon_max, area.bbox.lon_max);
        GeoPoint p{lat_lo + unit(rng) * (lat_hi - lat_lo), lon_lo + unit(rng) * (lon_hi - lon_lo)};
        const int month = pick_month(rng);
        const int dow = pick_dow(rng);
        const int hour = pick_hour(rng);
        TimeSlot t = time_slot_from_month(month, dow, hour);
        // The drawn point can sit on the cell's upper edge; key by its own cell.
        if (occupied.contains(collision_key(encode(p, 7).code(), t))) continue;
        out.push_back({p, t, 0, {}});
        break;
      }
    }
  }
  return out;
}

SplitSamples temporal_split(std::vector<Sample> samples, const SplitSpec& spec) {
  SplitSamples out;
  for (auto& s : samples) {
    switch (split_part(spec, s.time.month_index())) {
      case SplitPart::Train: out.train.push_back(std::move(s)); break;
      case SplitPart::Validation: out.validation.push_back(std::move(s)); break;
      case SplitPart::Test: out.test.push_back(std::move(s)); break;
      case SplitPart::Outside:
        throw DomainError("sample at month " + std::to_string(s.time.month_index()) +
                          " lies outside the study months");
    }
  }
  return out;
}

void check_no_leakage(const SplitSamples& split) {
  auto range = [](const std::vector<Sample>& part) {
    int lo = std::numeric_limits<int>::max(), hi = std::numeric_limits<int>::min();
    for (const auto& s : part) {
      lo = std::min(lo, s.time.month_index());
      hi = std::max(hi, s.time.month_index());
    }
    return std::pair{lo, hi};
  };
  const auto [train_lo, train_hi] = range(split.train);
  const auto [val_lo, val_hi] = range(split.validation);
  const auto [test_lo, test_hi] = range(split.test);
  if (!split.train.empty() && !split.validation.empty() && train_hi >= val_lo) {
    throw LeakageError("training months overlap validation months");
  }
  if (!split.validation.empty() && !split.test.empty() && val_hi >= test_lo) {
    throw LeakageError("validation months overlap test months");
  }
  if (!split.train.empty() && !split.test.empty() && train_hi >= test_lo) {
    throw LeakageError("training months overlap test months");
  }
  for (const auto* part : {&split.train, &split.validation, &split.test}) {
    for (const auto& s : *part) {
      if (s.history.size() != s.temporal_seq.size()) {
        throw LeakageError("sample history slots do not match its temporal sequence");
      }
      TimeSlot cursor = s.time;
      for (std::size_t k = s.history.size(); k-- > 0;) {
        cursor = cursor.previous_hour();
        if (!(s.history[k] == cursor)) throw LeakageError("history step does not precede label");
      }
    }
  }
}

std::vector<TimeSlot> history_slots(const TimeSlot& time, int length) {
  std::vector<TimeSlot> out(static_cast<std::size_t>(length));
  TimeSlot cursor = time;
  for (int k = length; k-- > 0;) {
    cursor = cursor.previous_hour();
    out[static_cast<std::size_t>(k)] = cursor;
  }
  return out;
}

// ---------------------------------------------------------------------------

SampleMatrix build_samples(const Aggregation& aggregation, std::span<const Event> events,
                           std::span<const Anchor> anchors, const FeatureContext& context) {
  if (context.regional_table == nullptr) throw ConfigError("no regional feature table supplied");
  const MonthWindow history = context.split.history_window();

  const auto area_cells = cells_covering(context.area.bbox, 7);
  std::map<RegionId, std::vector<GeohashCell>> cells_by_region = aggregation.region_cells(area_cells);

  std::vector<RegionId> anchor_regions;
  anchor_regions.reserve(anchors.size());
  std::map<RegionId, std::vector<GeoPoint>> strays;  // anchor regions without area cells
  for (const auto& a : anchors) {
    RegionId id = aggregation.assign(a.location);
    if (!cells_by_region.contains(id)) strays[id].push_back(a.location);
    anchor_regions.push_back(std::move(id));
  }
  for (const auto& [id, points] : strays) {
    std::vector<GeohashCell>& cells = cells_by_region[id];
    for (const auto& p : points) cells.push_back(encode(p, 7));
    std::sort(cells.begin(), cells.end());
    cells.erase(std::unique(cells.begin(), cells.end()), cells.end());
  }

  std::map<RegionId, std::vector<Event>> history_events;
  for (const auto& e : events) {
    if (!history.contains(e.time.month_index())) continue;
    history_events[aggregation.assign(e.location)].push_back(e);
  }

  SampleMatrix out;
  out.accident_dim = context.vocabulary.dimension();
  out.regional_dim = context.schema.dimension();
  std::vector<std::vector<GeohashCell>> region_list;
  region_list.reserve(cells_by_region.size());
  for (const auto& [id, cells] : cells_by_region) region_list.push_back(cells);
  auto regional = aggregate_regional(region_list, *context.regional_table, context.schema);

  std::size_t r = 0;
  for (const auto& [id, cells] : cells_by_region) {
    RegionInfo info;
    info.cell_count = cells.size();
    double lat = 0.0, lon = 0.0;
    for (const auto& c : cells) {
      GeoPoint center = decode(c).center;
      lat += center.lat;
      lon += center.lon;
    }
    info.centroid = {lat / static_cast<double>(cells.size()), lon / static_cast<double>(cells.size())};
    auto it = history_events.find(id);
    std::span<const Event> mine;
    if (it != history_events.end()) mine = it->second;
    info.history_events = mine.size();
    info.accident = aggregate_accident_features(mine, history, context.vocabulary);
    info.regional = std::move(regional[r++]);
    out.regions.emplace(id, std::move(info));
  }

  out.samples.reserve(anchors.size());
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    const Anchor& a = anchors[i];
    const RegionInfo& info = out.regions.at(anchor_regions[i]);
    Sample s;
    s.region = anchor_regions[i];
    s.time = a.time;
    s.location = a.location;
    s.label = a.label;
    s.accident = info.accident;
    s.regional = info.regional;
    s.history = history_slots(a.time);
    for (const auto& slot : s.history) {
      s.temporal_seq.push_back(encode_temporal(slot, info.centroid, context.layout));
    }
    out.samples.push_back(std::move(s));
  }
  return out;
}

}  // namespace acap
