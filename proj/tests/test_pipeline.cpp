#include <map>
#include <random>
#include <set>

#include "acap/errors.hpp"
#include "acap/pipeline.hpp"
#include "doctest.h"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace acap;

namespace {

Event event_at(const GeoPoint& p, int month_index, int hour, int id) {
  Event e;
  e.id = "e" + std::to_string(id);
  e.location = p;
  e.time = time_slot_from_month(month_index, 1 + id % 7, hour);
  e.accident_type = std::to_string(id % 10);
  e.road_condition = std::to_string(id % 3);
  return e;
}

std::string collision_key(const GeoPoint& p, const TimeSlot& t) {
  return oracle::geohash_encode(p.lat, p.lon, 7) + "|" + std::to_string(t.year) + "|" +
         std::to_string(t.month) + "|" + std::to_string(t.hour);
}

Dataset small_city(std::uint64_t seed = 42) {
  std::mt19937_64 rng(seed);
  const SynthCity city = synth_city(SynthSpec::straddling_default(), rng);
  Dataset d;
  d.city = "synthetic";
  d.area = city.area;
  d.events = city.events;
  d.regional = city.features;
  return d;
}

ExperimentConfig tiny_config() {
  ExperimentConfig c;
  c.aggregations = {"gg", "g5"};
  c.methods = {"acap", "dnn", "lr"};
  c.seeds = {0, 1};
  c.acap.gru_hidden = 6;
  c.acap.embed_dim = 6;
  c.acap.head = {12, 8, 4};
  c.dnn_hidden = {12, 8, 4};
  c.train.epochs = 3;
  c.train.patience = 2;
  c.logistic.max_iterations = 200;
  c.som.rows = c.som.cols = 6;
  c.som.epochs = 3;
  return c;
}

}  // namespace

// ---------------------------------------------------------------------------
// Splits

TEST_CASE("default split boundaries") {
  const SplitSpec s;
  CHECK(s.validation_months() == 3);
  CHECK(s.fit_window().begin == 0);
  CHECK(s.fit_window().end == 26);
  CHECK(s.validation_window().end == 29);
  CHECK(s.test_window().begin == 29);
  CHECK(s.test_window().end == 36);
  CHECK(s.history_window().end == 29);
  CHECK(split_part(s, 25) == SplitPart::Train);
  CHECK(split_part(s, 26) == SplitPart::Validation);
  CHECK(split_part(s, 29) == SplitPart::Test);
  CHECK(split_part(s, 36) == SplitPart::Outside);
  SplitSpec bad;
  bad.validation_fraction = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = {};
  bad.test_months = 30;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("history slots walk back hour by hour, oldest first") {
  const auto h = history_slots({2017, 5, 2, 3});
  REQUIRE(h.size() == 8);
  CHECK(h.front() == TimeSlot{2017, 5, 1, 19});
  CHECK(h.back() == TimeSlot{2017, 5, 2, 2});
}

// ---------------------------------------------------------------------------
// Negative sampling

TEST_CASE("negative sampling keeps the ratio in every split part") {
  const Dataset d = small_city();
  const SplitSpec split;
  std::mt19937_64 rng(1);
  const auto neg = negative_sample(d.events, 3, d.area, split, rng);
  std::map<SplitPart, std::size_t> pos_count, neg_count;
  for (const auto& e : d.events) ++pos_count[split_part(split, e.time.month_index())];
  for (const auto& a : neg) {
    CHECK(a.label == 0);
    CHECK(d.area.bbox.contains(a.location));
    ++neg_count[split_part(split, a.time.month_index())];
  }
  for (SplitPart part : {SplitPart::Train, SplitPart::Validation, SplitPart::Test}) {
    CHECK(neg_count[part] == 3 * pos_count[part]);
  }
  CHECK(neg_count[SplitPart::Outside] == 0);
}

TEST_CASE("negatives never share cell and time with a recorded accident") {
  // A tiny area where accidents occupy most (cell, hour) pairs of one month.
  const BoundingBox box{52.37, 52.3725, 9.73, 9.735};
  const StudyArea area{"tiny", box};
  const auto cells = cells_covering(box, 7);
  REQUIRE(cells.size() >= 2);
  std::vector<Event> events;
  int id = 0;
  for (const auto& c : cells) {
    for (int hour = 0; hour < 20; ++hour) events.push_back(event_at(decode(c).center, 0, hour, id++));
  }
  SplitSpec split;
  split.train_months = 2;
  split.test_months = 1;
  split.validation_fraction = 0.4;
  std::mt19937_64 rng(2);
  const auto neg = negative_sample(events, 3, area, split, rng);
  std::set<std::string> occupied;
  for (const auto& e : events) occupied.insert(collision_key(e.location, e.time));
  for (const auto& a : neg) CHECK_FALSE(occupied.contains(collision_key(a.location, a.time)));
}

TEST_CASE("negative locations are uniform over the area cells") {
  const BoundingBox box{52.37, 52.385, 9.73, 9.75};
  const StudyArea area{"patch", box};
  const auto cells = cells_covering(box, 7);
  std::vector<Event> events;
  for (int i = 0; i < 2000; ++i) events.push_back(event_at({52.375, 9.74}, i % 26, i % 24, i));
  std::mt19937_64 rng(3);
  const auto neg = negative_sample(events, 5, area, {}, rng);
  REQUIRE(neg.size() == 10000);
  std::map<std::string, double> counts;
  for (const auto& a : neg) ++counts[oracle::geohash_encode(a.location.lat, a.location.lon, 7)];
  const double expected = 10000.0 / static_cast<double>(cells.size());
  double chi2 = 0.0;
  for (const auto& c : cells) {
    const double o = counts[c.code()];
    chi2 += (o - expected) * (o - expected) / expected;
  }
  CHECK(counts.size() == cells.size());
  const double p = oracle::chi_square_survival(chi2, static_cast<double>(cells.size() - 1));
  INFO("chi2 = " << chi2 << " over " << cells.size() << " cells, p = " << p);
  CHECK(p > 0.001);
}

TEST_CASE("negative sampling argument checks") {
  const Dataset d = small_city();
  std::mt19937_64 rng(4);
  const StudyArea empty{"sliver", {52.370001, 52.370002, 9.730001, 9.730002}};
  CHECK_THROWS_AS(negative_sample(d.events, 3, empty, {}, rng), DomainError);
  CHECK_THROWS_AS(negative_sample(d.events, 0, d.area, {}, rng), ConfigError);
}

// ---------------------------------------------------------------------------
// Samples

TEST_CASE("one accident and three negatives give four samples") {
  const GeoPoint p{52.3759, 9.7320};
  std::vector<Event> events = {event_at(p, 3, 8, 0)};
  std::mt19937_64 rng(5);
  const ClusterModel gg = grid_grow(std::vector<GeoPoint>{p}, {}, rng);
  CellFeatureTable table;
  table.set(encode(p, 7).code(), "junctions", 4);
  const StudyArea area{"patch", {52.37, 52.38, 9.72, 9.74}};
  FeatureContext ctx{area, {}, {}, AccidentVocabulary::accident_atlas(), RegionalSchema::osm_default(),
                     &table};
  auto anchors = positive_anchors(events);
  const auto neg = negative_sample(events, 3, area, ctx.split, rng);
  anchors.insert(anchors.end(), neg.begin(), neg.end());
  const SampleMatrix m = build_samples(gg, events, anchors, ctx);
  REQUIRE(m.samples.size() == 4);
  CHECK(m.samples[0].label == 1);
  CHECK(m.samples[0].region == RegionId{RegionKind::GrownCluster, 0, {}});
  CHECK(m.samples[0].temporal_seq.size() == 8);
  CHECK(m.samples[0].history == history_slots(events[0].time));
  CHECK(m.samples[0].accident[9] == 1.0);   // type "0" is the tenth atlas code
  CHECK(m.samples[0].accident[11] == 1.0);  // road condition "0"
  for (const auto& s : m.samples) {
    for (double v : s.regional) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("accident features ignore events after the history window") {
  const GeoPoint p{52.3759, 9.7320};
  std::vector<Event> events = {event_at(p, 3, 8, 1), event_at(p, 31, 8, 2)};
  std::mt19937_64 rng(6);
  const ClusterModel gg = grid_grow(std::vector<GeoPoint>{p}, {}, rng);
  CellFeatureTable table;
  const StudyArea area{"patch", {52.37, 52.38, 9.72, 9.74}};
  FeatureContext ctx{area, {}, {}, AccidentVocabulary::accident_atlas(), RegionalSchema::osm_default(),
                     &table};
  const auto anchors = positive_anchors(events);
  const SampleMatrix m = build_samples(gg, events, anchors, ctx);
  const RegionInfo& info = m.regions.at(RegionId{RegionKind::GrownCluster, 0, {}});
  CHECK(info.history_events == 1);
  CHECK(info.accident[0] == 1.0);  // only the month-3 event (type "1", slot 0) counts
  CHECK(info.accident[8] == 0.0);  // the month-31 event has type "2"
  CHECK(m.samples[1].accident == m.samples[0].accident);
}

TEST_CASE("positive counts per region match a brute-force assignment") {
  const Dataset d = small_city(7);
  std::mt19937_64 rng(7);
  std::vector<GeoPoint> pts;
  for (const auto& e : d.events) {
    if (e.time.month_index() < 29) pts.push_back(e.location);
  }
  const ClusterModel gg = grid_grow(pts, {}, rng);
  FeatureContext ctx{d.area, {}, {}, d.vocabulary, d.schema, &d.regional};
  const SampleMatrix m = build_samples(gg, d.events, positive_anchors(d.events), ctx);

  std::map<int, std::size_t> mine, truth;
  std::size_t fallback_mine = 0, fallback_truth = 0;
  for (const auto& s : m.samples) {
    if (s.region.kind == RegionKind::GrownCluster) {
      ++mine[s.region.index];
    } else {
      ++fallback_mine;
    }
  }
  for (const auto& e : d.events) {
    double best = std::numeric_limits<double>::infinity();
    int best_k = -1;
    for (std::size_t k = 0; k < gg.cluster_count(); ++k) {
      for (const auto& cell : gg.clusters()[k]) {
        const oracle::Box b = oracle::geohash_decode(cell.code());
        const double dist = oracle::great_circle(e.location.lat, e.location.lon,
                                                 (b.lat_lo + b.lat_hi) / 2, (b.lon_lo + b.lon_hi) / 2);
        if (dist < best) {
          best = dist;
          best_k = static_cast<int>(k);
        }
      }
    }
    if (best < 400.0) {
      ++truth[best_k];
    } else {
      ++fallback_truth;
    }
  }
  CHECK(mine == truth);
  CHECK(fallback_mine == fallback_truth);
}

TEST_CASE("temporal split and leakage checks") {
  const Dataset d = small_city();
  const ExperimentConfig cfg = tiny_config();
  const PreparedData prep = prepare_data(d, "gg", cfg, 0);
  const SplitSamples& s = prep.split;
  CHECK(s.train.size() + s.validation.size() + s.test.size() == prep.matrix.samples.size());
  int train_max = -1, test_min = 1000;
  for (const auto& x : s.train) train_max = std::max(train_max, x.time.month_index());
  for (const auto& x : s.test) test_min = std::min(test_min, x.time.month_index());
  CHECK(train_max < test_min);
  CHECK(train_max <= 25);
  CHECK_NOTHROW(check_no_leakage(s));

  SplitSamples leaky = s;
  leaky.train.push_back(s.test.front());
  CHECK_THROWS_AS(check_no_leakage(leaky), LeakageError);
  SplitSamples shifted = s;
  shifted.train.front().history.back().hour = (shifted.train.front().time.hour + 1) % 24;
  CHECK_THROWS_AS(check_no_leakage(shifted), LeakageError);

  std::vector<Sample> outside = {s.test.front()};
  outside[0].time.year = 2019;
  outside[0].time.month = 6;
  CHECK_THROWS_AS(temporal_split(outside, {}), DomainError);
}

// ---------------------------------------------------------------------------
// Metrics

TEST_CASE("F1 of the accident class") {
  const std::vector<int> y = {1, 0, 0, 0, 1, 0, 0, 0};
  CHECK(f1_accident(y, y) == 1.0);
  CHECK(f1_accident(std::vector<int>(8, 0), y) == 0.0);
  CHECK(f1_accident(std::vector<int>(8, 0), std::vector<int>(8, 0)) == 0.0);
  const Confusion c = confusion(std::vector<int>{1, 1, 0, 0}, std::vector<int>{1, 0, 1, 0});
  CHECK(c.tp == 1);
  CHECK(c.fp == 1);
  CHECK(c.fn == 1);
  CHECK(c.tn == 1);
  CHECK_THROWS(f1_accident(std::vector<int>{1}, std::vector<int>{1, 0}));
}

TEST_CASE("F1 agrees with the oracle on random vectors") {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> len(1, 200);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const int n = len(rng);
    const double rate = u(rng);
    std::vector<int> pred, truth;
    for (int k = 0; k < n; ++k) {
      pred.push_back(u(rng) < rate);
      truth.push_back(u(rng) < 0.25);
    }
    REQUIRE(f1_accident(pred, truth) == doctest::Approx(oracle::f1_positive(pred, truth)).epsilon(1e-12));
  }
}

TEST_CASE("a predictor that flags a random quarter scores about 0.25") {
  std::mt19937_64 rng(9);
  std::bernoulli_distribution quarter(0.25);
  std::vector<int> pred, truth;
  for (int k = 0; k < 10000; ++k) {
    truth.push_back(k % 4 == 0);
    pred.push_back(quarter(rng));
  }
  CHECK(std::abs(f1_accident(pred, truth) - 0.25) < 0.02);
}

TEST_CASE("radius curve") {
  const GeoPoint c{52.37, 9.73};
  std::vector<GeoPoint> loc;
  std::vector<int> pred, truth;
  std::mt19937_64 rng(10);
  for (int i = 0; i < 400; ++i) {
    loc.push_back(testing::offset(c, 3000.0 * std::uniform_real_distribution<double>(-1, 1)(rng),
                                  3000.0 * std::uniform_real_distribution<double>(-1, 1)(rng)));
    truth.push_back(i % 4 == 0);
    pred.push_back(i % 3 == 0);
  }
  const std::vector<double> radii = {500.0, 1000.0, 2000.0, std::numeric_limits<double>::infinity()};
  const auto curve = radius_curve(loc, pred, truth, c, radii);
  REQUIRE(curve.size() == 4);
  for (std::size_t i = 1; i < curve.size(); ++i) CHECK(curve[i].samples >= curve[i - 1].samples);
  CHECK(curve.back().samples == 400);
  CHECK(curve.back().f1 == f1_accident(pred, truth));
  const std::vector<double> zero = {0.0};
  CHECK_THROWS_AS(radius_curve(loc, pred, truth, c, zero), DomainError);
  const std::vector<double> tiny = {0.001};
  CHECK_THROWS_AS(radius_curve(loc, pred, truth, c, tiny), DomainError);
}

// ---------------------------------------------------------------------------
// Synthetic city

TEST_CASE("two synthetic hotspots 5 km apart grow into two clusters") {
  SynthSpec spec = SynthSpec::straddling_default();
  const GeoPoint a{52.37, 9.70};
  spec.hotspots = {{a, 60.0, 8.0, 0}, {testing::offset(a, 0.0, 5000.0), 60.0, 8.0, 0}};
  spec.background_rate = 0.0;
  std::mt19937_64 rng(11);
  const SynthCity city = synth_city(spec, rng);
  std::vector<GeoPoint> pts;
  for (const auto& e : city.events) pts.push_back(e.location);
  std::vector<std::string> codes;
  for (const auto& p : pts) codes.push_back(oracle::geohash_encode(p.lat, p.lon, 7));
  const ClusterModel m = grid_grow(pts, {}, rng);
  CHECK(m.cluster_count() == oracle::components(codes).size());
  CHECK(m.cluster_count() == 2);
}

TEST_CASE("synthetic city checks and determinism") {
  SynthSpec spec = SynthSpec::straddling_default();
  std::mt19937_64 a(12), b(12);
  const SynthCity ca = synth_city(spec, a), cb = synth_city(spec, b);
  CHECK(ca.events == cb.events);
  CHECK(ca.features.cells() == cb.features.cells());
  for (const auto& e : ca.events) CHECK(spec.area.bbox.contains(e.location));
  CHECK(SynthSpec::from_json(spec.to_json()).to_json() == spec.to_json());

  for (auto& h : spec.hotspots) h.rate = 0.0;
  spec.background_rate = 0.0;
  CHECK_THROWS_AS(synth_city(spec, a), DomainError);
  spec = SynthSpec::straddling_default();
  spec.hotspots[0].center = {10.0, 10.0};
  CHECK_THROWS_AS(spec.validate(), ConfigError);
}

// ---------------------------------------------------------------------------
// Experiments

TEST_CASE("experiment covers every aggregation, method and seed and is reproducible") {
  const Dataset d = small_city();
  ExperimentConfig cfg = tiny_config();
  const ExperimentReport r1 = run_experiment(d, cfg);
  REQUIRE(r1.cells.size() == 6);
  for (const auto& cell : r1.cells) {
    CHECK(cell.runs.size() == 2);
    for (const auto& run : cell.runs) {
      CHECK(run.f1 >= 0.0);
      CHECK(run.f1 <= 1.0);
      CHECK(run.test_samples > 0);
    }
  }
  cfg.jobs = 2;
  const ExperimentReport r2 = run_experiment(d, cfg);
  CHECK(r2.config_hash == r1.config_hash);
  for (std::size_t i = 0; i < r1.cells.size(); ++i) {
    for (std::size_t k = 0; k < 2; ++k) CHECK(r1.cells[i].runs[k].f1 == r2.cells[i].runs[k].f1);
  }
  const std::string table = r1.table_csv();
  CHECK(table.rfind("city,aggregation,acap,dnn,lr\n", 0) == 0);
  CHECK(std::count(table.begin(), table.end(), '\n') == 3);
  CHECK(r1.cell("g5", "lr").mean_f1() == doctest::Approx((r1.cell("g5", "lr").runs[0].f1 +
                                                          r1.cell("g5", "lr").runs[1].f1) / 2));
}

TEST_CASE("experiment configuration") {
  ExperimentConfig c = tiny_config();
  const std::string h = c.hash();
  CHECK(ExperimentConfig::from_json(c.to_json()).hash() == h);
  c.jobs = 4;
  CHECK(c.hash() == h);
  c.grid_growing.distance_threshold_m = 300.0;
  CHECK(c.hash() != h);
  c.aggregations = {"hexagons"};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::from_json({{"methods", {"svm"}}}), ConfigError);
}

TEST_CASE("baseline aggregations can be fitted on city events") {
  const Dataset d = small_city();
  ExperimentConfig cfg = tiny_config();
  for (const std::string name : {"som", "g1", "kmeans", "dbscan"}) {
    std::mt19937_64 rng(13);
    const auto agg = fit_aggregation(name, d.events, cfg, rng);
    CHECK(agg->name() == name);
    CHECK_NOTHROW(agg->assign(d.events.front().location));
  }
}

TEST_CASE("ablation runs the full model and each single group") {
  const Dataset d = small_city();
  ExperimentConfig cfg = tiny_config();
  cfg.aggregations = {"gg"};
  cfg.seeds = {0};
  const AblationReport rep = ablation_eval(d, cfg);
  REQUIRE(rep.entries.size() == 4);
  CHECK(rep.entries[0].groups == "temporal+accident+regional");
  CHECK(rep.entry("regional").groups == "regional");
  const PreparedData prep = prepare_data(d, "gg", cfg, 0);
  CHECK(rep.entries[0].f1[0] == run_method(prep, "acap", cfg, 0).f1);
  for (const auto& e : rep.entries) {
    if (rep.entries[0].mean_f1 > 0.0) CHECK(e.ratio == doctest::Approx(e.mean_f1 / rep.entries[0].mean_f1));
  }
}
