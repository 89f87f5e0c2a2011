// Acceptance run: one PASS/FAIL line per criterion. Exit status is nonzero if
// any criterion fails. Criterion 8 needs the real accident extract and is
// skipped unless ACAP_ATLAS_CSV and ACAP_REGIONAL_CSV point at it.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "acap/errors.hpp"
#include "acap/pipeline.hpp"
#include "model_support.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace acap;

namespace {

// Pinned tolerances and budgets.
constexpr double kC1Seconds = 5.0;
constexpr double kC2Seconds = 60.0;
constexpr double kThresholdM = 400.0;
constexpr double kC4SilhouetteTol = 1e-9;
constexpr double kC5RelTol = 1e-4;
constexpr double kC5Step = 1e-6;
constexpr double kC5Seconds = 120.0;
constexpr double kC6AcapF1 = 0.95;
constexpr double kC6LrF1 = 0.90;
constexpr double kC7Margin = 0.02;
constexpr double kC7Seconds = 900.0;
constexpr int kC7Runs = 10;
constexpr std::uint64_t kCitySeed = 42;
constexpr double kC8Events = 7433.0;
constexpr double kC8EventTol = 0.01;
constexpr double kC8F1 = 0.58;
constexpr double kC8F1Tol = 0.05;
constexpr int kC10Runs = 5;

enum class Outcome { Pass, Fail, Skip };

struct Verdict {
  Outcome outcome = Outcome::Fail;
  std::string detail;
};

Verdict pass_if(bool ok, std::string detail) { return {ok ? Outcome::Pass : Outcome::Fail, std::move(detail)}; }

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(digits);
  s << v;
  return s.str();
}

std::string fmt_sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<std::string> codes_at(std::span<const GeoPoint> points, int precision) {
  std::vector<std::string> out;
  for (const auto& p : points) out.push_back(oracle::geohash_encode(p.lat, p.lon, precision));
  return out;
}

std::vector<std::vector<std::string>> as_codes(const ClusterModel& m) {
  std::vector<std::vector<std::string>> out;
  for (const auto& cluster : m.clusters()) {
    std::vector<std::string> codes;
    for (const auto& c : cluster) codes.push_back(c.code());
    out.push_back(std::move(codes));
  }
  return out;
}

Dataset synthetic_dataset() {
  std::mt19937_64 rng(kCitySeed);
  SynthCity city = synth_city(SynthSpec::straddling_default(), rng);
  Dataset d;
  d.city = "synthetic";
  d.area = city.area;
  d.events = std::move(city.events);
  d.regional = std::move(city.features);
  return d;
}

// ---------------------------------------------------------------------------

Verdict geohash_conformance() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> lat(-90.0, 90.0), lon(-180.0, 180.0);
  int bad_round_trips = 0;
  for (int i = 0; i < 1000; ++i) {
    const GeoPoint p{lat(rng), lon(rng)};
    const int precision = 5 + i % 3;
    const GeohashCell c = encode(p, precision);
    const DecodedCell d = decode(c);
    if (!d.bbox.contains(p) || encode(d.center, precision) != c ||
        c.code() != oracle::geohash_encode(p.lat, p.lon, precision)) {
      ++bad_round_trips;
    }
  }
  const bool prefix = encode({52.3759, 9.7320}, 7).code().rfind("u1qcv", 0) == 0;
  int bad_neighbors = 0;
  std::uniform_real_distribution<double> mid_lat(-80.0, 80.0), mid_lon(-179.0, 179.0);
  for (int i = 0; i < 100; ++i) {
    const GeohashCell c = encode({mid_lat(rng), mid_lon(rng)}, 3 + i % 8);
    const auto mine = neighbors8(c);
    const auto ref = oracle::geohash_neighbors(c.code());
    for (std::size_t k = 0; k < 8; ++k) bad_neighbors += mine[k].code() != ref[k];
  }
  const double secs = seconds_since(t0);
  return pass_if(bad_round_trips == 0 && prefix && bad_neighbors == 0 && secs < kC1Seconds,
                 "round-trip failures " + std::to_string(bad_round_trips) + "/1000, prefix u1qcv " +
                     (prefix ? "ok" : "wrong") + ", neighbor mismatches " +
                     std::to_string(bad_neighbors) + "/800, " + fmt(secs, 2) + " s");
}

Verdict grid_growing_correctness() {
  const auto t0 = std::chrono::steady_clock::now();
  int mismatches = 0;
  std::size_t max_events = 0;
  for (std::uint64_t instance = 0; instance < 50; ++instance) {
    std::mt19937_64 gen(10'000 + instance);
    const std::size_t n = 20 + static_cast<std::size_t>(instance) * 39;  // 20 .. 1931
    max_events = std::max(max_events, n);
    const auto events = testing::random_city(gen, n);
    const auto truth = oracle::components(codes_at(events, 7));
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      std::mt19937_64 rng(seed);
      mismatches += as_codes(grid_grow(events, {}, rng)) != truth;
    }
  }
  const double secs = seconds_since(t0);
  return pass_if(mismatches == 0 && secs < kC2Seconds,
                 "partition mismatches " + std::to_string(mismatches) + "/500 (up to " +
                     std::to_string(max_events) + " events), " + fmt(secs, 2) + " s");
}

Verdict assignment_semantics() {
  int event_misses = 0, near_misses = 0, far_misses = 0, checked_near = 0, checked_far = 0;
  for (std::uint64_t instance = 0; instance < 10; ++instance) {
    std::mt19937_64 gen(20'000 + instance);
    const auto events = testing::random_city(gen, 300 + 100 * instance);
    std::mt19937_64 rng(instance);
    const ClusterModel m = grid_grow(events, {}, rng);
    for (const auto& e : events) event_misses += m.assign(e).kind != RegionKind::GrownCluster;

    auto nearest = [&](const GeoPoint& p) {
      double best = std::numeric_limits<double>::infinity();
      int k_best = -1;
      for (std::size_t k = 0; k < m.cluster_count(); ++k) {
        for (const auto& cell : m.clusters()[k]) {
          const oracle::Box b = oracle::geohash_decode(cell.code());
          const double d =
              oracle::great_circle(p.lat, p.lon, (b.lat_lo + b.lat_hi) / 2, (b.lon_lo + b.lon_hi) / 2);
          if (d < best) {
            best = d;
            k_best = static_cast<int>(k);
          }
        }
      }
      return std::pair{best, k_best};
    };
    std::uniform_real_distribution<double> angle(0.0, 2.0 * oracle::kPi);
    std::uniform_int_distribution<std::size_t> pick(0, m.cluster_count() - 1);
    for (int i = 0; i < 50; ++i) {
      const auto& cluster = m.clusters()[pick(gen)];
      const GeoPoint c = decode(cluster[gen() % cluster.size()]).center;
      const double a = angle(gen);
      const GeoPoint p = testing::offset(c, 399.0 * std::cos(a), 399.0 * std::sin(a));
      const auto [d, k] = nearest(p);
      const RegionId id = m.assign(p);
      ++checked_near;
      near_misses += !(d < kThresholdM && id.kind == RegionKind::GrownCluster && id.index == k);
    }
    // Points far from every cluster: precision-6 fallback, stable on repeat
    // and across an independently restored model.
    const ClusterModel restored = ClusterModel::from_json(m.to_json());
    std::uniform_real_distribution<double> lat(52.20, 52.55), lon(9.40, 10.10);
    std::map<std::string, int> index_of;
    for (int i = 0; i < 200; ++i) {
      const GeoPoint p{lat(gen), lon(gen)};
      if (nearest(p).first <= kThresholdM + 1.0) continue;
      ++checked_far;
      const RegionId id = m.assign(p);
      const RegionId again = m.assign(p);
      const bool ok = id.kind == RegionKind::BaseGridFallback &&
                      id.code == oracle::geohash_encode(p.lat, p.lon, 6) && again == id &&
                      restored.assign(p).code == id.code;
      auto [it, fresh] = index_of.try_emplace(id.code, id.index);
      far_misses += !ok || it->second != id.index;
    }
  }
  return pass_if(event_misses == 0 && near_misses == 0 && far_misses == 0 && checked_far > 100,
                 "training events off-cluster " + std::to_string(event_misses) + ", 399 m points wrong " +
                     std::to_string(near_misses) + "/" + std::to_string(checked_near) +
                     ", far points wrong " + std::to_string(far_misses) + "/" +
                     std::to_string(checked_far));
}

Verdict clustering_baselines() {
  int dbscan_bad = 0;
  for (std::uint64_t instance = 0; instance < 10; ++instance) {
    std::mt19937_64 gen(30'000 + instance);
    const auto pts = testing::random_city(gen, 50 * (instance + 1));  // up to 500
    const double eps = 60.0 + 15.0 * static_cast<double>(instance % 5);
    const int min_pts = 3 + static_cast<int>(instance % 4);
    const auto labels = dbscan(pts, eps, min_pts);
    std::vector<std::pair<double, double>> pairs;
    for (const auto& p : pts) pairs.emplace_back(p.lat, p.lon);
    const auto truth = oracle::dbscan_truth(pairs, eps, min_pts);
    std::map<int, int> comp_of_label, label_of_comp;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (truth.core[i]) {
        if (labels[i] == kNoiseLabel) {
          ++dbscan_bad;
          continue;
        }
        auto [a, fa] = comp_of_label.try_emplace(labels[i], truth.core_component[i]);
        auto [b, fb] = label_of_comp.try_emplace(truth.core_component[i], labels[i]);
        dbscan_bad += a->second != truth.core_component[i] || b->second != labels[i];
      }
    }
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (truth.core[i]) continue;
      if (truth.reachable[i].empty()) {
        dbscan_bad += labels[i] != kNoiseLabel;
      } else {
        dbscan_bad += labels[i] == kNoiseLabel || !comp_of_label.contains(labels[i]) ||
                      !truth.reachable[i].contains(comp_of_label.at(labels[i]));
      }
    }
  }

  int wcss_increases = 0;
  for (std::uint64_t instance = 0; instance < 10; ++instance) {
    std::mt19937_64 gen(40'000 + instance);
    const auto pts = testing::random_city(gen, 400);
    const auto r = kmeans(pts, 2 + static_cast<int>(instance), gen);
    for (std::size_t i = 1; i < r.wcss_history.size(); ++i) {
      wcss_increases += r.wcss_history[i] > r.wcss_history[i - 1] * (1.0 + 1e-12);
    }
  }

  double worst_silhouette = 0.0;
  for (std::uint64_t instance = 0; instance < 10; ++instance) {
    std::mt19937_64 gen(50'000 + instance);
    const auto pts = testing::random_city(gen, 20 + 18 * instance);  // up to 182
    std::uniform_int_distribution<int> label(-1, 4);
    std::vector<int> labels;
    for (std::size_t i = 0; i < pts.size(); ++i) labels.push_back(label(gen));
    std::vector<std::pair<double, double>> pairs;
    for (const auto& p : pts) pairs.emplace_back(p.lat, p.lon);
    worst_silhouette = std::max(worst_silhouette,
                                std::abs(silhouette(pts, labels) - oracle::silhouette(pairs, labels)));
  }

  std::mt19937_64 gen(60'000);
  const int elbow = elbow_k(testing::four_blobs(gen, 150), 10, gen).k;
  return pass_if(dbscan_bad == 0 && wcss_increases == 0 && worst_silhouette <= kC4SilhouetteTol &&
                     elbow == 4,
                 "DBSCAN label errors " + std::to_string(dbscan_bad) + ", WCSS increases " +
                     std::to_string(wcss_increases) + ", silhouette max |diff| " +
                     fmt_sci(worst_silhouette) + ", elbow k " + std::to_string(elbow));
}

Verdict gradient_fidelity() {
  const auto t0 = std::chrono::steady_clock::now();
  AcapDims dims;
  dims.accident_dim = AccidentVocabulary::accident_atlas().dimension();
  dims.regional_dim = RegionalSchema::osm_default().dimension();
  double worst = 0.0, raw = 0.0, resolution = 0.0;
  std::size_t checked = 0, unresolved = 0, failures = 0;
  for (std::uint64_t draw = 0; draw < 3; ++draw) {
    std::mt19937_64 rng(70'000 + draw);
    AcapNetwork net(dims, rng);
    const auto samples = testing::random_samples(rng, 4, dims.accident_dim, dims.regional_dim);
    const auto r = testing::gradient_check(net, make_batch(samples), nn::Mode::Train, rng, 40,
                                           kC5Step, kC5RelTol);
    checked += r.checked;
    unresolved += r.unresolved;
    failures += r.failures;
    worst = std::max(worst, r.max_relative_error);
    raw = std::max(raw, r.raw_max_relative_error);
    resolution = std::max(resolution, r.resolution);
  }
  const double secs = seconds_since(t0);
  // Below resolution / rtol a relative error only measures the roundoff of
  // the difference quotient; those coordinates are held to |a - n| <=
  // rtol * |g| + resolution instead.
  return pass_if(failures == 0 && worst < kC5RelTol && unresolved * 2 < checked && secs < kC5Seconds,
                 "max relative error " + fmt_sci(worst) + " over " + std::to_string(checked - unresolved) +
                     " resolvable coordinates; " + std::to_string(unresolved) + " below " +
                     fmt_sci(resolution / kC5RelTol) + " checked to roundoff " + fmt_sci(resolution) +
                     " (raw max " + fmt_sci(raw) + "); failures " + std::to_string(failures) + ", " +
                     fmt(secs, 1) + " s");
}

Verdict training_sanity() {
  std::mt19937_64 data_rng(80'000);
  const auto samples = testing::separable_samples(data_rng, 2000);
  const SplitSamples split = temporal_split(samples, {});
  check_no_leakage(split);
  AcapDims dims;
  dims.accident_dim = static_cast<int>(samples[0].accident.size());
  dims.regional_dim = static_cast<int>(samples[0].regional.size());
  TrainConfig cfg;
  cfg.seed = 7;
  std::vector<int> truth;
  for (const auto& s : split.test) truth.push_back(s.label);

  auto train_once = [&](TrainLog& log) {
    std::mt19937_64 init(cfg.seed);
    AcapNetwork net(dims, init);
    log = train_network(net, split.train, split.validation, cfg);
    return predict(net, split.test);
  };
  TrainLog log_a, log_b;
  const auto pred_a = train_once(log_a);
  const auto pred_b = train_once(log_b);
  const double acap_f1 = f1_accident(pred_a, truth);
  bool same = pred_a == pred_b && log_a.epochs.size() == log_b.epochs.size();
  for (std::size_t i = 0; same && i < log_a.epochs.size(); ++i) {
    same = log_a.epochs[i].train_loss == log_b.epochs[i].train_loss &&
           log_a.epochs[i].validation_loss == log_b.epochs[i].validation_loss;
  }

  LogisticRegression lr;
  const SampleBatch train_batch = make_batch(split.train);
  lr.fit(flatten_features(train_batch), train_batch.labels);
  const double lr_f1 = f1_accident(lr.predict(flatten_features(make_batch(split.test))), truth);
  return pass_if(acap_f1 >= kC6AcapF1 && lr_f1 >= kC6LrF1 && same && log_a.epochs.size() <= 60,
                 "ACAP F1 " + fmt(acap_f1) + " after " + std::to_string(log_a.epochs.size()) +
                     " epochs, LR F1 " + fmt(lr_f1) + ", repeat run " + (same ? "identical" : "differs"));
}

Verdict trend_reproduction() {
  const auto t0 = std::chrono::steady_clock::now();
  const Dataset d = synthetic_dataset();
  ExperimentConfig cfg;
  cfg.aggregations = {"gg", "g5", "som"};
  cfg.methods = {"acap"};
  cfg.seeds.clear();
  for (int s = 0; s < kC7Runs; ++s) cfg.seeds.push_back(static_cast<std::uint64_t>(s));
  const ExperimentReport rep = run_experiment(d, cfg);
  const double secs = seconds_since(t0);
  const double gg = rep.cell("gg", "acap").mean_f1();
  const double g5 = rep.cell("g5", "acap").mean_f1();
  const double som = rep.cell("som", "acap").mean_f1();
  return pass_if(gg - g5 >= kC7Margin && gg >= som && secs < kC7Seconds,
                 "mean F1 over " + std::to_string(kC7Runs) + " runs: GG " + fmt(gg) + ", 5x5 " + fmt(g5) +
                     ", SOM " + fmt(som) + ", " + fmt(secs, 0) + " s");
}

Verdict real_data_check() {
  const char* atlas = std::getenv("ACAP_ATLAS_CSV");
  const char* regional = std::getenv("ACAP_REGIONAL_CSV");
  if (atlas == nullptr || regional == nullptr) {
    return {Outcome::Skip, "set ACAP_ATLAS_CSV and ACAP_REGIONAL_CSV to run"};
  }
  const StudyArea area = StudyArea::hannover();
  AccidentData acc = parse_accidents(std::filesystem::path(atlas), area);
  RegionalData reg = parse_regional_features(std::filesystem::path(regional));
  const double n = static_cast<double>(acc.events.size());
  Dataset d;
  d.city = "hannover";
  d.area = area;
  d.events = std::move(acc.events);
  d.regional = std::move(reg.table);
  ExperimentConfig cfg;
  cfg.aggregations = {"gg"};
  cfg.methods = {"acap"};
  const double f1 = run_experiment(d, cfg).cell("gg", "acap").mean_f1();
  return pass_if(std::abs(n - kC8Events) <= kC8EventTol * kC8Events && std::abs(f1 - kC8F1) <= kC8F1Tol,
                 std::to_string(static_cast<long>(n)) + " events, ACAP(GG) mean F1 " + fmt(f1));
}

Verdict metric_invariants() {
  std::mt19937_64 rng(90'000);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> len(1, 300);
  int f1_bad = 0;
  for (int i = 0; i < 1000; ++i) {
    const int n = len(rng);
    const double rate = u(rng);
    std::vector<int> pred, truth;
    for (int k = 0; k < n; ++k) {
      pred.push_back(u(rng) < rate);
      truth.push_back(u(rng) < 0.25);
    }
    f1_bad += std::abs(f1_accident(pred, truth) - oracle::f1_positive(pred, truth)) > 1e-12;
  }

  const Dataset d = synthetic_dataset();
  ExperimentConfig cfg;
  std::string ratios;
  bool exact = true, leak_free = true;
  for (const std::string agg : {"gg", "g5"}) {
    const PreparedData prep = prepare_data(d, agg, cfg, 0);
    for (const auto* part : {&prep.split.train, &prep.split.validation, &prep.split.test}) {
      std::size_t pos = 0, neg = 0;
      for (const auto& s : *part) (s.label == 1 ? pos : neg) += 1;
      exact = exact && pos > 0 && neg == 3 * pos;
      ratios += std::to_string(neg) + ":" + std::to_string(pos) + " ";
    }
    try {
      check_no_leakage(prep.split);
    } catch (const LeakageError&) {
      leak_free = false;
    }
    int train_max = -1, val_min = 99, val_max = -1, test_min = 99;
    for (const auto& s : prep.split.train) train_max = std::max(train_max, s.time.month_index());
    for (const auto& s : prep.split.validation) {
      val_min = std::min(val_min, s.time.month_index());
      val_max = std::max(val_max, s.time.month_index());
    }
    for (const auto& s : prep.split.test) test_min = std::min(test_min, s.time.month_index());
    leak_free = leak_free && train_max < val_min && val_max < test_min;
  }
  return pass_if(f1_bad == 0 && exact && leak_free,
                 "F1 oracle mismatches " + std::to_string(f1_bad) + "/1000, neg:pos per part " + ratios +
                     (leak_free ? "no leakage" : "LEAKAGE"));
}

Verdict ablation_harness() {
  const Dataset d = synthetic_dataset();
  ExperimentConfig cfg;
  cfg.aggregations = {"gg"};
  cfg.seeds.clear();
  for (int s = 0; s < kC10Runs; ++s) cfg.seeds.push_back(static_cast<std::uint64_t>(s));
  const AblationReport rep = ablation_eval(d, cfg);
  std::string detail;
  for (const auto& e : rep.entries) detail += e.groups + " " + fmt(e.mean_f1) + " (" + fmt(e.ratio, 3) + ") ";
  const double regional = rep.entry("regional").ratio;
  const double accident = rep.entry("accident").ratio;
  const bool complete = rep.entries.size() == 4 && rep.entry("temporal").f1.size() == kC10Runs;
  return pass_if(complete && regional > accident, detail + "over " + std::to_string(kC10Runs) + " runs");
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"geohash conformance", geohash_conformance},
      {"grid-growing correctness", grid_growing_correctness},
      {"assignment semantics", assignment_semantics},
      {"clustering baselines vs oracles", clustering_baselines},
      {"gradient fidelity", gradient_fidelity},
      {"training sanity", training_sanity},
      {"trend reproduction on the synthetic city", trend_reproduction},
      {"real-data check (optional)", real_data_check},
      {"metric and sampling invariants", metric_invariants},
      {"ablation harness", ablation_harness},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {Outcome::Fail, std::string("threw: ") + e.what()};
    }
    const char* tag = v.outcome == Outcome::Pass ? "PASS" : v.outcome == Outcome::Skip ? "SKIP" : "FAIL";
    failures += v.outcome == Outcome::Fail;
    std::printf("[%s] %2zu %s: %s [%.1f s]\n", tag, i + 1, criteria[i].first.c_str(), v.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
