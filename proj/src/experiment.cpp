#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <functional>
#include <sstream>
#include <thread>

#include "acap/errors.hpp"
#include "acap/pipeline.hpp"

namespace acap {

namespace {

// Independent RNG streams derived from one run seed.
enum class Stream : std::uint64_t { Negatives = 1, Aggregation = 2, Init = 3 };

std::mt19937_64 stream_rng(std::uint64_t seed, Stream s) {
  std::seed_seq seq{seed, static_cast<std::uint64_t>(s)};
  return std::mt19937_64(seq);
}

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  std::vector<std::exception_ptr> errors(n);
  auto guarded = [&](std::size_t i) {
    try {
      fn(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, jobs)), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) guarded(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) guarded(i);
      });
    }
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::string format_fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

double mean(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

template <typename T>
T json_field(const nlohmann::json& doc, const char* key, T fallback) {
  return doc.contains(key) ? doc.at(key).get<T>() : fallback;
}

}  // namespace

// ---------------------------------------------------------------------------

void ExperimentConfig::validate() const {
  if (aggregations.empty() || methods.empty() || seeds.empty()) {
    throw ConfigError("experiment needs at least one aggregation, method and seed");
  }
  for (const auto& a : aggregations) {
    if (std::find(kAggregationNames.begin(), kAggregationNames.end(), a) == kAggregationNames.end()) {
      throw ConfigError("unknown aggregation '" + a + "'");
    }
  }
  for (const auto& m : methods) {
    if (std::find(kMethodNames.begin(), kMethodNames.end(), m) == kMethodNames.end()) {
      throw ConfigError("unknown method '" + m + "'");
    }
  }
  grid_growing.validate();
  if (som.rows < 1 || som.cols < 1 || som.epochs < 1) throw ConfigError("invalid SOM size");
  if (kmeans_max_k < 2) throw ConfigError("kmeans_max_k must be at least 2");
  if (negative_ratio < 1) throw ConfigError("negative ratio must be at least 1");
  split.validate();
  train.validate();
  if (!(logistic.learning_rate > 0.0) || logistic.max_iterations < 1) {
    throw ConfigError("invalid logistic regression settings");
  }
  if (acap.gru_hidden < 1 || acap.gru_layers < 1 || acap.embed_dim < 1) {
    throw ConfigError("invalid ACAP dimensions");
  }
  for (int h : acap.head) {
    if (h < 1) throw ConfigError("invalid ACAP head width");
  }
  for (int h : dnn_hidden) {
    if (h < 1) throw ConfigError("invalid DNN layer width");
  }
  if (jobs < 1) throw ConfigError("jobs must be at least 1");
}

nlohmann::json ExperimentConfig::to_json() const {
  return {
      {"aggregations", aggregations},
      {"methods", methods},
      {"seeds", seeds},
      {"grid_growing",
       {{"delta_detail", grid_growing.delta_detail},
        {"delta_base", grid_growing.delta_base},
        {"distance_threshold_m", grid_growing.distance_threshold_m}}},
      {"som",
       {{"rows", som.rows},
        {"cols", som.cols},
        {"epochs", som.epochs},
        {"learning_rate_start", som.learning_rate_start},
        {"learning_rate_end", som.learning_rate_end}}},
      {"kmeans_max_k", kmeans_max_k},
      {"negative_ratio", negative_ratio},
      {"split", split.to_json()},
      {"train", train.to_json()},
      {"logistic",
       {{"learning_rate", logistic.learning_rate},
        {"max_iterations", logistic.max_iterations},
        {"gradient_tolerance", logistic.gradient_tolerance}}},
      {"acap",
       {{"gru_hidden", acap.gru_hidden},
        {"gru_layers", acap.gru_layers},
        {"embed_dim", acap.embed_dim},
        {"head", acap.head}}},
      {"dnn_hidden", dnn_hidden},
      {"groups",
       {{"temporal", groups.temporal}, {"accident", groups.accident}, {"regional", groups.regional}}},
  };
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& doc) {
  ExperimentConfig c;
  try {
    c.aggregations = json_field(doc, "aggregations", c.aggregations);
    c.methods = json_field(doc, "methods", c.methods);
    c.seeds = json_field(doc, "seeds", c.seeds);
    if (doc.contains("grid_growing")) {
      const auto& g = doc.at("grid_growing");
      c.grid_growing.delta_detail = json_field(g, "delta_detail", c.grid_growing.delta_detail);
      c.grid_growing.delta_base = json_field(g, "delta_base", c.grid_growing.delta_base);
      c.grid_growing.distance_threshold_m =
          json_field(g, "distance_threshold_m", c.grid_growing.distance_threshold_m);
    }
    if (doc.contains("som")) {
      const auto& s = doc.at("som");
      c.som.rows = json_field(s, "rows", c.som.rows);
      c.som.cols = json_field(s, "cols", c.som.cols);
      c.som.epochs = json_field(s, "epochs", c.som.epochs);
      c.som.learning_rate_start = json_field(s, "learning_rate_start", c.som.learning_rate_start);
      c.som.learning_rate_end = json_field(s, "learning_rate_end", c.som.learning_rate_end);
    }
    c.kmeans_max_k = json_field(doc, "kmeans_max_k", c.kmeans_max_k);
    c.negative_ratio = json_field(doc, "negative_ratio", c.negative_ratio);
    if (doc.contains("split")) c.split = SplitSpec::from_json(doc.at("split"));
    if (doc.contains("train")) c.train = TrainConfig::from_json(doc.at("train"));
    if (doc.contains("logistic")) {
      const auto& l = doc.at("logistic");
      c.logistic.learning_rate = json_field(l, "learning_rate", c.logistic.learning_rate);
      c.logistic.max_iterations = json_field(l, "max_iterations", c.logistic.max_iterations);
      c.logistic.gradient_tolerance =
          json_field(l, "gradient_tolerance", c.logistic.gradient_tolerance);
    }
    if (doc.contains("acap")) {
      const auto& a = doc.at("acap");
      c.acap.gru_hidden = json_field(a, "gru_hidden", c.acap.gru_hidden);
      c.acap.gru_layers = json_field(a, "gru_layers", c.acap.gru_layers);
      c.acap.embed_dim = json_field(a, "embed_dim", c.acap.embed_dim);
      c.acap.head = json_field(a, "head", c.acap.head);
    }
    c.dnn_hidden = json_field(doc, "dnn_hidden", c.dnn_hidden);
    if (doc.contains("groups")) {
      const auto& g = doc.at("groups");
      c.groups.temporal = json_field(g, "temporal", c.groups.temporal);
      c.groups.accident = json_field(g, "accident", c.groups.accident);
      c.groups.regional = json_field(g, "regional", c.groups.regional);
    }
    c.jobs = json_field(doc, "jobs", c.jobs);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid experiment configuration: ") + e.what());
  }
  c.validate();
  return c;
}

std::string ExperimentConfig::hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : to_json().dump()) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------

std::unique_ptr<Aggregation> fit_aggregation(const std::string& name, std::span<const Event> events,
                                             const ExperimentConfig& config, std::mt19937_64& rng) {
  std::vector<GeoPoint> points;
  const MonthWindow history = config.split.history_window();
  for (const auto& e : events) {
    if (history.contains(e.time.month_index())) points.push_back(e.location);
  }
  if (points.empty()) throw DomainError("no events in the training months to fit an aggregation");
  if (name == "gg") return std::make_unique<ClusterModel>(grid_grow(points, config.grid_growing, rng));
  if (name == "g1") return std::make_unique<GridAggregation>(6);
  if (name == "g5") return std::make_unique<GridAggregation>(5);
  if (name == "som") {
    return std::make_unique<PrototypeAggregation>(som_train(points, config.som, rng).to_aggregation());
  }
  if (name == "kmeans") {
    const int k_max = std::min<int>(config.kmeans_max_k, static_cast<int>(points.size()));
    const int k = elbow_k(points, std::max(2, k_max), rng).k;
    KMeansResult km = kmeans(points, k, rng);
    std::vector<std::array<double, 2>> protos;
    for (const auto& c : km.centroids) protos.push_back({c.lat, c.lon});
    return std::make_unique<PrototypeAggregation>("kmeans", std::move(protos),
                                                  CoordinateScaling::identity());
  }
  if (name == "dbscan") {
    DbscanSelection sel = select_dbscan_params(points);
    return std::make_unique<DbscanAggregation>(points, sel.labels, sel.eps_m, sel.min_pts);
  }
  throw ConfigError("unknown aggregation '" + name + "'");
}

PreparedData prepare_data(const Dataset& data, const std::string& aggregation,
                          const ExperimentConfig& config, std::uint64_t seed) {
  std::vector<Event> study;
  for (const auto& e : data.events) {
    if (split_part(config.split, e.time.month_index()) != SplitPart::Outside) study.push_back(e);
  }
  if (study.empty()) throw DomainError("no events inside the study months");

  auto neg_rng = stream_rng(seed, Stream::Negatives);
  auto anchors = positive_anchors(study);
  auto negatives = negative_sample(study, config.negative_ratio, data.area, config.split, neg_rng);
  anchors.insert(anchors.end(), negatives.begin(), negatives.end());

  auto agg_rng = stream_rng(seed, Stream::Aggregation);
  auto agg = fit_aggregation(aggregation, study, config, agg_rng);

  FeatureContext ctx;
  ctx.area = data.area;
  ctx.split = config.split;
  ctx.vocabulary = data.vocabulary;
  ctx.schema = data.schema;
  ctx.regional_table = &data.regional;

  PreparedData out;
  out.matrix = build_samples(*agg, study, anchors, ctx);
  out.region_count = out.matrix.regions.size();
  out.split = temporal_split(out.matrix.samples, config.split);
  check_no_leakage(out.split);
  return out;
}

RunResult run_method(const PreparedData& prepared, const std::string& method,
                     const ExperimentConfig& config, std::uint64_t seed, TrainLog* log,
                     std::unique_ptr<Network>* trained) {
  const SplitSamples& s = prepared.split;
  if (s.train.empty() || s.validation.empty() || s.test.empty()) {
    throw DomainError("every split part needs samples");
  }
  RunResult r;
  r.seed = seed;
  r.regions = prepared.region_count;
  r.test_samples = s.test.size();
  std::vector<int> labels;
  for (const auto& x : s.test) labels.push_back(x.label);

  std::vector<int> predictions;
  if (method == "lr") {
    SampleBatch train = make_batch(s.train);
    LogisticRegression model;
    model.fit(flatten_features(train), train.labels, config.logistic);
    predictions = model.predict(flatten_features(make_batch(s.test)));
  } else {
    auto init = stream_rng(seed, Stream::Init);
    std::unique_ptr<Network> net;
    if (method == "acap") {
      AcapDims dims = config.acap;
      dims.accident_dim = prepared.matrix.accident_dim;
      dims.regional_dim = prepared.matrix.regional_dim;
      dims.history = static_cast<int>(s.train.front().temporal_seq.size());
      dims.temporal_dim = static_cast<int>(s.train.front().temporal_seq.front().size());
      dims.dropout = config.train.dropout;
      net = std::make_unique<AcapNetwork>(dims, init, config.groups);
    } else if (method == "dnn") {
      const auto& f = s.train.front();
      const int width = static_cast<int>(f.temporal_seq.size() * f.temporal_seq.front().size() +
                                         f.accident.size() + f.regional.size());
      net = std::make_unique<DnnNetwork>(width, init, config.dnn_hidden);
    } else {
      throw ConfigError("unknown method '" + method + "'");
    }
    TrainConfig tc = config.train;
    tc.seed = seed;
    TrainLog tl = train_network(*net, s.train, s.validation, tc);
    r.best_epoch = tl.best_epoch;
    predictions = predict(*net, s.test);
    if (log != nullptr) *log = std::move(tl);
    if (trained != nullptr) *trained = std::move(net);
  }
  r.f1 = f1_accident(predictions, labels);
  if (config.keep_predictions) {
    r.predictions = std::move(predictions);
    r.labels = std::move(labels);
    for (const auto& x : s.test) r.locations.push_back(x.location);
  }
  return r;
}

// ---------------------------------------------------------------------------

double ExperimentCell::mean_f1() const {
  std::vector<double> f;
  for (const auto& r : runs) f.push_back(r.f1);
  return mean(f);
}

const ExperimentCell& ExperimentReport::cell(const std::string& aggregation,
                                             const std::string& method) const {
  for (const auto& c : cells) {
    if (c.aggregation == aggregation && c.method == method) return c;
  }
  throw DomainError("report has no entry for " + aggregation + "/" + method);
}

nlohmann::json ExperimentReport::to_json() const {
  nlohmann::json results = nlohmann::json::array();
  for (const auto& c : cells) {
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& r : c.runs) {
      runs.push_back({{"seed", r.seed},
                      {"f1", r.f1},
                      {"test_samples", r.test_samples},
                      {"regions", r.regions},
                      {"best_epoch", r.best_epoch}});
    }
    results.push_back({{"aggregation", c.aggregation},
                       {"method", c.method},
                       {"run_count", c.runs.size()},
                       {"mean_f1", c.mean_f1()},
                       {"runs", runs}});
  }
  return {{"city", city}, {"config_hash", config_hash}, {"config", config}, {"results", results}};
}

std::string ExperimentReport::table_csv() const {
  std::vector<std::string> aggs, methods;
  for (const auto& c : cells) {
    if (std::find(aggs.begin(), aggs.end(), c.aggregation) == aggs.end()) aggs.push_back(c.aggregation);
    if (std::find(methods.begin(), methods.end(), c.method) == methods.end()) methods.push_back(c.method);
  }
  std::ostringstream out;
  out << "city,aggregation";
  for (const auto& m : methods) out << ',' << m;
  out << '\n';
  for (const auto& a : aggs) {
    out << city << ',' << a;
    for (const auto& m : methods) out << ',' << format_fixed(cell(a, m).mean_f1());
    out << '\n';
  }
  return out.str();
}

ExperimentReport run_experiment(const Dataset& data, const ExperimentConfig& config) {
  config.validate();
  const std::size_t n_agg = config.aggregations.size();
  const std::size_t n_seed = config.seeds.size();
  const std::size_t n_method = config.methods.size();
  // results[(a * n_seed + s) * n_method + m]
  std::vector<RunResult> results(n_agg * n_seed * n_method);
  parallel_for(n_agg * n_seed, config.jobs, [&](std::size_t task) {
    const std::size_t a = task / n_seed;
    const std::size_t s = task % n_seed;
    const std::uint64_t seed = config.seeds[s];
    PreparedData prepared = prepare_data(data, config.aggregations[a], config, seed);
    for (std::size_t m = 0; m < n_method; ++m) {
      results[task * n_method + m] = run_method(prepared, config.methods[m], config, seed);
    }
  });

  ExperimentReport report;
  report.city = data.city;
  report.config = config.to_json();
  report.config_hash = config.hash();
  for (std::size_t a = 0; a < n_agg; ++a) {
    for (std::size_t m = 0; m < n_method; ++m) {
      ExperimentCell cell{config.aggregations[a], config.methods[m], {}};
      for (std::size_t s = 0; s < n_seed; ++s) {
        cell.runs.push_back(std::move(results[(a * n_seed + s) * n_method + m]));
      }
      report.cells.push_back(std::move(cell));
    }
  }
  return report;
}

// ---------------------------------------------------------------------------

namespace {

nlohmann::json radius_json(double r) {
  if (std::isinf(r)) return "inf";
  return r;
}

}  // namespace

nlohmann::json RadiusReport::to_json() const {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& s : series) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : s.points) {
      pts.push_back({{"radius_m", radius_json(p.radius_m)}, {"samples", p.samples}, {"f1", p.f1}});
    }
    out.push_back({{"aggregation", s.aggregation}, {"method", s.method}, {"points", pts}});
  }
  return {{"center", {{"lat", center.lat}, {"lon", center.lon}}}, {"series", out}};
}

std::string RadiusReport::to_csv() const {
  std::ostringstream out;
  out << "aggregation,method,radius_m,samples,f1\n";
  for (const auto& s : series) {
    for (const auto& p : s.points) {
      out << s.aggregation << ',' << s.method << ','
          << (std::isinf(p.radius_m) ? std::string("inf") : format_fixed(p.radius_m, 1)) << ','
          << p.samples << ',' << format_fixed(p.f1) << '\n';
    }
  }
  return out.str();
}

RadiusReport radius_eval(const Dataset& data, const ExperimentConfig& config,
                         const GeoPoint& center, std::span<const double> radii) {
  if (radii.empty()) throw DomainError("radius study needs at least one radius");
  for (double r : radii) {
    if (!(r > 0.0)) throw DomainError("radius must be positive");
  }
  ExperimentConfig cfg = config;
  cfg.keep_predictions = true;
  ExperimentReport report = run_experiment(data, cfg);
  RadiusReport out;
  out.center = center;
  for (const auto& cell : report.cells) {
    RadiusSeries series{cell.aggregation, cell.method, {}};
    std::vector<std::vector<RadiusPoint>> curves;
    for (const auto& run : cell.runs) {
      curves.push_back(radius_curve(run.locations, run.predictions, run.labels, center, radii));
    }
    for (std::size_t i = 0; i < radii.size(); ++i) {
      std::vector<double> f;
      for (const auto& c : curves) f.push_back(c[i].f1);
      series.points.push_back({radii[i], curves.front()[i].samples, mean(f)});
    }
    out.series.push_back(std::move(series));
  }
  return out;
}

// ---------------------------------------------------------------------------

const AblationEntry& AblationReport::entry(const std::string& groups) const {
  for (const auto& e : entries) {
    if (e.groups == groups) return e;
  }
  throw DomainError("ablation report has no entry for " + groups);
}

nlohmann::json AblationReport::to_json() const {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& e : entries) {
    out.push_back({{"groups", e.groups}, {"f1", e.f1}, {"mean_f1", e.mean_f1}, {"ratio", e.ratio}});
  }
  return {{"aggregation", aggregation}, {"entries", out}};
}

std::string AblationReport::to_csv() const {
  std::ostringstream out;
  out << "groups,mean_f1,ratio\n";
  for (const auto& e : entries) {
    out << e.groups << ',' << format_fixed(e.mean_f1) << ',' << format_fixed(e.ratio) << '\n';
  }
  return out.str();
}

AblationReport ablation_eval(const Dataset& data, const ExperimentConfig& config) {
  config.validate();
  const std::vector<FeatureGroups> variants = {
      {true, true, true}, {false, false, true}, {true, false, false}, {false, true, false}};
  AblationReport report;
  report.aggregation = config.aggregations.front();
  const std::size_t n_seed = config.seeds.size();
  std::vector<double> f1(variants.size() * n_seed);
  parallel_for(n_seed, config.jobs, [&](std::size_t s) {
    const std::uint64_t seed = config.seeds[s];
    PreparedData prepared = prepare_data(data, report.aggregation, config, seed);
    for (std::size_t v = 0; v < variants.size(); ++v) {
      ExperimentConfig cfg = config;
      cfg.groups = variants[v];
      f1[v * n_seed + s] = run_method(prepared, "acap", cfg, seed).f1;
    }
  });
  for (std::size_t v = 0; v < variants.size(); ++v) {
    AblationEntry e;
    e.groups = variants[v].name();
    e.f1.assign(f1.begin() + static_cast<std::ptrdiff_t>(v * n_seed),
                f1.begin() + static_cast<std::ptrdiff_t>((v + 1) * n_seed));
    e.mean_f1 = mean(e.f1);
    report.entries.push_back(std::move(e));
  }
  const double full = report.entries.front().mean_f1;
  for (auto& e : report.entries) e.ratio = full > 0.0 ? e.mean_f1 / full : 0.0;
  return report;
}

}  // namespace acap
