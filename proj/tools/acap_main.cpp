// Command-line front end: synth, cluster, featurize, train, evaluate, radius,
// ablation. Exit codes: 0 ok, 1 runtime failure, 2 configuration error.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "acap/csv.hpp"
#include "acap/errors.hpp"
#include "acap/ingest.hpp"
#include "acap/pipeline.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out = "acap_out";
  std::string aggregation;
  std::string method;
};

/// Parsed run configuration. Relative data paths resolve against the
/// directory of the config file.
struct RunConfig {
  std::string city = "hannover";
  acap::StudyArea area = acap::StudyArea::hannover();
  fs::path accidents;
  fs::path regional;
  fs::path vocabulary;
  acap::ColumnMapping columns;
  acap::CsvFormat accident_format;
  char regional_delimiter = ',';
  std::optional<acap::SynthSpec> synthetic;
  acap::ExperimentConfig experiment;
  std::uint64_t seed = 0;
  acap::GeoPoint radius_center{52.3759, 9.7320};
  std::vector<double> radii_m = {1000, 2000, 4000, 8000, std::numeric_limits<double>::infinity()};
};

char delimiter_from(const json& doc, const char* key, char fallback) {
  if (!doc.contains(key)) return fallback;
  const auto s = doc.at(key).get<std::string>();
  if (s.size() != 1) throw acap::ConfigError(std::string(key) + " must be a single character");
  return s[0];
}

RunConfig load_config(const Flags& flags) {
  RunConfig rc;
  json doc = json::object();
  fs::path base = fs::current_path();
  if (!flags.config.empty()) {
    std::ifstream in(flags.config);
    if (!in) throw acap::ConfigError("cannot open config file " + flags.config);
    try {
      doc = json::parse(in);
    } catch (const json::exception& e) {
      throw acap::ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    base = fs::absolute(flags.config).parent_path();
  }
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };
  try {
    rc.city = doc.value("city", rc.city);
    if (doc.contains("study_area")) rc.area = acap::StudyArea::from_json(doc.at("study_area"));
    if (doc.contains("data")) {
      const auto& d = doc.at("data");
      if (d.contains("accidents")) rc.accidents = resolve(d.at("accidents").get<std::string>());
      if (d.contains("regional")) rc.regional = resolve(d.at("regional").get<std::string>());
      if (d.contains("vocabulary")) rc.vocabulary = resolve(d.at("vocabulary").get<std::string>());
      if (d.contains("columns")) rc.columns = acap::ColumnMapping::from_json(d.at("columns"));
      rc.accident_format.delimiter = delimiter_from(d, "delimiter", rc.accident_format.delimiter);
      rc.accident_format.decimal_comma = d.value("decimal_comma", false);
      rc.regional_delimiter = delimiter_from(d, "regional_delimiter", rc.regional_delimiter);
    }
    if (doc.contains("synthetic")) rc.synthetic = acap::SynthSpec::from_json(doc.at("synthetic"));
    if (doc.contains("experiment")) {
      rc.experiment = acap::ExperimentConfig::from_json(doc.at("experiment"));
    }
    rc.seed = doc.value("seed", rc.seed);
    if (doc.contains("radius")) {
      const auto& r = doc.at("radius");
      if (r.contains("center")) {
        rc.radius_center = {r.at("center").at("lat").get<double>(),
                            r.at("center").at("lon").get<double>()};
      }
      if (r.contains("radii_m")) {
        rc.radii_m.clear();
        for (const auto& v : r.at("radii_m")) {
          rc.radii_m.push_back(v.is_string() && v.get<std::string>() == "inf"
                                   ? std::numeric_limits<double>::infinity()
                                   : v.get<double>());
        }
      }
    }
  } catch (const json::exception& e) {
    throw acap::ConfigError(std::string("invalid config: ") + e.what());
  }

  if (flags.seed) rc.seed = *flags.seed;
  // One root seed: the run seeds are root, root + 1, ...
  const std::size_t runs = rc.experiment.seeds.size();
  rc.experiment.seeds.clear();
  for (std::size_t i = 0; i < runs; ++i) rc.experiment.seeds.push_back(rc.seed + i);
  if (!flags.aggregation.empty()) rc.experiment.aggregations = {flags.aggregation};
  if (!flags.method.empty()) rc.experiment.methods = {flags.method};
  rc.experiment.validate();
  return rc;
}

acap::Dataset load_dataset(const RunConfig& rc) {
  acap::Dataset data;
  data.city = rc.city;
  data.area = rc.area;
  if (!rc.vocabulary.empty()) {
    std::ifstream in(rc.vocabulary);
    if (!in) throw acap::ConfigError("cannot open vocabulary file " + rc.vocabulary.string());
    try {
      data.vocabulary = acap::AccidentVocabulary::from_json(json::parse(in));
    } catch (const json::exception& e) {
      throw acap::ConfigError(std::string("vocabulary is not valid JSON: ") + e.what());
    }
  }
  if (rc.accidents.empty() && !rc.synthetic) {
    throw acap::ConfigError("config names neither accident data nor a synthetic city");
  }
  if (rc.accidents.empty()) {
    std::mt19937_64 rng(rc.seed);
    acap::SynthCity city = acap::synth_city(*rc.synthetic, rng);
    data.area = city.area;
    data.events = std::move(city.events);
    data.regional = std::move(city.features);
    return data;
  }
  if (rc.regional.empty()) throw acap::ConfigError("config names no regional feature file");
  if (!fs::exists(rc.accidents)) {
    throw acap::ConfigError("accident file not found: " + rc.accidents.string());
  }
  if (!fs::exists(rc.regional)) {
    throw acap::ConfigError("regional feature file not found: " + rc.regional.string());
  }
  acap::AccidentData acc = acap::parse_accidents(rc.accidents, rc.area, rc.columns, rc.accident_format);
  std::cerr << "ingest: " << acc.report.rows << " rows, " << acc.report.accepted << " accepted, "
            << acc.report.outside_area << " outside the study area, "
            << acc.report.rejections.size() - acc.report.outside_area << " invalid\n";
  acap::RegionalData reg = acap::parse_regional_features(rc.regional, rc.regional_delimiter);
  if (reg.duplicates > 0) {
    std::cerr << "regional: " << reg.duplicates << " duplicate keys, last value kept\n";
  }
  if (!reg.rejections.empty()) std::cerr << "regional: " << reg.rejections.size() << " rows rejected\n";
  data.events = std::move(acc.events);
  data.regional = std::move(reg.table);
  return data;
}

void write_file(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

void write_json(const fs::path& path, const json& doc) { write_file(path, doc.dump(2) + "\n"); }

json provenance(const RunConfig& rc) {
  return {{"city", rc.city},
          {"seed", rc.seed},
          {"study_area", rc.area.to_json()},
          {"experiment", rc.experiment.to_json()},
          {"config_hash", rc.experiment.hash()}};
}

// ---------------------------------------------------------------------------

int cmd_synth(const Flags& flags) {
  RunConfig rc = load_config(flags);
  acap::SynthSpec spec = rc.synthetic.value_or(acap::SynthSpec::straddling_default());
  std::mt19937_64 rng(rc.seed);
  acap::SynthCity city = acap::synth_city(spec, rng);
  const fs::path out = flags.out;
  {
    std::ostringstream s;
    acap::write_accidents(s, city.events);
    write_file(out / "accidents.csv", s.str());
  }
  {
    std::ostringstream s;
    acap::write_regional_features(s, city.features);
    write_file(out / "regional.csv", s.str());
  }
  json truth = json::array();
  for (const auto& h : city.hotspots) truth.push_back(h.to_json());
  json sources = json::object();
  for (std::size_t i = 0; i < city.events.size(); ++i) sources[city.events[i].id] = city.event_hotspot[i];
  write_json(out / "ground_truth.json",
             {{"seed", rc.seed}, {"spec", spec.to_json()}, {"hotspots", truth}, {"event_hotspot", sources}});
  json run = {{"city", "synthetic"},
              {"seed", rc.seed},
              {"study_area", city.area.to_json()},
              {"data", {{"accidents", "accidents.csv"}, {"regional", "regional.csv"}}},
              {"experiment", rc.experiment.to_json()}};
  write_json(out / "config.json", run);
  std::cout << "wrote " << city.events.size() << " events and " << city.features.cell_count()
            << " feature cells to " << out.string() << "\n";
  return kExitOk;
}

int cmd_cluster(const Flags& flags) {
  RunConfig rc = load_config(flags);
  acap::Dataset data = load_dataset(rc);
  const std::string agg = rc.experiment.aggregations.front();
  std::seed_seq seq{rc.seed, std::uint64_t{2}};
  std::mt19937_64 rng(seq);
  auto model = acap::fit_aggregation(agg, data.events, rc.experiment, rng);
  json doc = model->to_json();
  write_json(fs::path(flags.out) / ("cluster_" + agg + ".json"),
             {{"provenance", provenance(rc)}, {"aggregation", agg}, {"model", doc}});
  std::cout << "aggregation " << agg << " written to " << flags.out << "\n";
  return kExitOk;
}

std::string sample_row(const acap::Sample& s, const char* part) {
  std::ostringstream row;
  row << part << ',' << s.region.to_string() << ',' << s.label << ',' << s.time.year << ','
      << s.time.month << ',' << s.time.day_of_week << ',' << s.time.hour << ','
      << acap::csv::format_double(s.location.lat) << ',' << acap::csv::format_double(s.location.lon);
  for (const auto& step : s.temporal_seq) {
    for (double v : step) row << ',' << acap::csv::format_double(v);
  }
  for (double v : s.accident) row << ',' << acap::csv::format_double(v);
  for (double v : s.regional) row << ',' << acap::csv::format_double(v);
  return row.str();
}

int cmd_featurize(const Flags& flags) {
  RunConfig rc = load_config(flags);
  acap::Dataset data = load_dataset(rc);
  const std::string agg = rc.experiment.aggregations.front();
  acap::PreparedData prepared = acap::prepare_data(data, agg, rc.experiment, rc.seed);
  std::ostringstream csv;
  csv << "split,region,label,year,month,day_of_week,hour,lat,lon";
  for (int t = 0; t < acap::kHistoryLength; ++t) {
    for (int j = 0; j < acap::kTemporalDim; ++j) csv << ",t" << t << "_" << j;
  }
  for (int j = 0; j < prepared.matrix.accident_dim; ++j) csv << ",accident_" << j;
  for (const auto& name : data.schema.column_names()) csv << ",regional_" << name;
  csv << '\n';
  for (const auto& s : prepared.split.train) csv << sample_row(s, "train") << '\n';
  for (const auto& s : prepared.split.validation) csv << sample_row(s, "validation") << '\n';
  for (const auto& s : prepared.split.test) csv << sample_row(s, "test") << '\n';
  write_file(fs::path(flags.out) / ("samples_" + agg + ".csv"), csv.str());
  write_json(fs::path(flags.out) / ("samples_" + agg + ".json"),
             {{"provenance", provenance(rc)},
              {"aggregation", agg},
              {"regions", prepared.region_count},
              {"train", prepared.split.train.size()},
              {"validation", prepared.split.validation.size()},
              {"test", prepared.split.test.size()}});
  std::cout << prepared.matrix.samples.size() << " samples over " << prepared.region_count
            << " regions\n";
  return kExitOk;
}

int cmd_train(const Flags& flags) {
  RunConfig rc = load_config(flags);
  acap::Dataset data = load_dataset(rc);
  const std::string agg = rc.experiment.aggregations.front();
  const std::string method = rc.experiment.methods.front();
  acap::PreparedData prepared = acap::prepare_data(data, agg, rc.experiment, rc.seed);
  acap::TrainLog log;
  std::unique_ptr<acap::Network> net;
  acap::RunResult result = acap::run_method(prepared, method, rc.experiment, rc.seed, &log, &net);
  const fs::path out = flags.out;
  const std::string stem = agg + "_" + method;
  json log_doc = {{"provenance", provenance(rc)},
                  {"aggregation", agg},
                  {"method", method},
                  {"test_f1", result.f1},
                  {"test_samples", result.test_samples}};
  if (net) {
    log_doc["training"] = log.to_json();
    write_json(out / ("checkpoint_" + stem + ".json"), acap::save_checkpoint(*net));
    if (log.early_stopped) {
      std::cout << "early stop after epoch " << log.epochs.back().epoch << ", best epoch "
                << log.best_epoch << "\n";
    }
  }
  write_json(out / ("train_log_" + stem + ".json"), log_doc);
  std::cout << method << " on " << agg << ": test F1 " << result.f1 << "\n";
  return kExitOk;
}

int cmd_evaluate(const Flags& flags) {
  RunConfig rc = load_config(flags);
  acap::Dataset data = load_dataset(rc);
  acap::ExperimentReport report = acap::run_experiment(data, rc.experiment);
  json doc = report.to_json();
  doc["seed"] = rc.seed;
  write_json(fs::path(flags.out) / "report.json", doc);
  write_file(fs::path(flags.out) / "table.csv", report.table_csv());
  std::cout << report.table_csv();
  return kExitOk;
}

int cmd_radius(const Flags& flags) {
  RunConfig rc = load_config(flags);
  acap::Dataset data = load_dataset(rc);
  acap::RadiusReport report = acap::radius_eval(data, rc.experiment, rc.radius_center, rc.radii_m);
  json doc = report.to_json();
  doc["provenance"] = provenance(rc);
  write_json(fs::path(flags.out) / "radius.json", doc);
  write_file(fs::path(flags.out) / "radius.csv", report.to_csv());
  std::cout << report.to_csv();
  return kExitOk;
}

int cmd_ablation(const Flags& flags) {
  RunConfig rc = load_config(flags);
  acap::Dataset data = load_dataset(rc);
  acap::AblationReport report = acap::ablation_eval(data, rc.experiment);
  json doc = report.to_json();
  doc["provenance"] = provenance(rc);
  write_json(fs::path(flags.out) / "ablation.json", doc);
  write_file(fs::path(flags.out) / "ablation.csv", report.to_csv());
  std::cout << report.to_csv();
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive spatial aggregation and accident prediction"};
  app.require_subcommand(1);
  Flags flags;
  int (*handler)(const Flags&) = nullptr;

  auto add = [&](const char* name, const char* help, int (*fn)(const Flags&)) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", flags.config, "JSON run configuration");
    sub->add_option("--seed", flags.seed, "root seed; run seeds are seed, seed+1, ...");
    sub->add_option("--out", flags.out, "output directory")->capture_default_str();
    sub->add_option("--aggregation", flags.aggregation, "aggregation to use")
        ->check(CLI::IsMember(acap::kAggregationNames));
    sub->add_option("--method", flags.method, "prediction method")
        ->check(CLI::IsMember(acap::kMethodNames));
    sub->callback([&handler, fn] { handler = fn; });
  };
  add("synth", "generate a synthetic city (accidents, regional features, ground truth)", cmd_synth);
  add("cluster", "fit a spatial aggregation and save it", cmd_cluster);
  add("featurize", "build the sample matrix and write it as CSV", cmd_featurize);
  add("train", "train one model once and write its checkpoint and log", cmd_train);
  add("evaluate", "run every aggregation x method x seed and write the report", cmd_evaluate);
  add("radius", "F1 within growing radii around a center", cmd_radius);
  add("ablation", "ACAP with single feature groups", cmd_ablation);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }
  try {
    return handler(flags);
  } catch (const acap::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}
