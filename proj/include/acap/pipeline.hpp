#pragma once

#include <cstdint>
#include <limits>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "acap/cluster.hpp"
#include "acap/event.hpp"
#include "acap/features.hpp"
#include "acap/ingest.hpp"
#include "acap/model.hpp"
#include "json.hpp"

namespace acap {

// ---------------------------------------------------------------------------
// Splits

/// Month-granular chronological split. Validation is the tail of the training
/// months; test follows directly after.
struct SplitSpec {
  int first_month = 0;  // month index of the first study month
  int train_months = 29;
  int test_months = 7;
  double validation_fraction = 0.1;

  void validate() const;
  /// round(train_months * validation_fraction), at least 1.
  int validation_months() const;
  int total_months() const { return train_months + test_months; }

  MonthWindow fit_window() const;         // training months minus validation
  MonthWindow validation_window() const;
  MonthWindow test_window() const;
  /// Every month whose events may feed features or aggregations.
  MonthWindow history_window() const { return {first_month, first_month + train_months}; }

  nlohmann::json to_json() const;
  static SplitSpec from_json(const nlohmann::json& doc);
};

enum class SplitPart { Train, Validation, Test, Outside };

SplitPart split_part(const SplitSpec& spec, int month_index);

TimeSlot time_slot_from_month(int month_index, int day_of_week, int hour);

// ---------------------------------------------------------------------------
// Sampling

/// A labelled spatio-temporal point that becomes one Sample.
struct Anchor {
  GeoPoint location;
  TimeSlot time;
  int label = 0;
  std::string event_id;  // empty for negatives
};

std::vector<Anchor> positive_anchors(std::span<const Event> events);

/// `ratio` negatives per event, drawn separately for each split part so every
/// part keeps the exact ratio. Each negative picks a uniform precision-7 cell
/// of the study area, a uniform point inside it and a uniform (month, weekday,
/// hour) inside the part's months. Draws that hit the (cell, year, month,
/// hour) of a real accident are redrawn. Events outside the study months get
/// no negatives. Throws DomainError when the study area has no cells.
std::vector<Anchor> negative_sample(std::span<const Event> events, int ratio,
                                    const StudyArea& area, const SplitSpec& split,
                                    std::mt19937_64& rng);

struct SplitSamples {
  std::vector<Sample> train;
  std::vector<Sample> validation;
  std::vector<Sample> test;
};

/// Throws DomainError for samples outside the study months.
SplitSamples temporal_split(std::vector<Sample> samples, const SplitSpec& spec);

/// Throws LeakageError unless the parts are chronologically ordered and every
/// history step precedes its label time.
void check_no_leakage(const SplitSamples& split);

// ---------------------------------------------------------------------------
// Sample construction

struct FeatureContext {
  StudyArea area;
  SplitSpec split;
  TemporalLayout layout;
  AccidentVocabulary vocabulary = AccidentVocabulary::accident_atlas();
  RegionalSchema schema = RegionalSchema::osm_default();
  const CellFeatureTable* regional_table = nullptr;
};

struct RegionInfo {
  GeoPoint centroid;
  std::size_t cell_count = 0;
  std::size_t history_events = 0;
  std::vector<double> accident;
  std::vector<double> regional;
};

struct SampleMatrix {
  std::vector<Sample> samples;  // anchor order
  std::map<RegionId, RegionInfo> regions;
  int accident_dim = 0;
  int regional_dim = 0;
};

/// The eight hourly slots before `time`, oldest first.
std::vector<TimeSlot> history_slots(const TimeSlot& time, int length = kHistoryLength);

/// One Sample per anchor. Regions are those of the study-area precision-7
/// cells plus any region an anchor lands in. Accident features use only events
/// from the history window; regional features are min-max normalized across
/// regions; temporal sequences are encoded at the region centroid.
SampleMatrix build_samples(const Aggregation& aggregation, std::span<const Event> events,
                           std::span<const Anchor> anchors, const FeatureContext& context);

// ---------------------------------------------------------------------------
// Metrics

struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
};

Confusion confusion(std::span<const int> predictions, std::span<const int> labels);

/// F1 of the accident class; 0 when there are neither positives nor positive
/// predictions.
double f1_accident(std::span<const int> predictions, std::span<const int> labels);

// ---------------------------------------------------------------------------
// Synthetic city

struct Hotspot {
  GeoPoint center;
  double sigma_m = 250.0;
  double rate = 10.0;           // expected events per active month
  int active_from_month = 0;    // relative to the first study month
  nlohmann::json to_json() const;
};

struct SynthSpec {
  StudyArea area;
  std::vector<Hotspot> hotspots;
  double background_rate = 2.0;  // uniform events per month over the area
  int first_month = 0;
  int months = 36;
  /// Relative weight of each local hour for hotspot events; background events
  /// use a flat profile.
  std::vector<double> hour_profile;
  /// Std-dev of multiplicative noise on the regional counts.
  double feature_noise = 0.3;

  void validate() const;
  nlohmann::json to_json() const;
  static SynthSpec from_json(const nlohmann::json& doc);

  /// Hotspots centred on precision-5 cell borders and corners inside a
  /// Hannover-sized box, one of them emerging only in the test months.
  static SynthSpec straddling_default();
};

struct SynthCity {
  std::vector<Event> events;
  CellFeatureTable features;
  std::vector<Hotspot> hotspots;
  std::vector<int> event_hotspot;  // index into hotspots, -1 for background
  StudyArea area;
};

/// Throws DomainError if the spec produces no events.
SynthCity synth_city(const SynthSpec& spec, std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// Experiments

/// Everything an experiment reads.
struct Dataset {
  std::string city;
  StudyArea area;
  std::vector<Event> events;
  CellFeatureTable regional;
  AccidentVocabulary vocabulary = AccidentVocabulary::accident_atlas();
  RegionalSchema schema = RegionalSchema::osm_default();
};

struct ExperimentConfig {
  std::vector<std::string> aggregations = {"gg", "som", "g1", "g5"};
  std::vector<std::string> methods = {"acap", "dnn", "lr"};
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  GridGrowingParams grid_growing;
  SomParams som;
  int kmeans_max_k = 20;
  int negative_ratio = 3;
  SplitSpec split;
  TrainConfig train;
  LogisticConfig logistic;
  AcapDims acap;  // accident and regional widths are filled from the data
  std::vector<int> dnn_hidden = {512, 256, 64};
  FeatureGroups groups;
  int jobs = 1;
  bool keep_predictions = false;

  void validate() const;
  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& doc);
  /// FNV-1a of the canonical JSON form.
  std::string hash() const;
};

inline const std::vector<std::string> kAggregationNames = {"gg", "som", "g1", "g5", "kmeans",
                                                          "dbscan"};
inline const std::vector<std::string> kMethodNames = {"acap", "dnn", "lr"};

/// Fits the named aggregation on history-window events.
std::unique_ptr<Aggregation> fit_aggregation(const std::string& name, std::span<const Event> events,
                                             const ExperimentConfig& config, std::mt19937_64& rng);

struct PreparedData {
  SampleMatrix matrix;
  SplitSamples split;
  std::size_t region_count = 0;
};

/// Negative sampling, aggregation, feature construction and splitting for one
/// (aggregation, seed) pair.
PreparedData prepare_data(const Dataset& data, const std::string& aggregation,
                          const ExperimentConfig& config, std::uint64_t seed);

struct RunResult {
  std::uint64_t seed = 0;
  double f1 = 0.0;
  std::size_t test_samples = 0;
  std::size_t regions = 0;
  int best_epoch = 0;
  std::vector<int> predictions;  // kept on request
  std::vector<int> labels;
  std::vector<GeoPoint> locations;
};

/// Trains `method` on prepared data and scores the test part.
RunResult run_method(const PreparedData& prepared, const std::string& method,
                     const ExperimentConfig& config, std::uint64_t seed,
                     TrainLog* log = nullptr, std::unique_ptr<Network>* trained = nullptr);

struct ExperimentCell {
  std::string aggregation;
  std::string method;
  std::vector<RunResult> runs;
  double mean_f1() const;
};

struct ExperimentReport {
  std::string city;
  std::string config_hash;
  nlohmann::json config;
  std::vector<ExperimentCell> cells;  // aggregation-major, in config order

  const ExperimentCell& cell(const std::string& aggregation, const std::string& method) const;
  nlohmann::json to_json() const;
  /// Rows are aggregations, columns methods, values mean F1.
  std::string table_csv() const;
};

/// Every aggregation x method x seed. Each (aggregation, seed) pair prepares
/// its data once and trains all methods on it; pairs run on `jobs` threads.
ExperimentReport run_experiment(const Dataset& data, const ExperimentConfig& config);

struct RadiusPoint {
  double radius_m = 0.0;
  std::size_t samples = 0;
  double f1 = 0.0;
};

/// F1 over test samples within each radius of `center`. Throws DomainError for
/// a non-positive radius or a radius containing no samples.
std::vector<RadiusPoint> radius_curve(std::span<const GeoPoint> locations,
                                      std::span<const int> predictions,
                                      std::span<const int> labels, const GeoPoint& center,
                                      std::span<const double> radii);

struct RadiusSeries {
  std::string aggregation;
  std::string method;
  std::vector<RadiusPoint> points;  // mean F1 over seeds, sample counts of the first seed
};

struct RadiusReport {
  GeoPoint center;
  std::vector<RadiusSeries> series;
  nlohmann::json to_json() const;
  std::string to_csv() const;
};

RadiusReport radius_eval(const Dataset& data, const ExperimentConfig& config,
                         const GeoPoint& center, std::span<const double> radii);

struct AblationEntry {
  std::string groups;
  std::vector<double> f1;
  double mean_f1 = 0.0;
  double ratio = 0.0;  // mean F1 relative to the full model
};

struct AblationReport {
  std::string aggregation;
  std::vector<AblationEntry> entries;  // full, regional, temporal, accident
  const AblationEntry& entry(const std::string& groups) const;
  nlohmann::json to_json() const;
  std::string to_csv() const;
};

/// ACAP with all groups and with each single group, on the first configured
/// aggregation. Disabled embeddings are zeroed.
AblationReport ablation_eval(const Dataset& data, const ExperimentConfig& config);

}  // namespace acap
