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
#include "acap/nn.hpp"
#include "json.hpp"

namespace acap {

inline constexpr int kHistoryLength = 8;

/// One prediction instance: a region at a time slot with its features.
struct Sample {
  RegionId region;
  TimeSlot time;
  GeoPoint location;  // anchor location (event or negative point)
  std::vector<TimeSlot> history;                   // slots of temporal_seq, oldest first
  std::vector<std::vector<double>> temporal_seq;  // oldest first
  std::vector<double> accident;
  std::vector<double> regional;
  int label = 0;  // 1 = accident
};

/// Column-stacked features of a set of samples.
struct SampleBatch {
  std::vector<nn::Matrix> temporal;  // one B x d_t matrix per history step
  nn::Matrix accident;
  nn::Matrix regional;
  std::vector<int> labels;

  Eigen::Index size() const { return static_cast<Eigen::Index>(labels.size()); }
};

SampleBatch make_batch(std::span<const Sample> samples, std::span<const std::size_t> indices);
SampleBatch make_batch(std::span<const Sample> samples);

/// Flattened history ++ accident ++ regional features, one row per sample.
nn::Matrix flatten_features(const SampleBatch& batch);

/// Which embeddings reach the classifier head. Disabled groups are replaced
/// by zero vectors.
struct FeatureGroups {
  bool temporal = true;
  bool accident = true;
  bool regional = true;

  std::string name() const;
};

// ---------------------------------------------------------------------------
// Loss

inline constexpr double kProbabilityFloor = 1e-12;

/// -log p[label], with p clamped below at kProbabilityFloor.
double cross_entropy(std::span<const double> probs, int label);

/// Mean cross-entropy over rows of `probs`.
double mean_cross_entropy(const nn::Matrix& probs, std::span<const int> labels);

/// argmax of the two-class probabilities; ties go to the non-accident class.
std::vector<int> predict_labels(const nn::Matrix& probs);

// ---------------------------------------------------------------------------
// Networks

/// Fully connected stack with ReLU on every hidden layer, batch norm after
/// every hidden layer but the first, and a softmax output.
class ClassifierHead {
 public:
  struct Cache {
    std::vector<nn::Matrix> inputs;       // input of each dense layer
    std::vector<nn::Matrix> activations;  // post-ReLU output of each hidden layer
    std::vector<nn::BatchNorm::Cache> norms;
    nn::Matrix probs;
  };

  ClassifierHead() = default;
  ClassifierHead(Eigen::Index in, const std::vector<int>& hidden, int classes, std::mt19937_64& rng);

  nn::Matrix forward(const nn::Matrix& x, nn::Mode mode, Cache* cache) const;
  /// `dlogits` is dL/d(pre-softmax). Returns dL/dx.
  nn::Matrix backward(const Cache& cache, const nn::Matrix& dlogits, ClassifierHead& grad) const;
  void commit(const Cache& cache);
  Eigen::Index in_dim() const { return layers_.front().in_dim(); }

  void append_params(const std::string& prefix, std::vector<nn::ParamRef>& out);
  void append_buffers(const std::string& prefix, std::vector<nn::ParamRef>& out);

 private:
  std::vector<nn::Dense> layers_;
  std::vector<nn::BatchNorm> norms_;  // norms_[i] follows hidden layer i + 1
};

struct ForwardOptions {
  nn::Mode mode = nn::Mode::Eval;
  /// Source of dropout masks; dropout is applied only in train mode with a
  /// generator present.
  std::mt19937_64* dropout_rng = nullptr;
};

/// Common interface of the neural predictors (ACAP and the DNN baseline).
class Network {
 public:
  virtual ~Network() = default;

  virtual std::string kind() const = 0;
  virtual std::unique_ptr<Network> clone() const = 0;

  /// Trainable tensors in a fixed order.
  virtual std::vector<nn::ParamRef> params() = 0;
  /// Non-trainable state (batch-norm running statistics).
  virtual std::vector<nn::ParamRef> buffers() = 0;

  /// Class probabilities, B x 2.
  virtual nn::Matrix forward(const SampleBatch& batch, const ForwardOptions& options) const = 0;

  /// Mean cross-entropy of the batch; gradients are accumulated into `grad`,
  /// which must be a network of the same kind and shape. With
  /// `commit_statistics`, train-mode batch statistics update the running
  /// averages.
  virtual double forward_backward(const SampleBatch& batch, const ForwardOptions& options,
                                  Network& grad, bool commit_statistics) = 0;

  virtual nlohmann::json config_json() const = 0;

  /// Zero-valued copy used as a gradient accumulator.
  std::unique_ptr<Network> zeros_like() const;
  void set_zero();
  std::size_t parameter_count();
  nn::Matrix predict_proba(const SampleBatch& batch) const {
    return forward(batch, {nn::Mode::Eval, nullptr});
  }
};

struct AcapDims {
  int temporal_dim = 36;
  int history = kHistoryLength;
  int gru_hidden = 128;
  int gru_layers = 2;
  int accident_dim = 0;
  int regional_dim = 0;
  int embed_dim = 128;
  std::vector<int> head = {512, 256, 64};
  int classes = 2;
  double dropout = 0.2;

  nlohmann::json to_json() const;
  static AcapDims from_json(const nlohmann::json& doc);
};

/// Stacked GRU over the temporal history, sigmoid dense embeddings of the
/// accident and regional vectors, and a classifier head on their
/// concatenation. Dropout sits between GRU layers.
class AcapNetwork final : public Network {
 public:
  AcapNetwork(const AcapDims& dims, std::mt19937_64& rng, FeatureGroups groups = {});

  std::string kind() const override { return "acap"; }
  std::unique_ptr<Network> clone() const override { return std::make_unique<AcapNetwork>(*this); }
  std::vector<nn::ParamRef> params() override;
  std::vector<nn::ParamRef> buffers() override;
  nn::Matrix forward(const SampleBatch& batch, const ForwardOptions& options) const override;
  double forward_backward(const SampleBatch& batch, const ForwardOptions& options, Network& grad,
                          bool commit_statistics) override;
  nlohmann::json config_json() const override;

  const AcapDims& dims() const noexcept { return dims_; }
  const FeatureGroups& groups() const noexcept { return groups_; }

  /// Final hidden state of the last GRU layer, B x gru_hidden.
  nn::Matrix temporal_embedding(const std::vector<nn::Matrix>& seq,
                                const ForwardOptions& options) const;
  /// sigmoid(x W + b) through the accident (true) or regional (false) embedder.
  nn::Matrix dense_embedding(const nn::Matrix& x, bool accident) const;

  std::vector<nn::GruLayer>& gru() noexcept { return gru_; }
  nn::Dense& accident_embedder() noexcept { return accident_embed_; }
  nn::Dense& regional_embedder() noexcept { return regional_embed_; }

 private:
  struct Cache;
  nn::Matrix run(const SampleBatch& batch, const ForwardOptions& options, Cache* cache) const;

  AcapDims dims_;
  FeatureGroups groups_;
  std::vector<nn::GruLayer> gru_;
  nn::Dense accident_embed_;
  nn::Dense regional_embed_;
  ClassifierHead head_;
};

/// Classifier head applied directly to the flattened raw features.
class DnnNetwork final : public Network {
 public:
  DnnNetwork(int input_dim, std::mt19937_64& rng, std::vector<int> hidden = {512, 256, 64});

  std::string kind() const override { return "dnn"; }
  std::unique_ptr<Network> clone() const override { return std::make_unique<DnnNetwork>(*this); }
  std::vector<nn::ParamRef> params() override;
  std::vector<nn::ParamRef> buffers() override;
  nn::Matrix forward(const SampleBatch& batch, const ForwardOptions& options) const override;
  double forward_backward(const SampleBatch& batch, const ForwardOptions& options, Network& grad,
                          bool commit_statistics) override;
  nlohmann::json config_json() const override;

 private:
  int input_dim_;
  std::vector<int> hidden_;
  ClassifierHead head_;
};

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double dropout = 0.2;
  int epochs = 60;
  int patience = 15;
  int batch_size = 64;
  std::uint64_t seed = 0;

  /// Throws ConfigError unless every value is positive and patience <= epochs.
  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& doc);
};

/// Tracks the best validation loss and counts epochs without improvement.
class EarlyStopping {
 public:
  explicit EarlyStopping(int patience) : patience_(patience) {}

  /// Records an epoch result; returns true if it is a new best.
  bool update(int epoch, double validation_loss);
  bool should_stop() const noexcept { return since_best_ >= patience_; }
  int best_epoch() const noexcept { return best_epoch_; }
  double best_loss() const noexcept { return best_loss_; }

 private:
  int patience_;
  int best_epoch_ = 0;
  int since_best_ = 0;
  double best_loss_ = std::numeric_limits<double>::infinity();
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double validation_loss = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_validation_loss = 0.0;
  bool early_stopped = false;

  nlohmann::json to_json() const;
};

/// Splits `count` shuffled indices into batches of `batch_size`; a trailing
/// single sample joins the previous batch so batch norm always sees >= 2 rows.
std::vector<std::vector<std::size_t>> make_batches(std::vector<std::size_t> order,
                                                   int batch_size);

/// Mini-batch Adam with early stopping on validation loss. On return `net`
/// holds the parameters of the best validation epoch.
TrainLog train_network(Network& net, std::span<const Sample> train,
                       std::span<const Sample> validation, const TrainConfig& config);

/// Mean cross-entropy in eval mode.
double evaluate_loss(const Network& net, std::span<const Sample> samples);

std::vector<int> predict(const Network& net, std::span<const Sample> samples);

// ---------------------------------------------------------------------------
// Logistic regression baseline

struct LogisticConfig {
  double learning_rate = 0.5;
  int max_iterations = 3000;
  double gradient_tolerance = 1e-10;
};

/// Full-batch gradient descent on the mean logistic loss.
class LogisticRegression {
 public:
  void fit(const nn::Matrix& x, std::span<const int> labels, const LogisticConfig& config = {});
  Eigen::VectorXd predict_proba(const nn::Matrix& x) const;
  /// 1 where the accident probability exceeds 0.5.
  std::vector<int> predict(const nn::Matrix& x) const;

  const Eigen::VectorXd& weights() const noexcept { return weights_; }
  double intercept() const noexcept { return intercept_; }
  int iterations() const noexcept { return iterations_; }

  nlohmann::json to_json() const;

 private:
  Eigen::VectorXd weights_;
  double intercept_ = 0.0;
  int iterations_ = 0;
};

// ---------------------------------------------------------------------------
// Checkpoints

/// JSON tensor dump: format tag, version, model config and every parameter and
/// buffer with its shape and row-major values.
nlohmann::json save_checkpoint(Network& net);

/// Rebuilds a network from a checkpoint; values round-trip bit-exactly.
std::unique_ptr<Network> load_checkpoint(const nlohmann::json& doc);

}  // namespace acap
