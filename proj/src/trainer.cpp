#include <algorithm>
#include <numeric>

#include "acap/errors.hpp"
#include "acap/model.hpp"

namespace acap {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw ConfigError("Adam epsilon must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (epochs <= 0) throw ConfigError("epochs must be positive");
  if (patience <= 0) throw ConfigError("patience must be positive");
  if (patience > epochs) throw ConfigError("patience must not exceed the epoch budget");
  if (batch_size < 2) throw ConfigError("batch size must be at least 2");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"learning_rate", learning_rate}, {"beta1", beta1},   {"beta2", beta2},
          {"epsilon", epsilon},             {"dropout", dropout}, {"epochs", epochs},
          {"patience", patience},           {"batch_size", batch_size}, {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& doc) {
  TrainConfig c;
  try {
    c.learning_rate = doc.value("learning_rate", c.learning_rate);
    c.beta1 = doc.value("beta1", c.beta1);
    c.beta2 = doc.value("beta2", c.beta2);
    c.epsilon = doc.value("epsilon", c.epsilon);
    c.dropout = doc.value("dropout", c.dropout);
    c.epochs = doc.value("epochs", c.epochs);
    c.patience = doc.value("patience", c.patience);
    c.batch_size = doc.value("batch_size", c.batch_size);
    c.seed = doc.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid training configuration: ") + e.what());
  }
  c.validate();
  return c;
}

bool EarlyStopping::update(int epoch, double validation_loss) {
  if (validation_loss < best_loss_) {
    best_loss_ = validation_loss;
    best_epoch_ = epoch;
    since_best_ = 0;
    return true;
  }
  ++since_best_;
  return false;
}

nlohmann::json TrainLog::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& e : epochs) {
    rows.push_back({{"epoch", e.epoch},
                    {"train_loss", e.train_loss},
                    {"validation_loss", e.validation_loss}});
  }
  return {{"epochs", rows},
          {"best_epoch", best_epoch},
          {"best_validation_loss", best_validation_loss},
          {"early_stopped", early_stopped}};
}

std::vector<std::vector<std::size_t>> make_batches(std::vector<std::size_t> order,
                                                   int batch_size) {
  if (batch_size < 1) throw ConfigError("batch size must be positive");
  std::vector<std::vector<std::size_t>> out;
  const auto bs = static_cast<std::size_t>(batch_size);
  for (std::size_t i = 0; i < order.size(); i += bs) {
    const std::size_t end = std::min(order.size(), i + bs);
    if (end - i == 1 && !out.empty()) {
      out.back().push_back(order[i]);
    } else {
      out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                       order.begin() + static_cast<std::ptrdiff_t>(end));
    }
  }
  return out;
}

namespace {

constexpr std::size_t kEvalChunk = 2048;

void copy_state(Network& dst, Network& src) {
  auto dp = dst.params();
  auto sp = src.params();
  for (std::size_t i = 0; i < dp.size(); ++i) *dp[i].value = *sp[i].value;
  auto db = dst.buffers();
  auto sb = src.buffers();
  for (std::size_t i = 0; i < db.size(); ++i) *db[i].value = *sb[i].value;
}

}  // namespace

double evaluate_loss(const Network& net, std::span<const Sample> samples) {
  if (samples.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t begin = 0; begin < samples.size(); begin += kEvalChunk) {
    auto chunk = samples.subspan(begin, std::min(kEvalChunk, samples.size() - begin));
    SampleBatch batch = make_batch(chunk);
    total += mean_cross_entropy(net.predict_proba(batch), batch.labels) *
             static_cast<double>(chunk.size());
  }
  return total / static_cast<double>(samples.size());
}

std::vector<int> predict(const Network& net, std::span<const Sample> samples) {
  std::vector<int> out;
  out.reserve(samples.size());
  for (std::size_t begin = 0; begin < samples.size(); begin += kEvalChunk) {
    auto chunk = samples.subspan(begin, std::min(kEvalChunk, samples.size() - begin));
    auto labels = predict_labels(net.predict_proba(make_batch(chunk)));
    out.insert(out.end(), labels.begin(), labels.end());
  }
  return out;
}

TrainLog train_network(Network& net, std::span<const Sample> train,
                       std::span<const Sample> validation, const TrainConfig& config) {
  config.validate();
  if (train.size() < 2) throw DomainError("training needs at least 2 samples");
  if (validation.empty()) throw DomainError("training needs a non-empty validation set");

  std::seed_seq shuffle_seed{config.seed, std::uint64_t{0x5348}};
  std::seed_seq dropout_seed{config.seed, std::uint64_t{0x4452}};
  std::mt19937_64 shuffle_rng(shuffle_seed);
  std::mt19937_64 dropout_rng(dropout_seed);

  auto grad = net.zeros_like();
  nn::Adam adam({config.learning_rate, config.beta1, config.beta2, config.epsilon}, net.params());
  EarlyStopping stopper(config.patience);
  std::unique_ptr<Network> best = net.clone();
  TrainLog log;

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    for (const auto& idx : make_batches(order, config.batch_size)) {
      SampleBatch batch = make_batch(train, idx);
      grad->set_zero();
      const double loss =
          net.forward_backward(batch, {nn::Mode::Train, &dropout_rng}, *grad, true);
      adam.step(net.params(), grad->params());
      loss_sum += loss * static_cast<double>(idx.size());
    }
    EpochRecord rec{epoch, loss_sum / static_cast<double>(train.size()),
                    evaluate_loss(net, validation)};
    log.epochs.push_back(rec);
    if (stopper.update(epoch, rec.validation_loss)) copy_state(*best, net);
    if (stopper.should_stop()) {
      log.early_stopped = epoch < config.epochs;
      break;
    }
  }
  copy_state(net, *best);
  log.best_epoch = stopper.best_epoch();
  log.best_validation_loss = stopper.best_loss();
  return log;
}

}  // namespace acap
