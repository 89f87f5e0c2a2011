#include "acap/model.hpp"

#include <algorithm>
#include <cmath>

#include "acap/errors.hpp"

namespace acap {

using nn::Matrix;

SampleBatch make_batch(std::span<const Sample> samples, std::span<const std::size_t> indices) {
  SampleBatch batch;
  const auto B = static_cast<Eigen::Index>(indices.size());
  if (B == 0) return batch;
  const Sample& first = samples[indices.front()];
  const std::size_t T = first.temporal_seq.size();
  const auto dt = T == 0 ? Eigen::Index{0} : static_cast<Eigen::Index>(first.temporal_seq[0].size());
  const auto da = static_cast<Eigen::Index>(first.accident.size());
  const auto dr = static_cast<Eigen::Index>(first.regional.size());
  batch.temporal.assign(T, Matrix(B, dt));
  batch.accident.resize(B, da);
  batch.regional.resize(B, dr);
  batch.labels.reserve(indices.size());
  for (Eigen::Index i = 0; i < B; ++i) {
    const Sample& s = samples[indices[static_cast<std::size_t>(i)]];
    if (s.temporal_seq.size() != T || static_cast<Eigen::Index>(s.accident.size()) != da ||
        static_cast<Eigen::Index>(s.regional.size()) != dr) {
      throw DomainError("samples in a batch must share feature dimensions");
    }
    for (std::size_t t = 0; t < T; ++t) {
      if (static_cast<Eigen::Index>(s.temporal_seq[t].size()) != dt) {
        throw DomainError("temporal feature width mismatch");
      }
      for (Eigen::Index j = 0; j < dt; ++j) batch.temporal[t](i, j) = s.temporal_seq[t][j];
    }
    for (Eigen::Index j = 0; j < da; ++j) batch.accident(i, j) = s.accident[j];
    for (Eigen::Index j = 0; j < dr; ++j) batch.regional(i, j) = s.regional[j];
    batch.labels.push_back(s.label);
  }
  return batch;
}

SampleBatch make_batch(std::span<const Sample> samples) {
  std::vector<std::size_t> all(samples.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return make_batch(samples, all);
}

Matrix flatten_features(const SampleBatch& batch) {
  const Eigen::Index B = batch.size();
  Eigen::Index width = batch.accident.cols() + batch.regional.cols();
  for (const Matrix& m : batch.temporal) width += m.cols();
  Matrix out(B, width);
  Eigen::Index col = 0;
  for (const Matrix& m : batch.temporal) {
    out.middleCols(col, m.cols()) = m;
    col += m.cols();
  }
  out.middleCols(col, batch.accident.cols()) = batch.accident;
  col += batch.accident.cols();
  out.middleCols(col, batch.regional.cols()) = batch.regional;
  return out;
}

std::string FeatureGroups::name() const {
  std::string out;
  auto add = [&](bool on, const char* label) {
    if (!on) return;
    if (!out.empty()) out += "+";
    out += label;
  };
  add(temporal, "temporal");
  add(accident, "accident");
  add(regional, "regional");
  return out.empty() ? "none" : out;
}

// ---------------------------------------------------------------------------

double cross_entropy(std::span<const double> probs, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= probs.size()) {
    throw DomainError("label outside the class range");
  }
  return -std::log(std::max(probs[static_cast<std::size_t>(label)], kProbabilityFloor));
}

double mean_cross_entropy(const Matrix& probs, std::span<const int> labels) {
  if (static_cast<std::size_t>(probs.rows()) != labels.size()) {
    throw DomainError("probability rows and labels differ in length");
  }
  if (labels.empty()) return 0.0;
  double sum = 0.0;
  std::vector<double> row(static_cast<std::size_t>(probs.cols()));
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    for (Eigen::Index j = 0; j < probs.cols(); ++j) row[static_cast<std::size_t>(j)] = probs(i, j);
    sum += cross_entropy(row, labels[static_cast<std::size_t>(i)]);
  }
  return sum / static_cast<double>(labels.size());
}

std::vector<int> predict_labels(const Matrix& probs) {
  std::vector<int> out(static_cast<std::size_t>(probs.rows()));
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    out[static_cast<std::size_t>(i)] = probs(i, 1) > probs(i, 0) ? 1 : 0;
  }
  return out;
}

namespace {

/// dL/dlogits of the mean clamped cross-entropy. Rows whose probability hit
/// the floor have a constant loss and therefore zero gradient.
Matrix softmax_xent_grad(const Matrix& probs, std::span<const int> labels) {
  const double inv_b = 1.0 / static_cast<double>(probs.rows());
  Matrix d = probs;
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (probs(i, y) < kProbabilityFloor) {
      d.row(i).setZero();
      continue;
    }
    d(i, y) -= 1.0;
  }
  return d * inv_b;
}

Matrix relu(const Matrix& x) { return x.cwiseMax(0.0); }

Matrix relu_mask(const Matrix& activated) {
  return (activated.array() > 0.0).cast<double>().matrix();
}

Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, std::mt19937_64& rng) {
  std::bernoulli_distribution keep(1.0 - rate);
  const double scale = 1.0 / (1.0 - rate);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = keep(rng) ? scale : 0.0;
  }
  return m;
}

}  // namespace

// ---------------------------------------------------------------------------

ClassifierHead::ClassifierHead(Eigen::Index in, const std::vector<int>& hidden, int classes,
                               std::mt19937_64& rng) {
  if (in <= 0 || classes < 2) throw ConfigError("classifier head needs inputs and >= 2 classes");
  Eigen::Index prev = in;
  for (std::size_t j = 0; j < hidden.size(); ++j) {
    if (hidden[j] <= 0) throw ConfigError("hidden layer widths must be positive");
    layers_.emplace_back(prev, hidden[j], rng);
    if (j >= 1) norms_.emplace_back(hidden[j]);
    prev = hidden[j];
  }
  layers_.emplace_back(prev, classes, rng);
}

Matrix ClassifierHead::forward(const Matrix& x, nn::Mode mode, Cache* cache) const {
  const std::size_t hidden = layers_.size() - 1;
  if (cache != nullptr) *cache = Cache{};
  Matrix cur = x;
  for (std::size_t j = 0; j < hidden; ++j) {
    Matrix a = relu(layers_[j].forward(cur));
    Matrix out;
    if (j >= 1) {
      nn::BatchNorm::Cache bn;
      out = norms_[j - 1].forward(a, mode, cache != nullptr ? &bn : nullptr);
      if (cache != nullptr) cache->norms.push_back(std::move(bn));
    } else {
      out = a;
    }
    if (cache != nullptr) {
      cache->inputs.push_back(std::move(cur));
      cache->activations.push_back(std::move(a));
    }
    cur = std::move(out);
  }
  Matrix probs = nn::softmax_rows(layers_.back().forward(cur));
  if (cache != nullptr) {
    cache->inputs.push_back(std::move(cur));
    cache->probs = probs;
  }
  return probs;
}

Matrix ClassifierHead::backward(const Cache& cache, const Matrix& dlogits,
                                ClassifierHead& grad) const {
  const std::size_t hidden = layers_.size() - 1;
  Matrix d = layers_.back().backward(cache.inputs[hidden], dlogits, grad.layers_.back());
  for (std::size_t j = hidden; j-- > 0;) {
    if (j >= 1) d = norms_[j - 1].backward(cache.norms[j - 1], d, grad.norms_[j - 1]);
    d = d.cwiseProduct(relu_mask(cache.activations[j]));
    d = layers_[j].backward(cache.inputs[j], d, grad.layers_[j]);
  }
  return d;
}

void ClassifierHead::commit(const Cache& cache) {
  for (std::size_t j = 0; j < norms_.size(); ++j) norms_[j].commit(cache.norms[j]);
}

void ClassifierHead::append_params(const std::string& prefix, std::vector<nn::ParamRef>& out) {
  for (std::size_t j = 0; j < layers_.size(); ++j) {
    layers_[j].append_params(prefix + ".dense" + std::to_string(j), out);
    if (j >= 1 && j - 1 < norms_.size()) {
      norms_[j - 1].append_params(prefix + ".norm" + std::to_string(j), out);
    }
  }
}

void ClassifierHead::append_buffers(const std::string& prefix, std::vector<nn::ParamRef>& out) {
  for (std::size_t j = 0; j < norms_.size(); ++j) {
    norms_[j].append_buffers(prefix + ".norm" + std::to_string(j + 1), out);
  }
}

// ---------------------------------------------------------------------------

std::unique_ptr<Network> Network::zeros_like() const {
  auto out = clone();
  out->set_zero();
  return out;
}

void Network::set_zero() {
  for (auto& p : params()) p.value->setZero();
}

std::size_t Network::parameter_count() {
  std::size_t n = 0;
  for (auto& p : params()) n += static_cast<std::size_t>(p.value->size());
  return n;
}

// ---------------------------------------------------------------------------

nlohmann::json AcapDims::to_json() const {
  return {{"temporal_dim", temporal_dim}, {"history", history},
          {"gru_hidden", gru_hidden},     {"gru_layers", gru_layers},
          {"accident_dim", accident_dim}, {"regional_dim", regional_dim},
          {"embed_dim", embed_dim},       {"head", head},
          {"classes", classes},           {"dropout", dropout}};
}

AcapDims AcapDims::from_json(const nlohmann::json& doc) {
  AcapDims d;
  d.temporal_dim = doc.value("temporal_dim", d.temporal_dim);
  d.history = doc.value("history", d.history);
  d.gru_hidden = doc.value("gru_hidden", d.gru_hidden);
  d.gru_layers = doc.value("gru_layers", d.gru_layers);
  d.accident_dim = doc.value("accident_dim", d.accident_dim);
  d.regional_dim = doc.value("regional_dim", d.regional_dim);
  d.embed_dim = doc.value("embed_dim", d.embed_dim);
  d.head = doc.value("head", d.head);
  d.classes = doc.value("classes", d.classes);
  d.dropout = doc.value("dropout", d.dropout);
  return d;
}

struct AcapNetwork::Cache {
  std::vector<nn::GruLayer::Cache> gru;
  std::vector<std::vector<Matrix>> masks;  // masks[l] applies to inputs of layer l + 1
  Matrix accident_embedding;
  Matrix regional_embedding;
  ClassifierHead::Cache head;
};

AcapNetwork::AcapNetwork(const AcapDims& dims, std::mt19937_64& rng, FeatureGroups groups)
    : dims_(dims), groups_(groups) {
  if (dims.temporal_dim <= 0 || dims.history <= 0 || dims.gru_hidden <= 0 || dims.gru_layers <= 0 ||
      dims.accident_dim <= 0 || dims.regional_dim <= 0 || dims.embed_dim <= 0) {
    throw ConfigError("ACAP dimensions must be positive");
  }
  if (dims.dropout < 0.0 || dims.dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
  Eigen::Index in = dims.temporal_dim;
  for (int l = 0; l < dims.gru_layers; ++l) {
    gru_.emplace_back(in, dims.gru_hidden, rng);
    in = dims.gru_hidden;
  }
  accident_embed_ = nn::Dense(dims.accident_dim, dims.embed_dim, rng);
  regional_embed_ = nn::Dense(dims.regional_dim, dims.embed_dim, rng);
  head_ = ClassifierHead(dims.gru_hidden + 2 * dims.embed_dim, dims.head, dims.classes, rng);
}

std::vector<nn::ParamRef> AcapNetwork::params() {
  std::vector<nn::ParamRef> out;
  for (std::size_t l = 0; l < gru_.size(); ++l) gru_[l].append_params("gru" + std::to_string(l), out);
  accident_embed_.append_params("accident_embed", out);
  regional_embed_.append_params("regional_embed", out);
  head_.append_params("head", out);
  return out;
}

std::vector<nn::ParamRef> AcapNetwork::buffers() {
  std::vector<nn::ParamRef> out;
  head_.append_buffers("head", out);
  return out;
}

Matrix AcapNetwork::temporal_embedding(const std::vector<Matrix>& seq,
                                       const ForwardOptions& options) const {
  std::vector<Matrix> cur = seq;
  const bool drop = options.mode == nn::Mode::Train && options.dropout_rng != nullptr &&
                    dims_.dropout > 0.0;
  for (std::size_t l = 0; l < gru_.size(); ++l) {
    if (l > 0 && drop) {
      for (Matrix& h : cur) {
        h = h.cwiseProduct(dropout_mask(h.rows(), h.cols(), dims_.dropout, *options.dropout_rng));
      }
    }
    cur = gru_[l].forward(cur, nullptr);
  }
  return cur.back();
}

Matrix AcapNetwork::dense_embedding(const Matrix& x, bool accident) const {
  return nn::sigmoid((accident ? accident_embed_ : regional_embed_).forward(x));
}

Matrix AcapNetwork::run(const SampleBatch& batch, const ForwardOptions& options,
                        Cache* cache) const {
  const Eigen::Index B = batch.size();
  if (B == 0) return Matrix(0, dims_.classes);
  if (static_cast<int>(batch.temporal.size()) != dims_.history) {
    throw DomainError("temporal history length does not match the network");
  }
  const bool drop = options.mode == nn::Mode::Train && options.dropout_rng != nullptr &&
                    dims_.dropout > 0.0;
  const Eigen::Index H = dims_.gru_hidden;
  const Eigen::Index E = dims_.embed_dim;
  Matrix concat = Matrix::Zero(B, H + 2 * E);

  if (groups_.temporal) {
    std::vector<Matrix> cur = batch.temporal;
    if (cache != nullptr) {
      cache->gru.resize(gru_.size());
      cache->masks.assign(gru_.size() > 0 ? gru_.size() - 1 : 0, {});
    }
    for (std::size_t l = 0; l < gru_.size(); ++l) {
      if (l > 0 && drop) {
        for (Matrix& h : cur) {
          Matrix m = dropout_mask(h.rows(), h.cols(), dims_.dropout, *options.dropout_rng);
          h = h.cwiseProduct(m);
          if (cache != nullptr) cache->masks[l - 1].push_back(std::move(m));
        }
      }
      cur = gru_[l].forward(cur, cache != nullptr ? &cache->gru[l] : nullptr);
    }
    concat.leftCols(H) = cur.back();
  }
  if (groups_.accident) {
    Matrix e = dense_embedding(batch.accident, true);
    concat.middleCols(H, E) = e;
    if (cache != nullptr) cache->accident_embedding = std::move(e);
  }
  if (groups_.regional) {
    Matrix e = dense_embedding(batch.regional, false);
    concat.rightCols(E) = e;
    if (cache != nullptr) cache->regional_embedding = std::move(e);
  }
  return head_.forward(concat, options.mode, cache != nullptr ? &cache->head : nullptr);
}

Matrix AcapNetwork::forward(const SampleBatch& batch, const ForwardOptions& options) const {
  return run(batch, options, nullptr);
}

double AcapNetwork::forward_backward(const SampleBatch& batch, const ForwardOptions& options,
                                     Network& grad_base, bool commit_statistics) {
  auto* grad = dynamic_cast<AcapNetwork*>(&grad_base);
  if (grad == nullptr) throw DomainError("gradient network must be an ACAP network");
  Cache cache;
  Matrix probs = run(batch, options, &cache);
  const double loss = mean_cross_entropy(probs, batch.labels);
  Matrix dconcat = head_.backward(cache.head, softmax_xent_grad(probs, batch.labels), grad->head_);

  const Eigen::Index H = dims_.gru_hidden;
  const Eigen::Index E = dims_.embed_dim;
  if (groups_.temporal) {
    const std::size_t T = batch.temporal.size();
    const Eigen::Index B = batch.size();
    std::vector<Matrix> dh(T, Matrix::Zero(B, H));
    dh.back() = dconcat.leftCols(H);
    for (std::size_t l = gru_.size(); l-- > 0;) {
      std::vector<Matrix> dx = gru_[l].backward(cache.gru[l], dh, grad->gru_[l]);
      if (l == 0) break;
      if (!cache.masks.empty() && !cache.masks[l - 1].empty()) {
        for (std::size_t t = 0; t < T; ++t) dx[t] = dx[t].cwiseProduct(cache.masks[l - 1][t]);
      }
      dh = std::move(dx);
    }
  }
  if (groups_.accident) {
    const Matrix& s = cache.accident_embedding;
    Matrix dpre = (dconcat.middleCols(H, E).array() * s.array() * (1.0 - s.array())).matrix();
    accident_embed_.backward(batch.accident, dpre, grad->accident_embed_);
  }
  if (groups_.regional) {
    const Matrix& s = cache.regional_embedding;
    Matrix dpre = (dconcat.rightCols(E).array() * s.array() * (1.0 - s.array())).matrix();
    regional_embed_.backward(batch.regional, dpre, grad->regional_embed_);
  }
  if (commit_statistics && options.mode == nn::Mode::Train) head_.commit(cache.head);
  return loss;
}

nlohmann::json AcapNetwork::config_json() const {
  return {{"dims", dims_.to_json()},
          {"groups",
           {{"temporal", groups_.temporal},
            {"accident", groups_.accident},
            {"regional", groups_.regional}}}};
}

// ---------------------------------------------------------------------------

DnnNetwork::DnnNetwork(int input_dim, std::mt19937_64& rng, std::vector<int> hidden)
    : input_dim_(input_dim), hidden_(std::move(hidden)) {
  if (input_dim <= 0) throw ConfigError("DNN input dimension must be positive");
  head_ = ClassifierHead(input_dim, hidden_, 2, rng);
}

std::vector<nn::ParamRef> DnnNetwork::params() {
  std::vector<nn::ParamRef> out;
  head_.append_params("head", out);
  return out;
}

std::vector<nn::ParamRef> DnnNetwork::buffers() {
  std::vector<nn::ParamRef> out;
  head_.append_buffers("head", out);
  return out;
}

Matrix DnnNetwork::forward(const SampleBatch& batch, const ForwardOptions& options) const {
  if (batch.size() == 0) return Matrix(0, 2);
  return head_.forward(flatten_features(batch), options.mode, nullptr);
}

double DnnNetwork::forward_backward(const SampleBatch& batch, const ForwardOptions& options,
                                    Network& grad_base, bool commit_statistics) {
  auto* grad = dynamic_cast<DnnNetwork*>(&grad_base);
  if (grad == nullptr) throw DomainError("gradient network must be a DNN");
  ClassifierHead::Cache cache;
  Matrix probs = head_.forward(flatten_features(batch), options.mode, &cache);
  const double loss = mean_cross_entropy(probs, batch.labels);
  head_.backward(cache, softmax_xent_grad(probs, batch.labels), grad->head_);
  if (commit_statistics && options.mode == nn::Mode::Train) head_.commit(cache);
  return loss;
}

nlohmann::json DnnNetwork::config_json() const {
  return {{"input_dim", input_dim_}, {"hidden", hidden_}};
}

}  // namespace acap
