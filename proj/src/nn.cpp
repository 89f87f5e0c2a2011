#include "acap/nn.hpp"

#include <cmath>

#include "acap/errors.hpp"

namespace acap::nn {

Matrix xavier_uniform(Eigen::Index fan_in, Eigen::Index fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> u(-limit, limit);
  Matrix w(fan_in, fan_out);
  for (Eigen::Index j = 0; j < w.cols(); ++j) {
    for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = u(rng);
  }
  return w;
}

// Vectorized forms; exp overflow saturates to the correct limit.
Matrix sigmoid(const Matrix& x) { return (1.0 + (-x.array()).exp()).inverse().matrix(); }

Matrix tanh(const Matrix& x) { return (1.0 - 2.0 / ((2.0 * x.array()).exp() + 1.0)).matrix(); }

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    double mx = logits.row(i).maxCoeff();
    out.row(i) = (logits.row(i).array() - mx).exp();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

// ---------------------------------------------------------------------------

Dense::Dense(Eigen::Index in, Eigen::Index out, std::mt19937_64& rng)
    : weight(xavier_uniform(in, out, rng)), bias(Matrix::Zero(1, out)) {}

Matrix Dense::forward(const Matrix& x) const {
  if (x.cols() != weight.rows()) {
    throw DomainError("dense layer expects " + std::to_string(weight.rows()) + " inputs, got " +
                      std::to_string(x.cols()));
  }
  Matrix y = x * weight;
  y.rowwise() += bias.row(0);
  return y;
}

Matrix Dense::backward(const Matrix& x, const Matrix& dy, Dense& grad) const {
  grad.weight.noalias() += x.transpose() * dy;
  grad.bias += dy.colwise().sum();
  return dy * weight.transpose();
}

void Dense::append_params(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + ".weight", &weight});
  out.push_back({prefix + ".bias", &bias});
}

// ---------------------------------------------------------------------------

GruLayer::GruLayer(Eigen::Index in, Eigen::Index hidden, std::mt19937_64& rng)
    : w_input(in, 3 * hidden), w_hidden(hidden, 3 * hidden), bias(Matrix::Zero(1, 3 * hidden)) {
  for (Eigen::Index g = 0; g < 3; ++g) {
    w_input.middleCols(g * hidden, hidden) = xavier_uniform(in, hidden, rng);
    w_hidden.middleCols(g * hidden, hidden) = xavier_uniform(hidden, hidden, rng);
  }
}

std::vector<Matrix> GruLayer::forward(const std::vector<Matrix>& xs, Cache* cache) const {
  const Eigen::Index H = hidden_dim();
  std::vector<Matrix> hs;
  hs.reserve(xs.size());
  if (xs.empty()) return hs;
  const Eigen::Index B = xs.front().rows();
  const auto T = static_cast<Eigen::Index>(xs.size());
  Matrix x_all(T * B, in_dim());
  for (Eigen::Index t = 0; t < T; ++t) {
    const Matrix& x = xs[static_cast<std::size_t>(t)];
    if (x.cols() != in_dim() || x.rows() != B) throw DomainError("GRU input shape mismatch");
    x_all.middleRows(t * B, B) = x;
  }
  // Input projections of every step in one product; only the recurrence is sequential.
  Matrix gx_all = x_all * w_input;
  gx_all.rowwise() += bias.row(0);
  if (cache != nullptr) {
    cache->batch = B;
    cache->h_prev.resize(T * B, H);
    cache->z.resize(T * B, H);
    cache->r.resize(T * B, H);
    cache->n.resize(T * B, H);
    cache->rh.resize(T * B, H);
  }
  Matrix h = Matrix::Zero(B, H);
  for (Eigen::Index t = 0; t < T; ++t) {
    auto gx = gx_all.middleRows(t * B, B);
    Matrix gh = h * w_hidden.leftCols(2 * H);
    Matrix z = sigmoid(gx.leftCols(H) + gh.leftCols(H));
    Matrix r = sigmoid(gx.middleCols(H, H) + gh.rightCols(H));
    Matrix rh = r.cwiseProduct(h);
    Matrix n = tanh(gx.rightCols(H) + rh * w_hidden.rightCols(H));
    Matrix h_next = n + z.cwiseProduct(h - n);
    if (cache != nullptr) {
      cache->h_prev.middleRows(t * B, B) = h;
      cache->z.middleRows(t * B, B) = z;
      cache->r.middleRows(t * B, B) = r;
      cache->n.middleRows(t * B, B) = n;
      cache->rh.middleRows(t * B, B) = rh;
    }
    h = std::move(h_next);
    hs.push_back(h);
  }
  if (cache != nullptr) cache->x = std::move(x_all);
  return hs;
}

std::vector<Matrix> GruLayer::backward(const Cache& cache, const std::vector<Matrix>& dh,
                                       GruLayer& grad) const {
  const Eigen::Index H = hidden_dim();
  const Eigen::Index B = cache.batch;
  const Eigen::Index T = B == 0 ? 0 : cache.x.rows() / B;
  std::vector<Matrix> dxs(static_cast<std::size_t>(T));
  if (T == 0) return dxs;
  Matrix da_all(T * B, 3 * H);  // gate pre-activation gradients, stacked like the cache
  Matrix carry = Matrix::Zero(B, H);
  for (Eigen::Index t = T; t-- > 0;) {
    auto z = cache.z.middleRows(t * B, B);
    auto r = cache.r.middleRows(t * B, B);
    auto n = cache.n.middleRows(t * B, B);
    auto h = cache.h_prev.middleRows(t * B, B);
    auto da = da_all.middleRows(t * B, B);
    Matrix dh_t = dh[static_cast<std::size_t>(t)] + carry;

    Matrix dz = (dh_t.array() * (h - n).array()).matrix();
    Matrix dn = (dh_t.array() * (1.0 - z.array())).matrix();
    Matrix dh_prev = dh_t.cwiseProduct(z);

    da.rightCols(H) = (dn.array() * (1.0 - n.array().square())).matrix();
    Matrix d_rh = da.rightCols(H) * w_hidden.rightCols(H).transpose();
    dh_prev += d_rh.cwiseProduct(r);
    Matrix dr = d_rh.cwiseProduct(h);

    da.middleCols(H, H) = (dr.array() * r.array() * (1.0 - r.array())).matrix();
    da.leftCols(H) = (dz.array() * z.array() * (1.0 - z.array())).matrix();
    dh_prev.noalias() += da.leftCols(2 * H) * w_hidden.leftCols(2 * H).transpose();
    carry = std::move(dh_prev);
  }
  grad.w_input.noalias() += cache.x.transpose() * da_all;
  grad.bias += da_all.colwise().sum();
  grad.w_hidden.leftCols(2 * H).noalias() += cache.h_prev.transpose() * da_all.leftCols(2 * H);
  grad.w_hidden.rightCols(H).noalias() += cache.rh.transpose() * da_all.rightCols(H);
  Matrix dx_all = da_all * w_input.transpose();
  for (Eigen::Index t = 0; t < T; ++t) dxs[static_cast<std::size_t>(t)] = dx_all.middleRows(t * B, B);
  return dxs;
}

void GruLayer::append_params(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + ".w_input", &w_input});
  out.push_back({prefix + ".w_hidden", &w_hidden});
  out.push_back({prefix + ".bias", &bias});
}

// ---------------------------------------------------------------------------

BatchNorm::BatchNorm(Eigen::Index features)
    : gamma(Matrix::Ones(1, features)),
      beta(Matrix::Zero(1, features)),
      running_mean(Matrix::Zero(1, features)),
      running_var(Matrix::Ones(1, features)),
      initialized(Matrix::Zero(1, 1)) {}

Matrix BatchNorm::forward(const Matrix& x, Mode mode, Cache* cache) const {
  const Eigen::Index B = x.rows();
  Matrix mean, var;
  if (mode == Mode::Train) {
    if (B < 2) throw DomainError("batch norm in train mode needs at least 2 samples");
    mean = x.colwise().mean();
    Matrix centered = x.rowwise() - mean.row(0);
    var = centered.array().square().colwise().sum().matrix() / static_cast<double>(B);
  } else {
    if (!has_running_stats()) {
      throw StateError("batch norm evaluated before any training batch was committed");
    }
    mean = running_mean;
    var = running_var;
  }
  Matrix inv_std = (var.array() + epsilon).rsqrt().matrix();
  Matrix x_hat = ((x.rowwise() - mean.row(0)).array().rowwise() * inv_std.row(0).array()).matrix();
  Matrix y = (x_hat.array().rowwise() * gamma.row(0).array()).matrix();
  y.rowwise() += beta.row(0);
  if (cache != nullptr) {
    cache->mode = mode;
    cache->x_hat = std::move(x_hat);
    cache->inv_std = std::move(inv_std);
    cache->batch_mean = std::move(mean);
    cache->batch_var = std::move(var);
  }
  return y;
}

Matrix BatchNorm::backward(const Cache& cache, const Matrix& dy, BatchNorm& grad) const {
  grad.gamma += dy.cwiseProduct(cache.x_hat).colwise().sum();
  grad.beta += dy.colwise().sum();
  Matrix dx_hat = (dy.array().rowwise() * gamma.row(0).array()).matrix();
  if (cache.mode == Mode::Eval) {
    return (dx_hat.array().rowwise() * cache.inv_std.row(0).array()).matrix();
  }
  const double B = static_cast<double>(dy.rows());
  Matrix sum_dxh = dx_hat.colwise().sum();
  Matrix sum_dxh_xh = dx_hat.cwiseProduct(cache.x_hat).colwise().sum();
  Matrix inner = B * dx_hat;
  inner.rowwise() -= sum_dxh.row(0);
  inner -= (cache.x_hat.array().rowwise() * sum_dxh_xh.row(0).array()).matrix();
  return (inner.array().rowwise() * (cache.inv_std.row(0).array() / B)).matrix();
}

void BatchNorm::commit(const Cache& cache) {
  if (cache.mode != Mode::Train) return;
  const double B = static_cast<double>(cache.x_hat.rows());
  Matrix unbiased = cache.batch_var * (B / (B - 1.0));
  running_mean = momentum * running_mean + (1.0 - momentum) * cache.batch_mean;
  running_var = momentum * running_var + (1.0 - momentum) * unbiased;
  initialized(0, 0) = 1.0;
}

void BatchNorm::append_params(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + ".gamma", &gamma});
  out.push_back({prefix + ".beta", &beta});
}

void BatchNorm::append_buffers(const std::string& prefix, std::vector<ParamRef>& out) {
  out.push_back({prefix + ".running_mean", &running_mean});
  out.push_back({prefix + ".running_var", &running_var});
  out.push_back({prefix + ".initialized", &initialized});
}

// ---------------------------------------------------------------------------

Adam::Adam(const Config& config, const std::vector<ParamRef>& params) : config_(config) {
  for (const auto& p : params) {
    m_.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
    v_.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
  }
}

void Adam::step(const std::vector<ParamRef>& params, const std::vector<ParamRef>& grads) {
  if (params.size() != m_.size() || grads.size() != m_.size()) {
    throw DomainError("Adam parameter list does not match its state");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Matrix& g = *grads[i].value;
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * g;
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * g.cwiseAbs2();
    params[i].value->array() -=
        config_.learning_rate * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + config_.epsilon);
  }
}

}  // namespace acap::nn
