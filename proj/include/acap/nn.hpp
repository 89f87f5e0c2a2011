#pragma once

#include <Eigen/Dense>
#include <random>
#include <string>
#include <vector>

namespace acap::nn {

/// Activations are stored batch-major: one row per sample.
using Matrix = Eigen::MatrixXd;

enum class Mode { Train, Eval };

/// A named trainable tensor or state buffer.
struct ParamRef {
  std::string name;
  Matrix* value;
};

/// Uniform Glorot initialization for a fan_in x fan_out weight.
Matrix xavier_uniform(Eigen::Index fan_in, Eigen::Index fan_out, std::mt19937_64& rng);

Matrix sigmoid(const Matrix& x);
Matrix tanh(const Matrix& x);

/// Row-wise softmax, numerically stabilized.
Matrix softmax_rows(const Matrix& logits);

/// Fully connected layer y = x W + b; W is in x out, b is 1 x out.
struct Dense {
  Matrix weight;
  Matrix bias;

  Dense() = default;
  Dense(Eigen::Index in, Eigen::Index out, std::mt19937_64& rng);

  Eigen::Index in_dim() const { return weight.rows(); }
  Eigen::Index out_dim() const { return weight.cols(); }

  Matrix forward(const Matrix& x) const;
  /// Accumulates parameter gradients into `grad` and returns dL/dx.
  Matrix backward(const Matrix& x, const Matrix& dy, Dense& grad) const;
  void append_params(const std::string& prefix, std::vector<ParamRef>& out);
};

/// Gated recurrent unit in the Cho et al. formulation:
///
///   z = sigmoid(x Wz + h Uz + bz)
///   r = sigmoid(x Wr + h Ur + br)
///   n = tanh(x Wn + (r * h) Un + bn)
///   h' = z * h + (1 - z) * n
///
/// Gate blocks are stored side by side as [z | r | n].
struct GruLayer {
  Matrix w_input;   // in x 3H
  Matrix w_hidden;  // H x 3H
  Matrix bias;      // 1 x 3H

  /// Per-step tensors stacked time-major: rows [t*B, (t+1)*B) hold step t.
  struct Cache {
    Eigen::Index batch = 0;
    Matrix x, h_prev, z, r, n, rh;
  };

  GruLayer() = default;
  GruLayer(Eigen::Index in, Eigen::Index hidden, std::mt19937_64& rng);

  Eigen::Index in_dim() const { return w_input.rows(); }
  Eigen::Index hidden_dim() const { return w_hidden.rows(); }

  /// Runs the sequence from a zero initial state and returns every hidden state.
  std::vector<Matrix> forward(const std::vector<Matrix>& xs, Cache* cache) const;

  /// Backpropagation through time. `dh` holds dL/dh_t for every step (zero
  /// matrices where the output is unused). Returns dL/dx_t.
  std::vector<Matrix> backward(const Cache& cache, const std::vector<Matrix>& dh,
                               GruLayer& grad) const;
  void append_params(const std::string& prefix, std::vector<ParamRef>& out);
};

/// Batch normalization over the batch dimension with learned scale and shift.
/// Running statistics are an exponential moving average and only change
/// through `commit`.
struct BatchNorm {
  Matrix gamma;
  Matrix beta;
  Matrix running_mean;
  Matrix running_var;
  /// 1x1 flag buffer, nonzero once running statistics have been committed.
  Matrix initialized;
  double momentum = 0.9;
  double epsilon = 1e-5;

  struct Cache {
    Mode mode = Mode::Train;
    Matrix x_hat;
    Matrix inv_std;     // 1 x n
    Matrix batch_mean;  // 1 x n
    Matrix batch_var;   // 1 x n, biased
  };

  BatchNorm() = default;
  explicit BatchNorm(Eigen::Index features);

  bool has_running_stats() const { return initialized(0, 0) != 0.0; }

  /// Train mode normalizes with batch statistics (needs >= 2 rows); eval mode
  /// uses the running statistics and throws StateError before the first commit.
  Matrix forward(const Matrix& x, Mode mode, Cache* cache) const;
  Matrix backward(const Cache& cache, const Matrix& dy, BatchNorm& grad) const;
  /// Folds a train-mode batch into the running statistics.
  void commit(const Cache& cache);

  void append_params(const std::string& prefix, std::vector<ParamRef>& out);
  void append_buffers(const std::string& prefix, std::vector<ParamRef>& out);
};

/// Adam with bias correction.
class Adam {
 public:
  struct Config {
    double learning_rate = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
  };

  Adam(const Config& config, const std::vector<ParamRef>& params);

  void step(const std::vector<ParamRef>& params, const std::vector<ParamRef>& grads);
  long steps() const noexcept { return t_; }

 private:
  Config config_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  long t_ = 0;
};

}  // namespace acap::nn
