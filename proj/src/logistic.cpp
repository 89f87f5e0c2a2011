#include <cmath>

#include "acap/errors.hpp"
#include "acap/model.hpp"

namespace acap {

namespace {

Eigen::VectorXd logistic_vec(const Eigen::VectorXd& z) {
  return z.unaryExpr([](double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
}

}  // namespace

void LogisticRegression::fit(const nn::Matrix& x, std::span<const int> labels,
                             const LogisticConfig& config) {
  if (x.rows() == 0) throw DomainError("logistic regression needs at least one sample");
  if (static_cast<std::size_t>(x.rows()) != labels.size()) {
    throw DomainError("feature rows and labels differ in length");
  }
  if (!(config.learning_rate > 0.0) || config.max_iterations <= 0) {
    throw ConfigError("logistic regression needs a positive learning rate and iteration count");
  }
  const double n = static_cast<double>(x.rows());
  Eigen::VectorXd y(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) y(i) = labels[static_cast<std::size_t>(i)] == 1;

  weights_ = Eigen::VectorXd::Zero(x.cols());
  intercept_ = 0.0;
  iterations_ = 0;
  for (int it = 0; it < config.max_iterations; ++it) {
    Eigen::VectorXd residual = logistic_vec(((x * weights_).array() + intercept_).matrix()) - y;
    Eigen::VectorXd gw = x.transpose() * residual / n;
    const double gb = residual.sum() / n;
    ++iterations_;
    if (gw.squaredNorm() + gb * gb < config.gradient_tolerance * config.gradient_tolerance) break;
    weights_ -= config.learning_rate * gw;
    intercept_ -= config.learning_rate * gb;
  }
}

Eigen::VectorXd LogisticRegression::predict_proba(const nn::Matrix& x) const {
  if (x.cols() != weights_.size()) throw StateError("logistic regression is not fitted for this width");
  return logistic_vec(((x * weights_).array() + intercept_).matrix());
}

std::vector<int> LogisticRegression::predict(const nn::Matrix& x) const {
  Eigen::VectorXd p = predict_proba(x);
  std::vector<int> out(static_cast<std::size_t>(p.size()));
  for (Eigen::Index i = 0; i < p.size(); ++i) out[static_cast<std::size_t>(i)] = p(i) > 0.5 ? 1 : 0;
  return out;
}

nlohmann::json LogisticRegression::to_json() const {
  return {{"weights", std::vector<double>(weights_.data(), weights_.data() + weights_.size())},
          {"intercept", intercept_},
          {"iterations", iterations_}};
}

}  // namespace acap
