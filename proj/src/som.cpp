#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "acap/cluster.hpp"
#include "acap/errors.hpp"

namespace acap {

namespace {

int best_matching_unit(const std::vector<std::array<double, 2>>& weights,
                       const std::array<double, 2>& x, double* dist2 = nullptr) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t u = 0; u < weights.size(); ++u) {
    double d0 = weights[u][0] - x[0];
    double d1 = weights[u][1] - x[1];
    double d = d0 * d0 + d1 * d1;
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(u);
    }
  }
  if (dist2 != nullptr) *dist2 = best_d;
  return best;
}

double quantization_error(const std::vector<std::array<double, 2>>& weights,
                          const std::vector<std::array<double, 2>>& inputs) {
  double total = 0.0;
  for (const auto& x : inputs) {
    double d2 = 0.0;
    best_matching_unit(weights, x, &d2);
    total += std::sqrt(d2);
  }
  return total / static_cast<double>(inputs.size());
}

}  // namespace

std::vector<int> SomResult::nonempty_units() const {
  std::vector<int> units(assignment.begin(), assignment.end());
  std::sort(units.begin(), units.end());
  units.erase(std::unique(units.begin(), units.end()), units.end());
  return units;
}

PrototypeAggregation SomResult::to_aggregation() const {
  std::vector<std::array<double, 2>> protos;
  for (int u : nonempty_units()) protos.push_back(weights[static_cast<std::size_t>(u)]);
  return PrototypeAggregation("som", std::move(protos), scaling);
}

SomResult som_train(std::span<const GeoPoint> points, const SomParams& params,
                    std::mt19937_64& rng) {
  if (params.rows < 1 || params.cols < 1) throw DomainError("SOM map must be at least 1x1");
  if (params.epochs < 1) throw DomainError("SOM needs at least one epoch");
  if (points.empty()) throw DomainError("SOM needs at least one input point");
  for (const auto& p : points) validate(p);

  SomResult res;
  res.rows = params.rows;
  res.cols = params.cols;
  res.scaling = CoordinateScaling::fit(points);

  std::vector<std::array<double, 2>> inputs;
  inputs.reserve(points.size());
  for (const auto& p : points) inputs.push_back(res.scaling.apply(p));

  const std::size_t units = static_cast<std::size_t>(params.rows) * static_cast<std::size_t>(params.cols);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  res.weights.resize(units);
  for (auto& w : res.weights) w = {unit(rng), unit(rng)};
  res.initial_quantization_error = quantization_error(res.weights, inputs);

  const double radius0 = std::max(1.0, std::max(params.rows, params.cols) / 2.0);
  const double total_steps = static_cast<double>(params.epochs) * static_cast<double>(inputs.size());
  std::vector<std::size_t> order(inputs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  double step = 0.0;
  for (int epoch = 0; epoch < params.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t idx : order) {
      const auto& x = inputs[idx];
      double frac = step / total_steps;
      double radius = radius0 * std::pow(1.0 / radius0, frac);
      double lr = params.learning_rate_start *
                  std::pow(params.learning_rate_end / params.learning_rate_start, frac);
      int bmu = best_matching_unit(res.weights, x);
      int br = bmu / params.cols;
      int bc = bmu % params.cols;
      double denom = 2.0 * radius * radius;
      for (int r = 0; r < params.rows; ++r) {
        for (int c = 0; c < params.cols; ++c) {
          double g2 = static_cast<double>((r - br) * (r - br) + (c - bc) * (c - bc));
          double h = std::exp(-g2 / denom);
          if (h < 1e-6) continue;
          auto& w = res.weights[static_cast<std::size_t>(r * params.cols + c)];
          w[0] += lr * h * (x[0] - w[0]);
          w[1] += lr * h * (x[1] - w[1]);
        }
      }
      step += 1.0;
    }
  }

  res.assignment.reserve(inputs.size());
  for (const auto& x : inputs) res.assignment.push_back(best_matching_unit(res.weights, x));
  res.final_quantization_error = quantization_error(res.weights, inputs);
  return res;
}

}  // namespace acap
