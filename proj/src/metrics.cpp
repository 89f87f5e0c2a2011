#include "acap/errors.hpp"
#include "acap/pipeline.hpp"

namespace acap {

Confusion confusion(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) {
    throw DomainError("predictions and labels differ in length");
  }
  Confusion c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool p = predictions[i] == 1;
    const bool y = labels[i] == 1;
    if (p && y) ++c.tp;
    else if (p) ++c.fp;
    else if (y) ++c.fn;
    else ++c.tn;
  }
  return c;
}

double f1_accident(std::span<const int> predictions, std::span<const int> labels) {
  const Confusion c = confusion(predictions, labels);
  const double denom = 2.0 * static_cast<double>(c.tp) + static_cast<double>(c.fp + c.fn);
  return denom == 0.0 ? 0.0 : 2.0 * static_cast<double>(c.tp) / denom;
}

std::vector<RadiusPoint> radius_curve(std::span<const GeoPoint> locations,
                                      std::span<const int> predictions,
                                      std::span<const int> labels, const GeoPoint& center,
                                      std::span<const double> radii) {
  if (locations.size() != predictions.size() || labels.size() != predictions.size()) {
    throw DomainError("locations, predictions and labels differ in length");
  }
  std::vector<double> dist(locations.size());
  for (std::size_t i = 0; i < locations.size(); ++i) dist[i] = haversine(center, locations[i]);
  std::vector<RadiusPoint> out;
  for (double r : radii) {
    if (!(r > 0.0)) throw DomainError("radius must be positive");
    std::vector<int> p, y;
    for (std::size_t i = 0; i < dist.size(); ++i) {
      if (dist[i] <= r) {
        p.push_back(predictions[i]);
        y.push_back(labels[i]);
      }
    }
    if (p.empty()) {
      throw DomainError("no test samples within " + std::to_string(r) + " m of the center");
    }
    out.push_back({r, p.size(), f1_accident(p, y)});
  }
  return out;
}

}  // namespace acap
