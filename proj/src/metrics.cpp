#include "segfalsify/metrics.hpp"

#include <stdexcept>

namespace segfalsify {

ThresholdSet::ThresholdSet(std::vector<double> taus) : taus_(std::move(taus)) {
  if (taus_.empty()) throw std::invalid_argument("threshold set is empty");
  for (std::size_t i = 0; i < taus_.size(); ++i) {
    if (!(taus_[i] > 0.0 && taus_[i] < 1.0)) {
      throw std::invalid_argument("thresholds must lie in (0,1)");
    }
    if (i > 0 && !(taus_[i] > taus_[i - 1])) {
      throw std::invalid_argument("thresholds must be strictly increasing");
    }
  }
}

double iou(const ProbMap& pred, const Mask& mask, const ThresholdSet& taus) {
  if (!same_shape(pred, mask)) {
    throw DimensionError("prediction is " + std::to_string(pred.cols()) + "x" +
                         std::to_string(pred.rows()) + " but mask is " +
                         std::to_string(mask.cols()) + "x" + std::to_string(mask.rows()));
  }
  double total = 0.0;
  for (double tau : taus.taus()) {
    const auto predicted = (pred.cast<double>() > tau);
    const Eigen::Index inter = (predicted && mask).count();
    const Eigen::Index uni = (predicted || mask).count();
    total += uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
  }
  return total / static_cast<double>(taus.taus().size());
}

double deterioration(std::span<const double> baseline_ious, std::span<const double> perturbed_ious) {
  if (baseline_ious.empty()) throw std::invalid_argument("deterioration of an empty image set");
  if (baseline_ious.size() != perturbed_ious.size()) {
    throw std::invalid_argument("baseline and perturbed IoU lists differ in length");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < baseline_ious.size(); ++i) sum += baseline_ious[i] - perturbed_ious[i];
  return sum / static_cast<double>(baseline_ious.size());
}

}  // namespace segfalsify
