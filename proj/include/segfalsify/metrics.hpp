#pragma once

#include "segfalsify/image.hpp"

#include <span>
#include <vector>

namespace segfalsify {

/// Strictly increasing probability thresholds in (0,1).
class ThresholdSet {
 public:
  ThresholdSet() : taus_{0.5, 0.9, 0.99} {}
  explicit ThresholdSet(std::vector<double> taus);

  const std::vector<double>& taus() const { return taus_; }

 private:
  std::vector<double> taus_;
};

/// IoU of the thresholded prediction (strict `> tau`) against the mask,
/// averaged over the thresholds. A threshold whose prediction and mask are
/// both empty contributes 1.
double iou(const ProbMap& pred, const Mask& mask, const ThresholdSet& taus = {});

/// Mean of baseline - perturbed over paired per-image IoUs.
double deterioration(std::span<const double> baseline_ious, std::span<const double> perturbed_ious);

}  // namespace segfalsify
