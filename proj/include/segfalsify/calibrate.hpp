#pragma once

#include "segfalsify/bounds.hpp"
#include "segfalsify/metrics.hpp"
#include "segfalsify/model.hpp"
#include "segfalsify/perturb.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace segfalsify {

struct CalibrationConfig {
  int grid_points = 16;
  double target_deterioration = 0.01;
  /// Regula falsi steps inside the bracketing grid interval.
  int refine_steps = 8;
  /// Refinement stops once |deterioration - target| <= tolerance * target.
  double refine_tolerance = 0.2;
  std::uint64_t seed = 0;
  ThresholdSet thresholds;

  void validate() const;
};

/// Outcome of sweeping one parameter from neutral towards one hard limit.
struct SideCalibration {
  double bound = 0.0;
  bool saturated = false;  // target never reached; bound is the hard limit
  std::vector<std::pair<double, double>> probes;  // (value, deterioration) in probe order
};

/// Grid sweep from `neutral` to `limit`. Returns the largest grid value with
/// deterioration <= target, interpolated linearly towards the first grid
/// value that exceeds it, then refined inside that bracket.
SideCalibration search_bound(double neutral, double limit, const CalibrationConfig& cfg,
                             const std::function<double(double)>& deterioration_at);

struct ParamCalibration {
  std::string perturbation;
  std::string param;
  ParamBound bound;
  SideCalibration lower;  // empty when neutral == hard_min
  SideCalibration upper;  // empty when neutral == hard_max
  bool has_lower = false;
  bool has_upper = false;
};

struct CalibrationResult {
  ParamBounds bounds;
  std::vector<ParamCalibration> params;
};

/// Seed used for the stochastic perturbations of one sample: depends on the
/// run seed and the sample's content, not its position in the dataset.
std::uint64_t sample_seed(std::uint64_t seed, const Sample& sample);

/// Measures single-perturbation deterioration over a fixed dataset. Baseline
/// IoUs are computed once at construction.
class Calibrator {
 public:
  Calibrator(std::span<const Sample> dataset, Model& model, CalibrationConfig cfg);

  double measure(const PerturbationSpec& spec, const ParamVector& params) const;
  ParamCalibration calibrate_param(const PerturbationSpec& spec, std::size_t param_index) const;
  CalibrationResult calibrate_all(const Registry& registry) const;

  const std::vector<double>& baseline_ious() const { return baseline_; }
  const CalibrationConfig& config() const { return cfg_; }

 private:
  std::span<const Sample> dataset_;
  Model& model_;
  CalibrationConfig cfg_;
  std::vector<double> baseline_;
  std::vector<std::uint64_t> seeds_;
};

}  // namespace segfalsify
