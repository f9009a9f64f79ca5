#include "segfalsify/calibrate.hpp"

#include "segfalsify/rng.hpp"

#include <cmath>
#include <cstring>

namespace segfalsify {

void CalibrationConfig::validate() const {
  if (grid_points < 2) throw std::invalid_argument("calibration grid needs at least 2 points");
  if (!(target_deterioration > 0.0 && target_deterioration < 1.0)) {
    throw std::invalid_argument("target deterioration must lie in (0,1)");
  }
  if (refine_steps < 0) throw std::invalid_argument("refine steps must be non-negative");
}

SideCalibration search_bound(double neutral, double limit, const CalibrationConfig& cfg,
                             const std::function<double(double)>& deterioration_at) {
  cfg.validate();
  SideCalibration side;
  side.bound = limit;
  side.saturated = true;
  if (limit == neutral) return side;

  const double target = cfg.target_deterioration;
  auto probe = [&](double v) {
    const double d = deterioration_at(v);
    if (!std::isfinite(d)) {
      throw std::runtime_error("non-finite deterioration at parameter value " + std::to_string(v));
    }
    side.probes.emplace_back(v, d);
    return d;
  };

  // Bracket: lo is the last grid value within target, hi the first beyond it.
  double lo_v = neutral, lo_d = 0.0, hi_v = 0.0, hi_d = 0.0;
  bool bracketed = false;
  for (int j = 1; j < cfg.grid_points; ++j) {
    const double v = j == cfg.grid_points - 1
                         ? limit
                         : neutral + (limit - neutral) * j / (cfg.grid_points - 1);
    const double d = probe(v);
    if (d > target) {
      hi_v = v;
      hi_d = d;
      bracketed = true;
      break;
    }
    lo_v = v;
    lo_d = d;
  }
  if (!bracketed) return side;

  side.saturated = false;
  // Illinois variant of regula falsi on g(v) = d(v) - target.
  double g_lo = lo_d - target;
  double g_hi = hi_d - target;
  double x = lo_v - g_lo * (hi_v - lo_v) / (g_hi - g_lo);
  int last_side = 0;
  for (int step = 0; step < cfg.refine_steps; ++step) {
    const double d = probe(x);
    if (std::abs(d - target) <= cfg.refine_tolerance * target) {
      side.bound = x;
      return side;
    }
    if (d <= target) {
      lo_v = x;
      g_lo = d - target;
      if (last_side == -1) g_hi *= 0.5;
      last_side = -1;
    } else {
      hi_v = x;
      g_hi = d - target;
      if (last_side == 1) g_lo *= 0.5;
      last_side = 1;
    }
    x = lo_v - g_lo * (hi_v - lo_v) / (g_hi - g_lo);
  }
  side.bound = cfg.refine_steps == 0 ? x : lo_v;
  return side;
}

std::uint64_t sample_seed(std::uint64_t seed, const Sample& sample) {
  // FNV-1a over dimensions, pixel bytes and mask bits.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&](const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  };
  const int dims[2] = {sample.image.width(), sample.image.height()};
  feed(dims, sizeof(dims));
  feed(sample.image.pixels().data(), sizeof(float) * sample.image.pixels().size());
  for (Eigen::Index i = 0; i < sample.mask.size(); ++i) {
    const unsigned char bit = sample.mask.data()[i] ? 1 : 0;
    feed(&bit, 1);
  }
  return derive_seed(seed, h);
}

Calibrator::Calibrator(std::span<const Sample> dataset, Model& model, CalibrationConfig cfg)
    : dataset_(dataset), model_(model), cfg_(std::move(cfg)) {
  cfg_.validate();
  if (dataset_.empty()) throw std::invalid_argument("calibration dataset is empty");
  baseline_.reserve(dataset_.size());
  seeds_.reserve(dataset_.size());
  for (const Sample& s : dataset_) {
    baseline_.push_back(iou(model_.predict(s.image), s.mask, cfg_.thresholds));
    seeds_.push_back(sample_seed(cfg_.seed, s));
  }
}

double Calibrator::measure(const PerturbationSpec& spec, const ParamVector& params) const {
  std::vector<double> perturbed;
  perturbed.reserve(dataset_.size());
  for (std::size_t i = 0; i < dataset_.size(); ++i) {
    const Sample out = apply(spec, params, dataset_[i].image, dataset_[i].mask, seeds_[i]);
    perturbed.push_back(iou(model_.predict(out.image), out.mask, cfg_.thresholds));
  }
  const double d = deterioration(baseline_, perturbed);
  if (!std::isfinite(d)) throw std::runtime_error("non-finite deterioration for " + spec.name);
  return d;
}

ParamCalibration Calibrator::calibrate_param(const PerturbationSpec& spec,
                                             std::size_t param_index) const {
  if (param_index >= spec.params.size()) throw std::out_of_range("parameter index out of range");
  const ParamSpec& p = spec.params[param_index];
  const ParamVector base = neutral_params(spec);
  auto at = [&](double v) {
    ParamVector params = base;
    params(static_cast<Eigen::Index>(param_index)) = v;
    return measure(spec, params);
  };

  ParamCalibration result;
  result.perturbation = spec.name;
  result.param = p.name;
  result.bound = {p.neutral, p.neutral, p.neutral};
  if (p.neutral < p.hard_max) {
    result.upper = search_bound(p.neutral, p.hard_max, cfg_, at);
    result.bound.calibrated_max = result.upper.bound;
    result.has_upper = true;
  }
  if (p.neutral > p.hard_min) {
    result.lower = search_bound(p.neutral, p.hard_min, cfg_, at);
    result.bound.calibrated_min = result.lower.bound;
    result.has_lower = true;
  }
  return result;
}

CalibrationResult Calibrator::calibrate_all(const Registry& registry) const {
  CalibrationResult result;
  for (const auto& spec : registry.specs()) {
    auto& bs = result.bounds.entries[spec.name];
    for (std::size_t i = 0; i < spec.params.size(); ++i) {
      ParamCalibration pc = calibrate_param(spec, i);
      bs.push_back(pc.bound);
      result.params.push_back(std::move(pc));
    }
  }
  result.bounds.disabled = registry.disabled();
  return result;
}

}  // namespace segfalsify
