#pragma once

#include "segfalsify/perturb.hpp"

#include "json.hpp"

#include <map>
#include <set>
#include <string>
#include <vector>

namespace segfalsify {

struct ParamBound {
  double neutral = 0.0;
  double calibrated_min = 0.0;
  double calibrated_max = 0.0;
};

/// Calibrated limits for every parameter of every perturbation, in schema
/// order, plus the perturbations marked disabled when the bounds were made.
struct ParamBounds {
  std::map<std::string, std::vector<ParamBound>> entries;
  std::set<std::string> disabled;

  const std::vector<ParamBound>& at(const std::string& name) const;

  /// Throws unless every registry parameter has a bound satisfying
  /// hard_min <= calibrated_min <= neutral <= calibrated_max <= hard_max.
  void validate(const Registry& registry) const;
};

/// Calibrated range equal to the full hard range.
ParamBounds hard_bounds(const Registry& registry);

/// Calibrated range collapsed onto the neutral value (every chain is identity).
ParamBounds neutral_bounds(const Registry& registry);

nlohmann::ordered_json bounds_to_json(const ParamBounds& bounds, const Registry& registry);
ParamBounds bounds_from_json(const nlohmann::ordered_json& doc, const Registry& registry);

ParamBounds load_bounds(const std::string& path, const Registry& registry);
void save_bounds(const std::string& path, const ParamBounds& bounds, const Registry& registry);

}  // namespace segfalsify
