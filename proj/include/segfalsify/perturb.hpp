#pragma once

#include "segfalsify/image.hpp"

#include <Eigen/Core>

#include "json.hpp"

#include <cstdint>
#include <set>
#include <string>
#include <vector>

namespace segfalsify {

enum class ParamKind { continuous, integer };

struct ParamSpec {
  std::string name;
  ParamKind kind = ParamKind::continuous;
  double neutral = 0.0;
  double hard_min = 0.0;
  double hard_max = 0.0;
};

struct PerturbationSpec {
  std::string name;
  std::vector<ParamSpec> params;
  bool geometric = false;

  Eigen::Index dim() const { return static_cast<Eigen::Index>(params.size()); }
};

using ParamVector = Eigen::VectorXd;

/// An image with its label.
struct Sample {
  Image image;
  Mask mask;
};

class UnknownPerturbation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Ordered set of perturbations plus the names disabled for a run.
class Registry {
 public:
  static constexpr std::size_t kSize = 12;

  Registry() = default;
  explicit Registry(std::vector<PerturbationSpec> specs, std::set<std::string> disabled = {});

  const std::vector<PerturbationSpec>& specs() const { return specs_; }
  std::size_t size() const { return specs_.size(); }
  const PerturbationSpec& operator[](std::size_t i) const { return specs_[i]; }

  std::size_t index_of(const std::string& name) const;
  const PerturbationSpec& spec(const std::string& name) const { return specs_[index_of(name)]; }
  bool contains(const std::string& name) const;

  const std::set<std::string>& disabled() const { return disabled_; }
  bool enabled(const std::string& name) const { return !disabled_.contains(name); }
  std::size_t enabled_count() const { return specs_.size() - disabled_.size(); }

  /// Copy with additional names disabled.
  Registry with_disabled(const std::set<std::string>& names) const;

  /// Total number of parameters over all perturbations.
  Eigen::Index param_count() const;

 private:
  std::vector<PerturbationSpec> specs_;
  std::set<std::string> disabled_;
};

/// The built-in twelve perturbations in their fixed order.
const Registry& builtin_registry();

ParamVector neutral_params(const PerturbationSpec& spec);

/// Applies one perturbation. Integer parameters are rounded half away from
/// zero. All randomness is drawn from a generator seeded with `seed`. Only
/// geometric perturbations touch the mask.
Sample apply(const PerturbationSpec& spec, const ParamVector& params, const Image& img,
             const Mask& mask, std::uint64_t seed);

nlohmann::ordered_json registry_to_json(const Registry& registry);
Registry registry_from_json(const nlohmann::ordered_json& doc);

}  // namespace segfalsify
