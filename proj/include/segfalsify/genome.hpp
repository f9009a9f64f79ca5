#pragma once

#include "segfalsify/bounds.hpp"
#include "segfalsify/perturb.hpp"

#include <Eigen/Core>

#include "json.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace segfalsify {

inline constexpr int kDefaultChainLength = 6;

/// Offsets of each perturbation's parameters inside the genome.
///
/// A genome is a point of the unit box laid out as
///   [ one selection key per registry entry | normalised parameters of every
///     registry entry, in registry order ]
/// Parameters of perturbations that are not selected stay in the vector
/// unused, so the dimension never changes.
class GenomeLayout {
 public:
  explicit GenomeLayout(const Registry& registry);

  Eigen::Index dim() const { return dim_; }
  Eigen::Index key_count() const { return keys_; }
  Eigen::Index param_offset(std::size_t perturbation) const { return offsets_[perturbation]; }

 private:
  Eigen::Index keys_ = 0;
  Eigen::Index dim_ = 0;
  std::vector<Eigen::Index> offsets_;
};

struct Genome {
  Eigen::VectorXd values;
  std::uint64_t seed = 0;

  auto selection_keys(const GenomeLayout& layout) const { return values.head(layout.key_count()); }
  auto param_block(const GenomeLayout& layout) const {
    return values.tail(layout.dim() - layout.key_count());
  }
};

struct ChainLink {
  std::string name;
  ParamVector params;
};

using Chain = std::vector<ChainLink>;

/// Random-key decoding: the `chain_length` enabled perturbations with the
/// largest keys, in descending key order (ties go to the lower registry
/// index). Each selected perturbation's normalised parameters are mapped
/// affinely onto its calibrated range.
Chain decode(const Eigen::Ref<const Eigen::VectorXd>& genome, const Registry& registry,
             const ParamBounds& bounds, int chain_length = kDefaultChainLength);

/// Applies the chain left to right; link i draws from derive_seed(seed, i).
Sample apply_chain(const Chain& chain, const Registry& registry, const Image& img,
                   const Mask& mask, std::uint64_t seed);

nlohmann::ordered_json chain_to_json(const Chain& chain, const Registry& registry);
Chain chain_from_json(const nlohmann::ordered_json& doc, const Registry& registry);

}  // namespace segfalsify
