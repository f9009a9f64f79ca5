#include "segfalsify/genome.hpp"

#include "segfalsify/rng.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>

namespace segfalsify {

// ---------------------------------------------------------------------------
// ParamBounds

const std::vector<ParamBound>& ParamBounds::at(const std::string& name) const {
  const auto it = entries.find(name);
  if (it == entries.end()) throw std::out_of_range("no bounds for perturbation: " + name);
  return it->second;
}

void ParamBounds::validate(const Registry& registry) const {
  for (const auto& spec : registry.specs()) {
    const auto& bs = at(spec.name);
    if (bs.size() != spec.params.size()) {
      throw std::invalid_argument("bounds for " + spec.name + " do not match its parameter schema");
    }
    for (std::size_t i = 0; i < bs.size(); ++i) {
      const ParamSpec& p = spec.params[i];
      const ParamBound& b = bs[i];
      if (!(p.hard_min <= b.calibrated_min && b.calibrated_min <= b.neutral &&
            b.neutral <= b.calibrated_max && b.calibrated_max <= p.hard_max) ||
          b.neutral != p.neutral) {
        throw std::invalid_argument("bounds for " + spec.name + "." + p.name +
                                    " violate hard_min <= min <= neutral <= max <= hard_max");
      }
    }
  }
}

ParamBounds hard_bounds(const Registry& registry) {
  ParamBounds bounds;
  for (const auto& spec : registry.specs()) {
    auto& bs = bounds.entries[spec.name];
    for (const auto& p : spec.params) bs.push_back({p.neutral, p.hard_min, p.hard_max});
  }
  bounds.disabled = registry.disabled();
  return bounds;
}

ParamBounds neutral_bounds(const Registry& registry) {
  ParamBounds bounds;
  for (const auto& spec : registry.specs()) {
    auto& bs = bounds.entries[spec.name];
    for (const auto& p : spec.params) bs.push_back({p.neutral, p.neutral, p.neutral});
  }
  bounds.disabled = registry.disabled();
  return bounds;
}

nlohmann::ordered_json bounds_to_json(const ParamBounds& bounds, const Registry& registry) {
  nlohmann::ordered_json doc;
  nlohmann::ordered_json table = nlohmann::ordered_json::object();
  for (const auto& spec : registry.specs()) {
    const auto& bs = bounds.at(spec.name);
    nlohmann::ordered_json entry = nlohmann::ordered_json::object();
    for (std::size_t i = 0; i < spec.params.size(); ++i) {
      entry[spec.params[i].name] = {{"neutral", bs[i].neutral},
                                    {"calibrated_min", bs[i].calibrated_min},
                                    {"calibrated_max", bs[i].calibrated_max}};
    }
    table[spec.name] = std::move(entry);
  }
  doc["bounds"] = std::move(table);
  doc["disabled"] = nlohmann::ordered_json::array();
  for (const auto& name : bounds.disabled) doc["disabled"].push_back(name);
  return doc;
}

ParamBounds bounds_from_json(const nlohmann::ordered_json& doc, const Registry& registry) {
  ParamBounds bounds;
  const auto& table = doc.at("bounds");
  for (const auto& spec : registry.specs()) {
    if (!table.contains(spec.name)) throw std::invalid_argument("bounds file lacks " + spec.name);
    const auto& entry = table.at(spec.name);
    auto& bs = bounds.entries[spec.name];
    for (const auto& p : spec.params) {
      if (!entry.contains(p.name)) {
        throw std::invalid_argument("bounds file lacks " + spec.name + "." + p.name);
      }
      const auto& b = entry.at(p.name);
      bs.push_back({b.at("neutral").get<double>(), b.at("calibrated_min").get<double>(),
                    b.at("calibrated_max").get<double>()});
    }
  }
  if (doc.contains("disabled")) {
    for (const auto& name : doc.at("disabled")) bounds.disabled.insert(name.get<std::string>());
  }
  bounds.validate(registry);
  return bounds;
}

ParamBounds load_bounds(const std::string& path, const Registry& registry) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open bounds file " + path);
  return bounds_from_json(nlohmann::ordered_json::parse(in), registry);
}

void save_bounds(const std::string& path, const ParamBounds& bounds, const Registry& registry) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write bounds file " + path);
  out << bounds_to_json(bounds, registry).dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Genome

GenomeLayout::GenomeLayout(const Registry& registry)
    : keys_(static_cast<Eigen::Index>(registry.size())) {
  Eigen::Index offset = keys_;
  for (const auto& spec : registry.specs()) {
    offsets_.push_back(offset);
    offset += spec.dim();
  }
  dim_ = offset;
}

Chain decode(const Eigen::Ref<const Eigen::VectorXd>& genome, const Registry& registry,
             const ParamBounds& bounds, int chain_length) {
  const GenomeLayout layout(registry);
  if (genome.size() != layout.dim()) {
    throw std::invalid_argument("genome has dimension " + std::to_string(genome.size()) +
                                ", registry needs " + std::to_string(layout.dim()));
  }
  if (!genome.allFinite() || (genome.array() < 0.0).any() || (genome.array() > 1.0).any()) {
    throw std::invalid_argument("genome coordinates must lie in [0,1]");
  }
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < registry.size(); ++i) {
    if (registry.enabled(registry[i].name)) candidates.push_back(i);
  }
  if (chain_length < 0 || static_cast<std::size_t>(chain_length) > candidates.size()) {
    throw std::invalid_argument("chain length " + std::to_string(chain_length) + " exceeds the " +
                                std::to_string(candidates.size()) + " enabled perturbations");
  }
  std::stable_sort(candidates.begin(), candidates.end(), [&](std::size_t a, std::size_t b) {
    return genome(static_cast<Eigen::Index>(a)) > genome(static_cast<Eigen::Index>(b));
  });

  Chain chain;
  chain.reserve(chain_length);
  for (int k = 0; k < chain_length; ++k) {
    const std::size_t index = candidates[k];
    const PerturbationSpec& spec = registry[index];
    const auto& bs = bounds.at(spec.name);
    const auto normalised = genome.segment(layout.param_offset(index), spec.dim());
    ParamVector params(spec.dim());
    for (Eigen::Index i = 0; i < spec.dim(); ++i) {
      const ParamBound& b = bs[i];
      const double t = normalised(i);
      params(i) = std::clamp((1.0 - t) * b.calibrated_min + t * b.calibrated_max,
                             b.calibrated_min, b.calibrated_max);
    }
    chain.push_back({spec.name, std::move(params)});
  }
  return chain;
}

Sample apply_chain(const Chain& chain, const Registry& registry, const Image& img,
                   const Mask& mask, std::uint64_t seed) {
  Sample current{img, mask};
  for (std::size_t i = 0; i < chain.size(); ++i) {
    current = apply(registry.spec(chain[i].name), chain[i].params, current.image, current.mask,
                    derive_seed(seed, i));
  }
  return current;
}

nlohmann::ordered_json chain_to_json(const Chain& chain, const Registry& registry) {
  nlohmann::ordered_json doc = nlohmann::ordered_json::array();
  for (const auto& link : chain) {
    const PerturbationSpec& spec = registry.spec(link.name);
    nlohmann::ordered_json params = nlohmann::ordered_json::object();
    for (Eigen::Index i = 0; i < spec.dim(); ++i) params[spec.params[i].name] = link.params(i);
    doc.push_back({{"name", link.name}, {"params", std::move(params)}});
  }
  return doc;
}

Chain chain_from_json(const nlohmann::ordered_json& doc, const Registry& registry) {
  Chain chain;
  std::set<std::string> seen;
  for (const auto& entry : doc) {
    ChainLink link;
    link.name = entry.at("name").get<std::string>();
    if (!seen.insert(link.name).second) {
      throw std::invalid_argument("chain repeats perturbation " + link.name);
    }
    const PerturbationSpec& spec = registry.spec(link.name);
    link.params.resize(spec.dim());
    const auto& params = entry.at("params");
    for (Eigen::Index i = 0; i < spec.dim(); ++i) {
      link.params(i) = params.at(spec.params[i].name).get<double>();
    }
    chain.push_back(std::move(link));
  }
  return chain;
}

}  // namespace segfalsify
