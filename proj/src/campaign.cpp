#include "segfalsify/campaign.hpp"

#include "segfalsify/calibrate.hpp"
#include "segfalsify/rng.hpp"

#include <algorithm>
#include <filesystem>
#include <numeric>
#include <random>

namespace segfalsify {

ChainObjective::ChainObjective(std::vector<const Sample*> images, Model& model,
                               const Registry& registry, const ParamBounds& bounds,
                               const FalsifyConfig& cfg)
    : images_(std::move(images)), model_(model), registry_(registry), bounds_(bounds), cfg_(cfg),
      layout_(registry) {
  if (images_.empty()) throw std::invalid_argument("falsification needs at least one image");
  bounds_.validate(registry_);
  seeds_.reserve(images_.size());
  for (const Sample* s : images_) seeds_.push_back(sample_seed(cfg_.perturbation_seed, *s));
  if (cfg_.cache_baseline) baseline_ = baselines();
}

std::vector<double> ChainObjective::baselines() const {
  std::vector<double> out;
  out.reserve(images_.size());
  for (const Sample* s : images_) out.push_back(iou(model_.predict(s->image), s->mask, cfg_.thresholds));
  return out;
}

double ChainObjective::mean_baseline() const {
  const auto b = cfg_.cache_baseline ? baseline_ : baselines();
  return std::accumulate(b.begin(), b.end(), 0.0) / static_cast<double>(b.size());
}

Chain ChainObjective::decode(const Eigen::VectorXd& genome) const {
  return segfalsify::decode(genome, registry_, bounds_, cfg_.chain_length);
}

double ChainObjective::evaluate_chain(const Chain& chain) const {
  const std::vector<double> base = cfg_.cache_baseline ? baseline_ : baselines();
  std::vector<double> perturbed;
  perturbed.reserve(images_.size());
  for (std::size_t i = 0; i < images_.size(); ++i) {
    const Sample out = apply_chain(chain, registry_, images_[i]->image, images_[i]->mask, seeds_[i]);
    perturbed.push_back(iou(model_.predict(out.image), out.mask, cfg_.thresholds));
  }
  return deterioration(base, perturbed);
}

double ChainObjective::operator()(const Eigen::VectorXd& genome) const {
  return evaluate_chain(decode(genome));
}

namespace {

std::vector<const Sample*> choose_subset(const std::vector<const Sample*>& images, int cluster_id,
                                         const FalsifyConfig& cfg) {
  if (cfg.subsample <= 0 || static_cast<std::size_t>(cfg.subsample) >= images.size()) return images;
  std::vector<std::size_t> order(images.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(derive_seed(cfg.subsample_seed, static_cast<std::uint64_t>(cluster_id)));
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(static_cast<std::size_t>(cfg.subsample));
  std::sort(order.begin(), order.end());
  std::vector<const Sample*> subset;
  for (std::size_t i : order) subset.push_back(images[i]);
  return subset;
}

std::string trace_path(const FalsifyConfig& cfg, int cluster_id, std::string& file_name) {
  file_name = "trace_cluster_" + std::to_string(cluster_id) + ".csv";
  return (std::filesystem::path(cfg.trace_dir) / file_name).string();
}

}  // namespace

ClusterReport falsify_cluster(int cluster_id, const std::vector<const Sample*>& images, Model& model,
                              const Registry& registry, const ParamBounds& bounds,
                              const FalsifyConfig& cfg) {
  ClusterReport report;
  report.id = cluster_id;
  report.size = images.size();
  report.disabled.assign(registry.disabled().begin(), registry.disabled().end());

  const auto subset = choose_subset(images, cluster_id, cfg);
  report.evaluated_images = subset.size();
  const ChainObjective objective(subset, model, registry, bounds, cfg);
  report.mean_baseline_iou = objective.mean_baseline();

  const Objective fn = [&](const Eigen::VectorXd& g) { return objective(g); };
  const std::uint64_t seed = derive_seed(cfg.de.rng_seed, static_cast<std::uint64_t>(cluster_id));
  try {
    if (cfg.method == SearchMethod::random) {
      report.result = random_search(fn, objective.dim(), cfg.de.budget, seed);
    } else {
      DEConfig de = cfg.de;
      de.rng_seed = seed;
      report.result = optimize(fn, objective.dim(), de);
    }
  } catch (const EvaluationError& e) {
    report.ok = false;
    report.error = e.what();
    report.result = e.partial();
  }

  report.evaluations = report.result.evaluation_count;
  if (report.result.evaluation_count > 0) {
    report.best_deterioration = report.result.best_value;
    report.best_genome = report.result.best_genome;
    report.best_chain = objective.decode(report.best_genome);
  }
  if (!cfg.trace_dir.empty()) {
    const std::string path = trace_path(cfg, cluster_id, report.trace_file);
    write_trace_csv(path, report.result);
  }
  return report;
}

ClusterMap single_cluster(const Dataset& dataset) {
  ClusterMap map;
  auto& all = map[0];
  all.resize(dataset.size());
  std::iota(all.begin(), all.end(), 0);
  return map;
}

ClusterMap clusters_from_assignments(const Dataset& dataset,
                                     const std::vector<std::pair<std::string, int>>& rows) {
  std::map<std::string, int> by_id(rows.begin(), rows.end());
  if (by_id.size() != rows.size()) throw std::invalid_argument("assignment lists an image twice");
  ClusterMap map;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto it = by_id.find(dataset.ids[i]);
    if (it == by_id.end()) throw std::invalid_argument("image " + dataset.ids[i] + " has no cluster");
    map[it->second].push_back(i);
  }
  for (const auto& [id, cluster] : by_id) {
    (void)cluster;
    dataset.index_of(id);
  }
  return map;
}

std::set<std::string> DisableRules::for_cluster(int id) const {
  std::set<std::string> out = everywhere;
  if (const auto it = per_cluster.find(id); it != per_cluster.end()) {
    out.insert(it->second.begin(), it->second.end());
  }
  return out;
}

void add_disable_rule(DisableRules& rules, const std::string& text) {
  const auto at = text.find('@');
  const std::string name = text.substr(0, at);
  if (name.empty()) throw std::invalid_argument("disable rule without a perturbation name: " + text);
  if (at == std::string::npos) {
    rules.everywhere.insert(name);
    return;
  }
  const std::string list = text.substr(at + 1);
  bool any = false;
  for (std::size_t begin = 0; begin <= list.size();) {
    const std::size_t comma = std::min(list.find(',', begin), list.size());
    const std::string item = list.substr(begin, comma - begin);
    begin = comma + 1;
    std::size_t used = 0;
    int id = -1;
    try {
      id = std::stoi(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size() || id < 0) {
      throw std::invalid_argument("bad cluster id '" + item + "' in disable rule " + text);
    }
    rules.per_cluster[id].insert(name);
    any = true;
  }
  if (!any) throw std::invalid_argument("disable rule lists no clusters: " + text);
}

UsageMatrix usage_matrix(const Registry& registry, const std::vector<ClusterReport>& clusters) {
  UsageMatrix usage;
  for (const auto& spec : registry.specs()) usage.perturbations.push_back(spec.name);
  usage.positions = Eigen::MatrixXi::Zero(static_cast<Eigen::Index>(registry.size()),
                                          static_cast<Eigen::Index>(clusters.size()));
  for (std::size_t c = 0; c < clusters.size(); ++c) {
    usage.clusters.push_back(clusters[c].id);
    for (std::size_t k = 0; k < clusters[c].best_chain.size(); ++k) {
      const auto row = registry.index_of(clusters[c].best_chain[k].name);
      usage.positions(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(c)) =
          static_cast<int>(k) + 1;
    }
  }
  return usage;
}

FalsifyReport run_campaign(const Dataset& dataset, Model& model, const Registry& registry,
                           const ParamBounds& bounds, const ClusterMap& clusters,
                           const DisableRules& disable, const FalsifyConfig& cfg) {
  for (const auto& name : disable.everywhere) registry.index_of(name);
  for (const auto& [id, names] : disable.per_cluster) {
    for (const auto& name : names) registry.index_of(name);
  }

  FalsifyReport report;
  for (const auto& [id, members] : clusters) {
    std::vector<const Sample*> images;
    for (std::size_t i : members) images.push_back(&dataset.samples.at(i));
    try {
      const Registry local = registry.with_disabled(disable.for_cluster(id));
      report.clusters.push_back(falsify_cluster(id, images, model, local, bounds, cfg));
    } catch (const std::exception& e) {
      ClusterReport failed;
      failed.id = id;
      failed.size = images.size();
      failed.ok = false;
      failed.error = e.what();
      auto names = disable.for_cluster(id);
      names.insert(registry.disabled().begin(), registry.disabled().end());
      failed.disabled.assign(names.begin(), names.end());
      report.clusters.push_back(std::move(failed));
    }
  }
  report.usage = usage_matrix(registry, report.clusters);
  return report;
}

}  // namespace segfalsify
