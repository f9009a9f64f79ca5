#pragma once

#include "segfalsify/bounds.hpp"
#include "segfalsify/genome.hpp"
#include "segfalsify/io.hpp"
#include "segfalsify/metrics.hpp"
#include "segfalsify/model.hpp"
#include "segfalsify/optimize.hpp"

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace segfalsify {

enum class SearchMethod { differential_evolution, random };

struct FalsifyConfig {
  DEConfig de;
  SearchMethod method = SearchMethod::differential_evolution;
  int chain_length = kDefaultChainLength;
  /// Seeds the stochastic perturbations (rain drops, noise, ...).
  std::uint64_t perturbation_seed = 0;
  /// Evaluate a fixed random subset of this many images per cluster (0 = all).
  int subsample = 0;
  std::uint64_t subsample_seed = 0;
  bool cache_baseline = true;
  ThresholdSet thresholds;
  /// Directory for per-cluster trace CSVs; empty disables them.
  std::string trace_dir;
};

/// Deterioration of a chain over a fixed image set: mean over images of
/// IoU(model(x), y) - IoU(model(x_theta), y_theta), where (x_theta, y_theta)
/// is the chain applied to (x, y).
class ChainObjective {
 public:
  ChainObjective(std::vector<const Sample*> images, Model& model, const Registry& registry,
                 const ParamBounds& bounds, const FalsifyConfig& cfg);

  double operator()(const Eigen::VectorXd& genome) const;
  double evaluate_chain(const Chain& chain) const;

  Chain decode(const Eigen::VectorXd& genome) const;
  Eigen::Index dim() const { return layout_.dim(); }
  double mean_baseline() const;

 private:
  std::vector<double> baselines() const;

  std::vector<const Sample*> images_;
  Model& model_;
  const Registry& registry_;
  const ParamBounds& bounds_;
  FalsifyConfig cfg_;
  GenomeLayout layout_;
  std::vector<double> baseline_;
  std::vector<std::uint64_t> seeds_;
};

struct ClusterReport {
  int id = 0;
  std::size_t size = 0;
  std::size_t evaluated_images = 0;
  std::vector<std::string> disabled;
  double mean_baseline_iou = 0.0;
  double best_deterioration = 0.0;
  Chain best_chain;
  Eigen::VectorXd best_genome;
  int evaluations = 0;
  std::string trace_file;
  bool ok = true;
  std::string error;
  OptResult result;
};

/// Runs one falsification search on one cluster's images.
ClusterReport falsify_cluster(int cluster_id, const std::vector<const Sample*>& images, Model& model,
                              const Registry& registry, const ParamBounds& bounds,
                              const FalsifyConfig& cfg);

/// Cluster id -> dataset indices.
using ClusterMap = std::map<int, std::vector<std::size_t>>;

ClusterMap single_cluster(const Dataset& dataset);
ClusterMap clusters_from_assignments(const Dataset& dataset,
                                     const std::vector<std::pair<std::string, int>>& rows);

/// Disabled perturbations: every cluster, plus per-cluster extras.
struct DisableRules {
  std::set<std::string> everywhere;
  std::map<int, std::set<std::string>> per_cluster;

  std::set<std::string> for_cluster(int id) const;
};

/// Parses "name" (all clusters) or "name@1,2,3" (listed clusters).
void add_disable_rule(DisableRules& rules, const std::string& text);

/// Rows follow registry order; columns follow cluster order. Entries are the
/// 1-based chain position, or 0 when the perturbation is absent.
struct UsageMatrix {
  std::vector<std::string> perturbations;
  std::vector<int> clusters;
  Eigen::MatrixXi positions;
};

struct FalsifyReport {
  std::vector<ClusterReport> clusters;
  UsageMatrix usage;
};

UsageMatrix usage_matrix(const Registry& registry, const std::vector<ClusterReport>& clusters);

/// One falsify_cluster per cluster. A failing cluster is recorded and the
/// remaining clusters still run.
FalsifyReport run_campaign(const Dataset& dataset, Model& model, const Registry& registry,
                           const ParamBounds& bounds, const ClusterMap& clusters,
                           const DisableRules& disable, const FalsifyConfig& cfg);

}  // namespace segfalsify
