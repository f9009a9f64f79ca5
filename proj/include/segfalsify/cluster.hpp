#pragma once

#include "segfalsify/image.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace segfalsify {

/// One row of features per image; `ids[i]` names row i.
struct FeatureTable {
  std::vector<std::string> ids;
  Eigen::MatrixXd values;
};

inline constexpr int kFeatureGrid = 8;
inline constexpr int kFeaturesPerCell = 5;
inline constexpr double kEdgeThreshold = 0.1;

/// 8x8 cell grid, per cell (row-major): mean R, mean G, mean B, luminance
/// standard deviation, fraction of pixels whose forward-difference gradient
/// magnitude exceeds 0.1.
Eigen::VectorXd extract_features(const Image& img);

/// Mean-centred PCA. Components are ordered by decreasing variance; when the
/// data has fewer than `out_dim` informative directions the rest are zero.
struct Reduction {
  Eigen::RowVectorXd mean;
  Eigen::MatrixXd basis;               // d x out_dim
  Eigen::VectorXd explained_variance;  // out_dim
  Eigen::MatrixXd scores;              // n x out_dim projections
  Eigen::MatrixXd reduced;             // scores with unit-norm rows
  int rank = 0;
};

Reduction reduce(const Eigen::MatrixXd& features, int out_dim = 10);

/// Maps projections back to feature space.
Eigen::MatrixXd reconstruct(const Reduction& reduction, const Eigen::MatrixXd& scores);

struct KMeansOptions {
  int k = 30;
  std::uint64_t seed = 0;
  int max_iter = 300;
  /// Re-normalise centroids to unit length after each update.
  bool cosine = false;
};

struct KMeansResult {
  Eigen::MatrixXd centroids;  // k x d
  std::vector<int> assignment;
  std::vector<double> inertia_history;  // after every assignment step
  int iterations = 0;
  bool converged = false;

  double inertia() const { return inertia_history.empty() ? 0.0 : inertia_history.back(); }
};

/// k-means++ seeding then Lloyd iterations until the assignment stops
/// changing. A cluster that empties is re-seeded at the point farthest from
/// its centroid.
KMeansResult kmeans(const Eigen::MatrixXd& data, const KMeansOptions& options);

struct ClusterModel {
  Reduction reduction;
  KMeansResult kmeans;
  std::map<std::string, int> assignment;
};

ClusterModel cluster_features(const FeatureTable& features, const KMeansOptions& options,
                              int out_dim = 10);

void write_features_csv(const std::string& path, const FeatureTable& features);
FeatureTable read_features_csv(const std::string& path);

void write_assignments_csv(const std::string& path, const std::vector<std::string>& ids,
                           const std::map<std::string, int>& assignment);
/// Rows in file order.
std::vector<std::pair<std::string, int>> read_assignments_csv(const std::string& path);

}  // namespace segfalsify
