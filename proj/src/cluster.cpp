#include "segfalsify/cluster.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

namespace segfalsify {

Eigen::VectorXd extract_features(const Image& img) {
  if (img.empty()) throw std::invalid_argument("cannot extract features from an empty image");
  const int w = img.width();
  const int h = img.height();
  const Plane<double> luma = luminance(img).cast<double>();

  Plane<bool> edge(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double gx = x + 1 < w ? luma(y, x + 1) - luma(y, x) : 0.0;
      const double gy = y + 1 < h ? luma(y + 1, x) - luma(y, x) : 0.0;
      edge(y, x) = std::sqrt(gx * gx + gy * gy) > kEdgeThreshold;
    }
  }

  Eigen::VectorXd features = Eigen::VectorXd::Zero(kFeatureGrid * kFeatureGrid * kFeaturesPerCell);
  for (int cy = 0; cy < kFeatureGrid; ++cy) {
    const int y0 = cy * h / kFeatureGrid;
    const int y1 = (cy + 1) * h / kFeatureGrid;
    for (int cx = 0; cx < kFeatureGrid; ++cx) {
      const int x0 = cx * w / kFeatureGrid;
      const int x1 = (cx + 1) * w / kFeatureGrid;
      const int n = (y1 - y0) * (x1 - x0);
      if (n == 0) continue;
      const auto cell = (cy * kFeatureGrid + cx) * kFeaturesPerCell;
      for (int c = 0; c < Image::kChannels; ++c) {
        features(cell + c) =
            img.channel(c).block(y0, x0, y1 - y0, x1 - x0).cast<double>().mean();
      }
      const auto l = luma.block(y0, x0, y1 - y0, x1 - x0);
      features(cell + 3) = std::sqrt((l - l.mean()).square().mean());
      features(cell + 4) =
          static_cast<double>(edge.block(y0, x0, y1 - y0, x1 - x0).count()) / n;
    }
  }
  return features;
}

Reduction reduce(const Eigen::MatrixXd& features, int out_dim) {
  const Eigen::Index n = features.rows();
  const Eigen::Index d = features.cols();
  if (out_dim < 1) throw std::invalid_argument("output dimension must be positive");
  if (n <= out_dim) {
    throw std::invalid_argument("reduction to " + std::to_string(out_dim) + " dimensions needs more than " +
                                std::to_string(out_dim) + " rows, got " + std::to_string(n));
  }
  if (!features.allFinite()) throw std::invalid_argument("feature matrix has non-finite entries");

  Reduction r;
  r.mean = features.colwise().mean();
  const Eigen::MatrixXd centred = features.rowwise() - r.mean;
  const Eigen::MatrixXd covariance = centred.transpose() * centred / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(covariance);
  if (solver.info() != Eigen::Success) throw std::runtime_error("eigendecomposition failed");

  const Eigen::VectorXd& values = solver.eigenvalues();  // ascending
  const double largest = values.size() > 0 ? std::max(values(values.size() - 1), 0.0) : 0.0;
  const double floor = largest * 1e-12 * static_cast<double>(std::max(n, d));

  r.basis = Eigen::MatrixXd::Zero(d, out_dim);
  r.explained_variance = Eigen::VectorXd::Zero(out_dim);
  for (int j = 0; j < out_dim && j < d; ++j) {
    const Eigen::Index src = d - 1 - j;
    if (values(src) <= floor || largest == 0.0) break;
    Eigen::VectorXd v = solver.eigenvectors().col(src);
    Eigen::Index pivot;
    v.cwiseAbs().maxCoeff(&pivot);
    if (v(pivot) < 0.0) v = -v;
    r.basis.col(j) = v;
    r.explained_variance(j) = values(src);
    ++r.rank;
  }
  if (r.rank < out_dim) {
    std::cerr << "warning: features have rank " << r.rank << " < " << out_dim
              << "; padding with zero directions\n";
  }

  r.scores = centred * r.basis;
  r.reduced = r.scores;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double norm = r.reduced.row(i).norm();
    if (norm > 0.0) r.reduced.row(i) /= norm;
  }
  return r;
}

Eigen::MatrixXd reconstruct(const Reduction& reduction, const Eigen::MatrixXd& scores) {
  return (scores * reduction.basis.transpose()).rowwise() + reduction.mean;
}

namespace {

// Index of the nearest centroid (lowest index on ties) and its squared distance.
std::pair<int, double> nearest(const Eigen::MatrixXd& centroids, const Eigen::RowVectorXd& point) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
    const double d = (centroids.row(c) - point).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  return {best, best_d};
}

void normalise_rows(Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double norm = m.row(i).norm();
    if (norm > 0.0) m.row(i) /= norm;
  }
}

Eigen::MatrixXd seed_plus_plus(const Eigen::MatrixXd& data, int k, std::mt19937_64& rng) {
  const Eigen::Index n = data.rows();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Eigen::MatrixXd centroids(k, data.cols());
  std::vector<bool> chosen(n, false);

  Eigen::Index first = std::min<Eigen::Index>(static_cast<Eigen::Index>(unit(rng) * n), n - 1);
  centroids.row(0) = data.row(first);
  chosen[first] = true;
  Eigen::VectorXd dist = (data.rowwise() - data.row(first)).rowwise().squaredNorm();

  for (int c = 1; c < k; ++c) {
    const double total = dist.sum();
    Eigen::Index pick = -1;
    if (total > 0.0) {
      const double u = unit(rng) * total;
      double acc = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += dist(i);
        if (dist(i) > 0.0 && acc >= u) {
          pick = i;
          break;
        }
      }
      if (pick < 0) dist.maxCoeff(&pick);
    } else {
      for (Eigen::Index i = 0; i < n && pick < 0; ++i) {
        if (!chosen[i]) pick = i;
      }
    }
    centroids.row(c) = data.row(pick);
    chosen[pick] = true;
    dist = dist.cwiseMin((data.rowwise() - data.row(pick)).rowwise().squaredNorm());
  }
  return centroids;
}

}  // namespace

KMeansResult kmeans(const Eigen::MatrixXd& data, const KMeansOptions& options) {
  const Eigen::Index n = data.rows();
  const int k = options.k;
  if (k < 1) throw std::invalid_argument("k must be positive");
  if (n < k) {
    throw std::invalid_argument("k-means needs at least k = " + std::to_string(k) + " rows, got " +
                                std::to_string(n));
  }
  if (options.max_iter < 1) throw std::invalid_argument("max_iter must be positive");

  std::mt19937_64 rng(options.seed);
  KMeansResult result;
  result.centroids = seed_plus_plus(data, k, rng);
  if (options.cosine) normalise_rows(result.centroids);
  result.assignment.assign(n, -1);
  std::vector<double> distance(n, 0.0);

  for (;;) {
    bool changed = false;
    double inertia = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto [c, d] = nearest(result.centroids, data.row(i));
      if (c != result.assignment[i]) changed = true;
      result.assignment[i] = c;
      distance[i] = d;
      inertia += d;
    }
    result.inertia_history.push_back(inertia);
    if (!changed) {
      result.converged = true;
      break;
    }
    if (result.iterations == options.max_iter) break;
    ++result.iterations;

    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, data.cols());
    std::vector<int> counts(k, 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(result.assignment[i]) += data.row(i);
      ++counts[result.assignment[i]];
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        result.centroids.row(c) = sums.row(c) / counts[c];
        continue;
      }
      Eigen::Index far = 0;
      double far_d = -1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (distance[i] > far_d) {
          far_d = distance[i];
          far = i;
        }
      }
      result.centroids.row(c) = data.row(far);
      distance[far] = 0.0;
    }
    if (options.cosine) normalise_rows(result.centroids);
  }
  return result;
}

ClusterModel cluster_features(const FeatureTable& features, const KMeansOptions& options,
                              int out_dim) {
  if (features.ids.size() != static_cast<std::size_t>(features.values.rows())) {
    throw std::invalid_argument("feature ids do not match feature rows");
  }
  ClusterModel model;
  model.reduction = reduce(features.values, out_dim);
  KMeansOptions opts = options;
  opts.cosine = true;
  model.kmeans = kmeans(model.reduction.reduced, opts);
  for (std::size_t i = 0; i < features.ids.size(); ++i) {
    model.assignment[features.ids[i]] = model.kmeans.assignment[i];
  }
  return model;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

}  // namespace

void write_features_csv(const std::string& path, const FeatureTable& features) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write features file " + path);
  out << "image_id";
  for (Eigen::Index j = 0; j < features.values.cols(); ++j) out << ",f" << j;
  out << '\n' << std::setprecision(17);
  for (std::size_t i = 0; i < features.ids.size(); ++i) {
    out << features.ids[i];
    for (Eigen::Index j = 0; j < features.values.cols(); ++j) out << ',' << features.values(i, j);
    out << '\n';
  }
}

FeatureTable read_features_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open features file " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": empty features file");
  const auto header = split_csv(strip_cr(line));
  if (header.empty() || header[0] != "image_id") {
    throw std::runtime_error(path + ": header must start with image_id");
  }
  const std::size_t d = header.size() - 1;
  if (d == 0) throw std::runtime_error(path + ": no feature columns");
  FeatureTable table;
  std::vector<double> flat;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto fields = split_csv(line);
    if (fields.size() != d + 1) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected " +
                               std::to_string(d + 1) + " fields");
    }
    table.ids.push_back(fields[0]);
    for (std::size_t j = 1; j < fields.size(); ++j) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(fields[j], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != fields[j].size() || !std::isfinite(v)) {
        throw std::runtime_error(path + ":" + std::to_string(line_no) + ": bad feature value '" +
                                 fields[j] + "'");
      }
      flat.push_back(v);
    }
  }
  table.values = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      flat.data(), static_cast<Eigen::Index>(table.ids.size()), static_cast<Eigen::Index>(d));
  return table;
}

void write_assignments_csv(const std::string& path, const std::vector<std::string>& ids,
                           const std::map<std::string, int>& assignment) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write assignment file " + path);
  out << "image_id,cluster_id\n";
  for (const auto& id : ids) out << id << ',' << assignment.at(id) << '\n';
}

std::vector<std::pair<std::string, int>> read_assignments_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open assignment file " + path);
  std::string line;
  if (!std::getline(in, line) || strip_cr(line) != "image_id,cluster_id") {
    throw std::runtime_error(path + ": header must be image_id,cluster_id");
  }
  std::vector<std::pair<std::string, int>> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto fields = split_csv(line);
    std::size_t used = 0;
    int cluster = -1;
    try {
      if (fields.size() == 2) cluster = std::stoi(fields[1], &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (fields.size() != 2 || used != fields[1].size() || cluster < 0) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": malformed row");
    }
    rows.emplace_back(fields[0], cluster);
  }
  return rows;
}

}  // namespace segfalsify
