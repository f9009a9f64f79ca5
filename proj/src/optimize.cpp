#include "segfalsify/optimize.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>

namespace segfalsify {

void DEConfig::validate() const {
  if (population_size < 4) throw std::invalid_argument("population size must be at least 4");
  if (!(differential_weight > 0.0 && differential_weight <= 2.0)) {
    throw std::invalid_argument("differential weight must lie in (0, 2]");
  }
  if (budget < population_size) throw std::invalid_argument("budget must cover the initial population");
}

namespace {

// Shared evaluation bookkeeping for both optimisers.
class Evaluator {
 public:
  explicit Evaluator(const Objective& objective) : objective_(objective) {
    result_.best_value = -std::numeric_limits<double>::infinity();
  }

  double operator()(const Eigen::VectorXd& x) {
    double value = 0.0;
    try {
      value = objective_(x);
    } catch (const std::exception& e) {
      throw EvaluationError(std::string("objective evaluation failed: ") + e.what(), x, result_);
    }
    if (!std::isfinite(value)) {
      throw EvaluationError("objective returned a non-finite value", x, result_);
    }
    ++result_.evaluation_count;
    if (result_.evaluation_count == 1 || value > result_.best_value) {
      result_.best_value = value;
      result_.best_genome = x;
    }
    result_.history.push_back({result_.evaluation_count, value, result_.best_value});
    return value;
  }

  int count() const { return result_.evaluation_count; }
  OptResult take() { return std::move(result_); }

 private:
  const Objective& objective_;
  OptResult result_;
};

}  // namespace

OptResult optimize(const Objective& objective, Eigen::Index dim, const DEConfig& cfg) {
  cfg.validate();
  if (dim < 1) throw std::invalid_argument("dimension must be at least 1");

  std::mt19937_64 rng(cfg.rng_seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int n = cfg.population_size;
  Evaluator evaluate(objective);

  Eigen::MatrixXd population(n, dim);
  for (Eigen::Index i = 0; i < population.size(); ++i) population.data()[i] = unit(rng);
  Eigen::VectorXd fitness(n);
  for (int i = 0; i < n; ++i) fitness(i) = evaluate(population.row(i).transpose());

  std::uniform_int_distribution<int> member(0, n - 1);
  std::uniform_int_distribution<Eigen::Index> cut(0, dim);
  std::uniform_int_distribution<Eigen::Index> coordinate(0, dim - 1);

  Eigen::MatrixXd children(n, dim);
  while (evaluate.count() < cfg.budget) {
    const int brood = std::min(n, cfg.budget - evaluate.count());
    for (int target = 0; target < brood; ++target) {
      int a, b, c;
      do { a = member(rng); } while (a == target);
      do { b = member(rng); } while (b == target || b == a);
      do { c = member(rng); } while (c == target || c == a || c == b);

      const Eigen::RowVectorXd donor =
          (population.row(a) + cfg.differential_weight * (population.row(b) - population.row(c)))
              .cwiseMax(0.0)
              .cwiseMin(1.0);

      Eigen::Index lo = cut(rng);
      Eigen::Index hi = cut(rng);
      if (lo > hi) std::swap(lo, hi);
      children.row(target) = population.row(target);
      if (lo == hi) {
        const Eigen::Index forced = coordinate(rng);
        children(target, forced) = donor(forced);
      } else {
        children.row(target).segment(lo, hi - lo) = donor.segment(lo, hi - lo);
      }
    }
    for (int target = 0; target < brood; ++target) {
      const double value = evaluate(children.row(target).transpose());
      if (value >= fitness(target)) {
        population.row(target) = children.row(target);
        fitness(target) = value;
      }
    }
  }
  return evaluate.take();
}

OptResult random_search(const Objective& objective, Eigen::Index dim, int budget,
                        std::uint64_t rng_seed) {
  if (dim < 1) throw std::invalid_argument("dimension must be at least 1");
  if (budget < 1) throw std::invalid_argument("budget must be positive");
  std::mt19937_64 rng(rng_seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Evaluator evaluate(objective);
  Eigen::VectorXd x(dim);
  for (int k = 0; k < budget; ++k) {
    for (Eigen::Index i = 0; i < dim; ++i) x(i) = unit(rng);
    evaluate(x);
  }
  return evaluate.take();
}

void write_trace_csv(const std::string& path, const OptResult& result) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write trace file " + path);
  out << "evaluation,value,best\n" << std::setprecision(17);
  for (const auto& e : result.history) out << e.evaluation << ',' << e.value << ',' << e.best << '\n';
}

}  // namespace segfalsify
