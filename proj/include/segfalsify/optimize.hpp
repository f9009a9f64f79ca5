#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace segfalsify {

struct DEConfig {
  int population_size = 30;
  double differential_weight = 0.8;
  int budget = 5000;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

struct TraceEntry {
  int evaluation = 0;  // 1-based
  double value = 0.0;
  double best = 0.0;
};

struct OptResult {
  Eigen::VectorXd best_genome;
  double best_value = 0.0;
  int evaluation_count = 0;
  std::vector<TraceEntry> history;
};

/// Objective to maximise over the unit box.
using Objective = std::function<double(const Eigen::VectorXd&)>;

/// Raised when an evaluation throws or returns a non-finite value. Carries
/// the offending point and everything evaluated before it.
class EvaluationError : public std::runtime_error {
 public:
  EvaluationError(const std::string& what, Eigen::VectorXd genome, OptResult partial)
      : std::runtime_error(what), genome_(std::move(genome)), partial_(std::move(partial)) {}

  const Eigen::VectorXd& genome() const { return genome_; }
  const OptResult& partial() const { return partial_; }

 private:
  Eigen::VectorXd genome_;
  OptResult partial_;
};

/// Differential evolution with two-point crossover and greedy selection
/// (ties go to the child). Generations are synchronous: every child of a
/// generation is bred from the same parent population. Stops after exactly
/// `cfg.budget` evaluations.
OptResult optimize(const Objective& objective, Eigen::Index dim, const DEConfig& cfg);

/// Uniform sampling of the unit box with the same accounting as optimize().
OptResult random_search(const Objective& objective, Eigen::Index dim, int budget,
                        std::uint64_t rng_seed);

/// CSV with header `evaluation,value,best`.
void write_trace_csv(const std::string& path, const OptResult& result);

}  // namespace segfalsify
