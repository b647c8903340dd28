#pragma once

// Experiment drivers behind the CLI: data generation, replicated score runs,
// parameter estimation and cost-versus-MSE benchmarks.

#include <filesystem>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "ctscore/config.hpp"
#include "ctscore/discretization.hpp"

namespace ctscore {

struct ExperimentResult {
  std::vector<std::filesystem::path> files;
  int replications = 0;
  /// Replications (or benchmark tasks) that raised, with their messages.
  std::vector<std::pair<int, std::string>> failures;
};

/// One row of the benchmark output: a method at one top level, averaged over
/// replications.
struct BenchmarkResult {
  std::string method;
  int level = 0;
  std::size_t particles = 0;  // summed over levels for the multilevel method
  Eigen::VectorXd mse;        // per coordinate, averaged over unit times
  double mse_total = 0.0;
  double cost = 0.0;  // mean counter total per replication
  double wall_seconds = 0.0;
  int replications = 0;
  std::string reference;
};

/// Dataset for replication `rep`: simulated at data.level or read from CSV.
ObsRecord experiment_data(const ExperimentConfig& config, int rep, HiddenPath* hidden = nullptr);

/// Per-unit-time Kalman score of model 1 (central differences of the exact
/// Euler filter at the record's level).
std::vector<Eigen::VectorXd> kalman_score_path(const ModelSpec& model, const Theta& theta,
                                               const ObsRecord& obs, double x_star, int horizon,
                                               double h = 1e-5);

/// Runs `tasks` on up to `workers` threads. Exceptions are caught per task and
/// reported through the returned messages (empty on success).
std::vector<std::string> run_parallel(const std::vector<std::function<void()>>& tasks,
                                      int workers);

/// Validates the configuration and writes every artifact under
/// config.output_dir. Progress goes to `log` when non-null.
ExperimentResult run_experiment(const ExperimentConfig& config, std::ostream* log = nullptr);

}  // namespace ctscore
