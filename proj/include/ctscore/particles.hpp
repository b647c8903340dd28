#pragma once

// Weight arithmetic and resampling shared by the smoothers.

#include <Eigen/Dense>

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "ctscore/rng.hpp"

namespace ctscore {

/// Abstract work counters. Acceptance-level cost comparisons use these, not
/// wall time.
struct CostCounters {
  std::uint64_t drift_evals = 0;
  std::uint64_t density_evals = 0;
  std::uint64_t gaussian_draws = 0;

  std::uint64_t total() const { return drift_evals + density_evals + gaussian_draws; }
  CostCounters& operator+=(const CostCounters& o) {
    drift_evals += o.drift_evals;
    density_evals += o.density_evals;
    gaussian_draws += o.gaussian_draws;
    return *this;
  }
};

/// Estimate of grad log gamma_time(1) after `time` unit intervals.
struct ScoreEstimate {
  int time = 0;
  Eigen::VectorXd value;
  int level = 0;
  std::size_t particles = 0;
  double ess = 0.0;
  /// Mean over targets of the effective sample size of the backward weights.
  double backward_ess = 0.0;
  std::uint64_t pair_failures = 0;
  CostCounters cost;  // cumulative
};

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// log sum exp, -inf for an empty or all -inf input.
double log_sum_exp(std::span<const double> log_weights);

/// Writes normalized weights into `out` and returns the log normalizer.
/// Throws WeightCollapseError when no weight is finite.
double normalize_log_weights(std::span<const double> log_weights, std::span<double> out);

/// 1 / sum w_i^2 for normalized weights.
double effective_sample_size(std::span<const double> normalized);

/// Multinomial resampling: N ancestor indices drawn i.i.d. from `normalized`.
void multinomial_resample(std::span<const double> normalized, std::span<std::size_t> ancestors,
                          RandomStream& rng);

/// Inverse-CDF draw from a cumulative weight table (last entry = total mass).
std::size_t sample_cumulative(std::span<const double> cumulative, double u);

}  // namespace ctscore
