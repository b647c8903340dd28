#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace ctscore {

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;
  std::size_t points = 0;
};

/// Ordinary least squares y = intercept + slope x from at least three points.
SlopeFit fit_slope(std::span<const double> x, std::span<const double> y);

/// Slope of log(cost) against log(mse).
SlopeFit cost_mse_slope(std::span<const double> mse, std::span<const double> cost);

struct MeanSe {
  Eigen::VectorXd mean;
  Eigen::VectorXd se;
  Eigen::VectorXd var;  // unbiased sample variance
};

/// Coordinate-wise mean, standard error and variance of the samples.
MeanSe mean_se(const std::vector<Eigen::VectorXd>& samples);

struct MethodFit {
  std::string method;
  SlopeFit fit;
};

/// Reads benchmark CSVs (columns method, mse, cost) and fits one slope per
/// method. Writes a table to `table` when non-null.
std::vector<MethodFit> summarize(const std::vector<std::filesystem::path>& files,
                                 std::ostream* table = nullptr);

}  // namespace ctscore
