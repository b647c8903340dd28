#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <initializer_list>
#include <vector>

#include "ctscore/discretization.hpp"
#include "ctscore/model.hpp"

namespace testing {

inline ctscore::Theta vec(std::initializer_list<double> v) {
  ctscore::Theta t(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) t[i++] = x;
  return t;
}

inline ctscore::ModelSpec paper_model(int id) {
  switch (id) {
    case 1: return ctscore::builtin_model(1, {{"kappa", 2.0}, {"sigma", 0.3}});
    case 2: return ctscore::builtin_model(2, {{"kappa", 2.2}, {"sigma", 0.25}});
    case 3: return ctscore::builtin_model(3, {{"kappa", 1.5}, {"sigma", 0.25}});
    default: return ctscore::builtin_model(4, {{"beta", 2.0}});
  }
}

inline ctscore::ObsRecord simulate(const ctscore::ModelSpec& m, const ctscore::Theta& th,
                                   int level, int horizon, double x0, std::uint64_t seed) {
  ctscore::RandomStream rng(seed);
  const auto hidden = ctscore::simulate_hidden(m, th, ctscore::Grid{level, horizon}, x0, rng);
  return ctscore::simulate_observations(m, th, hidden, 0.0, rng);
}

struct Sample {
  Eigen::VectorXd mean, se;
};

inline Sample mean_and_se(const std::vector<Eigen::VectorXd>& xs) {
  const double n = static_cast<double>(xs.size());
  Sample s;
  s.mean = Eigen::VectorXd::Zero(xs.front().size());
  for (const auto& x : xs) s.mean += x;
  s.mean /= n;
  Eigen::VectorXd var = Eigen::VectorXd::Zero(s.mean.size());
  for (const auto& x : xs) var += (x - s.mean).cwiseAbs2();
  s.se = (var / (n - 1) / n).cwiseSqrt();
  return s;
}

/// Pearson statistic of observed counts against expected probabilities.
inline double chi_square(const std::vector<double>& counts, const std::vector<double>& probs) {
  double total = 0.0, stat = 0.0;
  for (double c : counts) total += c;
  for (std::size_t k = 0; k < counts.size(); ++k) {
    const double e = total * probs[k];
    stat += (counts[k] - e) * (counts[k] - e) / e;
  }
  return stat;
}

/// Upper 1% points of chi-square with 1, 2 and 9 degrees of freedom.
inline constexpr double kChi2Crit1 = 6.635, kChi2Crit2 = 9.210, kChi2Crit9 = 21.666;

/// Interior deciles of N(0, 1).
inline constexpr double kNormalDeciles[9] = {-1.2815516, -0.8416212, -0.5244005, -0.2533471, 0.0,
                                             0.2533471,  0.5244005,  0.8416212,  1.2815516};

/// Counts of (x - mean) / sd in the ten decile bins of N(0, 1).
inline std::vector<double> decile_counts(const std::vector<double>& xs, double mean, double sd) {
  std::vector<double> c(10, 0.0);
  for (double x : xs) {
    const double z = (x - mean) / sd;
    std::size_t b = 0;
    while (b < 9 && z > kNormalDeciles[b]) ++b;
    c[b] += 1.0;
  }
  return c;
}

}  // namespace testing
