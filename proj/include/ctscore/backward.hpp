#pragma once

// Pieces shared by the two smoothers: the self-normalized estimate and the
// weighted mixture step of the backward recursion.

#include <Eigen/Dense>

#include <cmath>
#include <optional>

#include "ctscore/errors.hpp"
#include "ctscore/particles.hpp"

namespace ctscore {

struct SmootherOptions {
  /// Replaces every Lambda by this vector. Used to check the F recursion.
  std::optional<Eigen::VectorXd> constant_lambda;
  /// Added to every log-weight G before normalization.
  double log_weight_offset = 0.0;
};

/// Normalizes log-weights into w, with -inf entries mapped to exactly 0.
/// Returns the effective sample size of the weights.
inline double backward_weights(const Eigen::ArrayXd& log_w, Eigen::ArrayXd& w) {
  const double mx = log_w.maxCoeff();
  if (!std::isfinite(mx)) throw WeightCollapseError("weight collapse in backward kernel");
  // The floor keeps exp away from subnormals; e^-700 is far below rounding.
  w = (log_w == kNegInf).select(0.0, (log_w - mx).max(-700.0).exp());
  const double s = w.sum();
  const double ess = s * s / w.square().sum();
  w /= s;
  return ess;
}

/// sum_i W_i F_i with W the normalized exp(log_w). F is N x d_theta.
inline Eigen::VectorXd self_normalized_estimate(const Eigen::ArrayXd& log_w,
                                                const Eigen::MatrixXd& F, double* ess = nullptr) {
  Eigen::ArrayXd w;
  const double e = backward_weights(log_w, w);
  if (ess) *ess = e;
  return F.transpose() * w.matrix();
}

}  // namespace ctscore
