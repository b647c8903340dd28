#pragma once

// Scalar partially observed diffusions
//
//   dY_t = h(theta, X_t) dt + dB_t
//   dX_t = b(theta, X_t) dt + sigma(X_t) dW_t
//
// Each built-in model is a small value type with inline evaluations so the
// particle algorithms (templated on the model) compile to tight loops. The
// type-erased ModelSpec wraps them for configuration and the CLI.

#include <Eigen/Dense>

#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <variant>

#include "ctscore/errors.hpp"

namespace ctscore {

using Theta = Eigen::VectorXd;

template <int P>
using ParamVec = Eigen::Matrix<double, P, 1>;

/// Smallest state value accepted by models with a 1/x drift term.
inline constexpr double kPositiveStateFloor = 1e-8;

/// Model 1: dX = theta1 X dt + sigma dW,  dY = theta2 (kappa - X) dt + dB.
struct LinearGaussianModel {
  static constexpr int kId = 1;
  static constexpr int kNumParams = 2;
  static constexpr bool kConstantDiffusion = true;
  using Params = ParamVec<2>;

  double kappa = 2.0;
  double sigma = 0.3;

  double drift(const Params& th, double x) const { return th[0] * x; }
  double diffusion(double) const { return sigma; }
  double diffusion_cov(double) const { return sigma * sigma; }
  double obs_drift(const Params& th, double x) const { return th[1] * (kappa - x); }
  Params grad_drift(const Params&, double x) const { return Params(x, 0.0); }
  Params grad_obs_drift(const Params&, double x) const { return Params(0.0, kappa - x); }
  bool admissible(double x) const { return std::isfinite(x); }
  bool joint_constraint(const Params&) const { return true; }
};

/// Model 2: dX = (theta1 / X + theta2 X) dt + sigma dW,  dY = theta3 (kappa - X) dt + dB.
struct ReciprocalDriftModel {
  static constexpr int kId = 2;
  static constexpr int kNumParams = 3;
  static constexpr bool kConstantDiffusion = true;
  using Params = ParamVec<3>;

  double kappa = 2.2;
  double sigma = 0.25;

  double drift(const Params& th, double x) const { return th[0] / x + th[1] * x; }
  double diffusion(double) const { return sigma; }
  double diffusion_cov(double) const { return sigma * sigma; }
  double obs_drift(const Params& th, double x) const { return th[2] * (kappa - x); }
  Params grad_drift(const Params&, double x) const { return Params(1.0 / x, x, 0.0); }
  Params grad_obs_drift(const Params&, double x) const { return Params(0.0, 0.0, kappa - x); }
  bool admissible(double x) const { return x > kPositiveStateFloor && std::isfinite(x); }
  bool joint_constraint(const Params&) const { return true; }
};

/// Model 3 (square root of a CIR process):
///   dX = 0.5 ((theta1 theta2 - sigma^2) / X - theta2 X) dt + sigma dW,
///   dY = theta3 (kappa - X^2) dt + dB.
/// Requires theta1 theta2 > 2 sigma^2.
struct CirRootModel {
  static constexpr int kId = 3;
  static constexpr int kNumParams = 3;
  static constexpr bool kConstantDiffusion = true;
  using Params = ParamVec<3>;

  double kappa = 1.5;
  double sigma = 0.25;

  double drift(const Params& th, double x) const {
    return 0.5 * ((th[0] * th[1] - sigma * sigma) / x - th[1] * x);
  }
  double diffusion(double) const { return sigma; }
  double diffusion_cov(double) const { return sigma * sigma; }
  double obs_drift(const Params& th, double x) const { return th[2] * (kappa - x * x); }
  Params grad_drift(const Params& th, double x) const {
    return Params(0.5 * th[1] / x, 0.5 * (th[0] / x - x), 0.0);
  }
  Params grad_obs_drift(const Params&, double x) const {
    return Params(0.0, 0.0, kappa - x * x);
  }
  bool admissible(double x) const { return x > kPositiveStateFloor && std::isfinite(x); }
  bool joint_constraint(const Params& th) const { return th[0] * th[1] > 2.0 * sigma * sigma; }
};

/// Model 4 (stochastic volatility):
///   dX = theta1 (theta2 - X) dt + beta / sqrt(X^2 + 1) dW,
///   dY = (theta3 - X^2 / 2) dt + dB.
struct StochasticVolatilityModel {
  static constexpr int kId = 4;
  static constexpr int kNumParams = 3;
  static constexpr bool kConstantDiffusion = false;
  using Params = ParamVec<3>;

  double beta = 2.0;

  double drift(const Params& th, double x) const { return th[0] * (th[1] - x); }
  double diffusion(double x) const { return beta / std::sqrt(x * x + 1.0); }
  double diffusion_cov(double x) const { return beta * beta / (x * x + 1.0); }
  double obs_drift(const Params& th, double x) const { return th[2] - 0.5 * x * x; }
  Params grad_drift(const Params& th, double x) const { return Params(th[1] - x, th[0], 0.0); }
  Params grad_obs_drift(const Params&, double) const { return Params(0.0, 0.0, 1.0); }
  bool admissible(double x) const { return std::isfinite(x); }
  bool joint_constraint(const Params&) const { return true; }
};

/// Box constraints on theta. Defaults to [-10, 10] per coordinate.
struct ThetaDomain {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  static ThetaDomain box(int dim, double lo = -10.0, double hi = 10.0) {
    return {Eigen::VectorXd::Constant(dim, lo), Eigen::VectorXd::Constant(dim, hi)};
  }
  bool contains(const Theta& theta) const {
    return (theta.array() >= lower.array()).all() && (theta.array() <= upper.array()).all();
  }
  /// Coordinate-wise clipping.
  Theta project(const Theta& theta) const {
    return theta.cwiseMax(lower).cwiseMin(upper);
  }
};

class ModelSpec {
 public:
  using Variant = std::variant<LinearGaussianModel, ReciprocalDriftModel, CirRootModel,
                               StochasticVolatilityModel>;

  ModelSpec(Variant model, std::map<std::string, double> fixed);

  int id() const;
  int state_dim() const { return 1; }
  int obs_dim() const { return 1; }
  int param_dim() const;
  const std::map<std::string, double>& fixed_params() const { return fixed_; }

  const ThetaDomain& domain() const { return domain_; }
  void set_domain(ThetaDomain domain);

  template <class F>
  decltype(auto) visit(F&& f) const {
    return std::visit(std::forward<F>(f), model_);
  }
  const Variant& variant() const { return model_; }

  // Type-erased evaluations. The particle algorithms use the concrete
  // model types directly.
  double drift(const Theta& theta, double x) const;
  double diffusion(double x) const;
  double diffusion_cov(double x) const;
  double obs_drift(const Theta& theta, double x) const;
  Eigen::VectorXd grad_drift(const Theta& theta, double x) const;
  Eigen::VectorXd grad_obs_drift(const Theta& theta, double x) const;
  bool admissible(double x) const;
  bool joint_constraint(const Theta& theta) const;

 private:
  Variant model_;
  std::map<std::string, double> fixed_;
  ThetaDomain domain_;
};

/// Builds model 1..4. Models 1-3 need "kappa" and "sigma", model 4 needs "beta".
ModelSpec builtin_model(int id, const std::map<std::string, double>& fixed);

/// True iff theta lies in the box and satisfies the model's joint constraint.
/// Throws std::invalid_argument on a dimension mismatch.
bool validate_theta(const ModelSpec& model, const Theta& theta);

/// Max over entries of |analytic - central difference| / (1 + |analytic|)
/// for both theta-gradients.
double grad_check(const ModelSpec& model, const Theta& theta, double x, double step);

template <class M>
typename M::Params to_params(const Theta& theta) {
  if (theta.size() != M::kNumParams) {
    throw std::invalid_argument("theta has dimension " + std::to_string(theta.size()) +
                                ", model expects " + std::to_string(M::kNumParams));
  }
  return typename M::Params(theta);
}

template <class M>
void require_admissible(const M& model, double x, std::size_t step) {
  if (!model.admissible(x)) {
    throw InadmissibleStateError("state " + std::to_string(x) + " outside admissible region",
                                 step);
  }
}

}  // namespace ctscore
