#include "ctscore/model.hpp"

#include <algorithm>
#include <stdexcept>

namespace ctscore {

namespace {

double require_constant(const std::map<std::string, double>& fixed, const std::string& name,
                        int id) {
  auto it = fixed.find(name);
  if (it == fixed.end()) {
    throw std::invalid_argument("model " + std::to_string(id) + " requires fixed constant '" +
                                name + "'");
  }
  return it->second;
}

}  // namespace

ModelSpec::ModelSpec(Variant model, std::map<std::string, double> fixed)
    : model_(std::move(model)), fixed_(std::move(fixed)) {
  domain_ = ThetaDomain::box(param_dim());
}

int ModelSpec::id() const {
  return visit([](const auto& m) { return std::decay_t<decltype(m)>::kId; });
}

int ModelSpec::param_dim() const {
  return visit([](const auto& m) { return std::decay_t<decltype(m)>::kNumParams; });
}

void ModelSpec::set_domain(ThetaDomain domain) {
  if (domain.lower.size() != param_dim() || domain.upper.size() != param_dim()) {
    throw std::invalid_argument("theta domain dimension mismatch");
  }
  if ((domain.lower.array() > domain.upper.array()).any()) {
    throw std::invalid_argument("theta domain has lower > upper");
  }
  domain_ = std::move(domain);
}

double ModelSpec::drift(const Theta& theta, double x) const {
  return visit([&](const auto& m) {
    using M = std::decay_t<decltype(m)>;
    require_admissible(m, x, 0);
    return m.drift(to_params<M>(theta), x);
  });
}

double ModelSpec::diffusion(double x) const {
  return visit([&](const auto& m) { return m.diffusion(x); });
}

double ModelSpec::diffusion_cov(double x) const {
  return visit([&](const auto& m) { return m.diffusion_cov(x); });
}

double ModelSpec::obs_drift(const Theta& theta, double x) const {
  return visit([&](const auto& m) {
    using M = std::decay_t<decltype(m)>;
    return m.obs_drift(to_params<M>(theta), x);
  });
}

Eigen::VectorXd ModelSpec::grad_drift(const Theta& theta, double x) const {
  return visit([&](const auto& m) -> Eigen::VectorXd {
    using M = std::decay_t<decltype(m)>;
    require_admissible(m, x, 0);
    return m.grad_drift(to_params<M>(theta), x);
  });
}

Eigen::VectorXd ModelSpec::grad_obs_drift(const Theta& theta, double x) const {
  return visit([&](const auto& m) -> Eigen::VectorXd {
    using M = std::decay_t<decltype(m)>;
    return m.grad_obs_drift(to_params<M>(theta), x);
  });
}

bool ModelSpec::admissible(double x) const {
  return visit([&](const auto& m) { return m.admissible(x); });
}

bool ModelSpec::joint_constraint(const Theta& theta) const {
  return visit([&](const auto& m) {
    using M = std::decay_t<decltype(m)>;
    return m.joint_constraint(to_params<M>(theta));
  });
}

ModelSpec builtin_model(int id, const std::map<std::string, double>& fixed) {
  switch (id) {
    case 1:
      return ModelSpec(LinearGaussianModel{require_constant(fixed, "kappa", id),
                                           require_constant(fixed, "sigma", id)},
                       fixed);
    case 2:
      return ModelSpec(ReciprocalDriftModel{require_constant(fixed, "kappa", id),
                                            require_constant(fixed, "sigma", id)},
                       fixed);
    case 3:
      return ModelSpec(
          CirRootModel{require_constant(fixed, "kappa", id), require_constant(fixed, "sigma", id)},
          fixed);
    case 4:
      return ModelSpec(StochasticVolatilityModel{require_constant(fixed, "beta", id)}, fixed);
    default:
      throw std::invalid_argument("unknown model id " + std::to_string(id));
  }
}

bool validate_theta(const ModelSpec& model, const Theta& theta) {
  if (theta.size() != model.param_dim()) {
    throw std::invalid_argument("theta has dimension " + std::to_string(theta.size()) +
                                ", model expects " + std::to_string(model.param_dim()));
  }
  return theta.allFinite() && model.domain().contains(theta) && model.joint_constraint(theta);
}

double grad_check(const ModelSpec& model, const Theta& theta, double x, double step) {
  if (!model.admissible(x)) {
    throw std::domain_error("grad_check: state " + std::to_string(x) +
                            " outside the admissible region");
  }
  const Eigen::VectorXd gb = model.grad_drift(theta, x);
  const Eigen::VectorXd gh = model.grad_obs_drift(theta, x);
  double worst = 0.0;
  for (int i = 0; i < theta.size(); ++i) {
    Theta up = theta;
    Theta down = theta;
    up[i] += step;
    down[i] -= step;
    const double fd_b = (model.drift(up, x) - model.drift(down, x)) / (2.0 * step);
    const double fd_h = (model.obs_drift(up, x) - model.obs_drift(down, x)) / (2.0 * step);
    worst = std::max(worst, std::abs(gb[i] - fd_b) / (1.0 + std::abs(gb[i])));
    worst = std::max(worst, std::abs(gh[i] - fd_h) / (1.0 + std::abs(gh[i])));
  }
  return worst;
}

}  // namespace ctscore
