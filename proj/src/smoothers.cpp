#include "ctscore/smoother_bridge.hpp"
#include "ctscore/smoother_direct.hpp"

namespace ctscore {

double g_log_weight(const ModelSpec& model, const Theta& theta, double x, double dy, double dt) {
  return model.visit([&](const auto& m) {
    using M = std::decay_t<decltype(m)>;
    return g_log_weight(m, to_params<M>(theta), x, dy, dt);
  });
}

Eigen::VectorXd lambda_block_direct(const ModelSpec& model, const Theta& theta,
                                    std::span<const double> states, std::span<const double> obs) {
  return model.visit([&](const auto& m) -> Eigen::VectorXd {
    using M = std::decay_t<decltype(m)>;
    return lambda_block_direct(m, to_params<M>(theta), states, obs);
  });
}

namespace {

void check_run(const ObsRecord& obs, int level, int horizon) {
  if (level > obs.level) {
    throw std::invalid_argument("observations are recorded at level " + std::to_string(obs.level) +
                                ", below the requested level " + std::to_string(level));
  }
  if (horizon < 1 || horizon > obs.horizon) {
    throw std::invalid_argument("horizon " + std::to_string(horizon) +
                                " outside the observed range 1.." + std::to_string(obs.horizon));
  }
}

}  // namespace

std::vector<ScoreEstimate> run_alg1(const ModelSpec& model, const Theta& theta,
                                    const ObsRecord& obs, int level, std::size_t particles,
                                    int horizon, double x_star, RandomStream rng,
                                    const SmootherOptions& options) {
  check_run(obs, level, horizon);
  if (!validate_theta(model, theta)) throw std::invalid_argument("theta outside the model domain");
  const ObsRecord data = coarsen_obs(obs, level);
  return model.visit([&](const auto& m) {
    using M = std::decay_t<decltype(m)>;
    DirectSmoother<M> smoother(m, to_params<M>(theta), level, particles, x_star, std::move(rng),
                               options);
    std::vector<ScoreEstimate> out;
    out.reserve(horizon);
    for (int k = 0; k < horizon; ++k) out.push_back(smoother.step(data.unit_block(k)));
    return out;
  });
}

std::vector<ScoreEstimate> run_alg3(const ModelSpec& model, const Theta& theta,
                                    const ObsRecord& obs, int level, std::size_t particles,
                                    int horizon, double x_star, RandomStream rng,
                                    const SmootherOptions& options, const AuxSpec& aux) {
  check_run(obs, level, horizon);
  if (!validate_theta(model, theta)) throw std::invalid_argument("theta outside the model domain");
  const ObsRecord data = coarsen_obs(obs, level);
  return model.visit([&](const auto& m) {
    using M = std::decay_t<decltype(m)>;
    BridgeSmoother<M> smoother(m, to_params<M>(theta), level, particles, x_star, std::move(rng),
                               options, aux);
    std::vector<ScoreEstimate> out;
    out.reserve(horizon);
    for (int k = 0; k < horizon; ++k) out.push_back(smoother.step(data.unit_block(k)));
    return out;
  });
}

}  // namespace ctscore
