#include "ctscore/discretization.hpp"

#include <bit>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ctscore {

std::vector<double> ObsRecord::path() const {
  std::vector<double> y(increments.size() + 1);
  y[0] = y0;
  for (std::size_t k = 0; k < increments.size(); ++k) y[k + 1] = y[k] + increments[k];
  return y;
}

double euler_step(const ModelSpec& model, const Theta& theta, double x, double dt, double z) {
  return model.visit([&](const auto& m) {
    using M = std::decay_t<decltype(m)>;
    return euler_step(m, to_params<M>(theta), x, dt, z);
  });
}

double euler_transition_logdensity(const ModelSpec& model, const Theta& theta, double x,
                                   double x_next, double dt) {
  return model.visit([&](const auto& m) {
    using M = std::decay_t<decltype(m)>;
    return euler_transition_logdensity(m, to_params<M>(theta), x, x_next, dt);
  });
}

HiddenPath simulate_hidden_from_normals(const ModelSpec& model, const Theta& theta,
                                        const Grid& grid, double x0,
                                        std::span<const double> normals) {
  if (!validate_theta(model, theta)) throw std::invalid_argument("simulate_hidden: invalid theta");
  if (normals.size() != grid.total_steps()) {
    throw std::invalid_argument("simulate_hidden: expected one normal per step");
  }
  return model.visit([&](const auto& m) {
    using M = std::decay_t<decltype(m)>;
    const auto th = to_params<M>(theta);
    const double dt = grid.step();
    const double sqrt_dt = std::sqrt(dt);
    HiddenPath path;
    path.level = grid.level;
    path.values.resize(grid.total_steps() + 1);
    path.brownian.resize(grid.total_steps());
    require_admissible(m, x0, 0);
    path.values[0] = x0;
    for (std::size_t k = 0; k < grid.total_steps(); ++k) {
      const double x = path.values[k];
      path.brownian[k] = sqrt_dt * normals[k];
      const double next = x + m.drift(th, x) * dt + m.diffusion(x) * path.brownian[k];
      require_admissible(m, next, k + 1);
      path.values[k + 1] = next;
    }
    return path;
  });
}

HiddenPath simulate_hidden(const ModelSpec& model, const Theta& theta, const Grid& grid, double x0,
                           RandomStream& rng) {
  std::vector<double> normals(grid.total_steps());
  for (auto& z : normals) z = rng.normal();
  return simulate_hidden_from_normals(model, theta, grid, x0, normals);
}

ObsRecord simulate_observations(const ModelSpec& model, const Theta& theta,
                                const HiddenPath& hidden, double y0, RandomStream& rng) {
  return model.visit([&](const auto& m) {
    using M = std::decay_t<decltype(m)>;
    const auto th = to_params<M>(theta);
    const double dt = std::ldexp(1.0, -hidden.level);
    const double sqrt_dt = std::sqrt(dt);
    ObsRecord obs;
    obs.level = hidden.level;
    obs.horizon = hidden.horizon();
    obs.y0 = y0;
    obs.increments.resize(hidden.values.size() - 1);
    for (std::size_t k = 0; k < obs.increments.size(); ++k) {
      obs.increments[k] = m.obs_drift(th, hidden.values[k]) * dt + sqrt_dt * rng.normal();
    }
    return obs;
  });
}

std::vector<double> coarsen_increments(std::span<const double> increments, int shift) {
  std::vector<double> out(increments.begin(), increments.end());
  for (int r = 0; r < shift; ++r) {
    const std::size_t half = out.size() / 2;
    for (std::size_t j = 0; j < half; ++j) out[j] = out[2 * j] + out[2 * j + 1];
    out.resize(half);
  }
  return out;
}

ObsRecord coarsen_obs(const ObsRecord& obs, int level) {
  if (level > obs.level || level < 0) {
    throw std::invalid_argument("coarsen_obs: level " + std::to_string(level) +
                                " exceeds the native level " + std::to_string(obs.level));
  }
  ObsRecord out;
  out.level = level;
  out.horizon = obs.horizon;
  out.y0 = obs.y0;
  out.increments = coarsen_increments(obs.increments, obs.level - level);
  return out;
}

ObsRecord load_price_csv(const std::string& path, int seconds_per_unit, bool take_log) {
  if (seconds_per_unit <= 0 || !std::has_single_bit(static_cast<unsigned>(seconds_per_unit))) {
    throw std::invalid_argument("seconds_per_unit must be a positive power of two");
  }
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<double> prices;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream field(line);
    double value = 0.0;
    if (!(field >> value)) {
      if (prices.empty() && line_no == 1) continue;  // header
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": not a number");
    }
    if (take_log) {
      if (value <= 0.0) {
        throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                 ": non-positive price with log transform");
      }
      value = std::log(value);
    }
    prices.push_back(value);
  }
  const int level = std::countr_zero(static_cast<unsigned>(seconds_per_unit));
  const std::size_t per_unit = std::size_t{1} << level;
  if (prices.size() < per_unit + 1) {
    throw std::runtime_error(path + ": fewer than one unit time of prices");
  }
  ObsRecord obs;
  obs.level = level;
  obs.horizon = static_cast<int>((prices.size() - 1) / per_unit);
  obs.y0 = prices.front();
  obs.increments.resize(obs.horizon * per_unit);
  for (std::size_t k = 0; k < obs.increments.size(); ++k) {
    obs.increments[k] = prices[k + 1] - prices[k];
  }
  return obs;
}

}  // namespace ctscore
