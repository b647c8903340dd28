#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "ctscore/model.hpp"
#include "ctscore/rng.hpp"

namespace ctscore {

/// Uniform grid with step 2^-level on [0, horizon].
struct Grid {
  int level = 0;
  int horizon = 1;

  double step() const { return std::ldexp(1.0, -level); }
  std::size_t steps_per_unit() const { return std::size_t{1} << level; }
  std::size_t total_steps() const { return static_cast<std::size_t>(horizon) * steps_per_unit(); }
};

/// Euler path x_0 .. x_{T 2^l} and the Brownian increments that drove it.
struct HiddenPath {
  int level = 0;
  std::vector<double> values;
  std::vector<double> brownian;

  int horizon() const { return static_cast<int>((values.size() - 1) >> level); }
};

/// Observation increments dY_k = Y_{(k+1)dt} - Y_{k dt} at a native level.
struct ObsRecord {
  int level = 0;
  int horizon = 0;
  double y0 = 0.0;
  std::vector<double> increments;

  std::size_t steps_per_unit() const { return std::size_t{1} << level; }
  /// The 2^level increments covering [k, k+1).
  std::span<const double> unit_block(int k) const {
    return std::span<const double>(increments).subspan(k * steps_per_unit(), steps_per_unit());
  }
  /// Y on the grid, rebuilt by cumulative summation from y0.
  std::vector<double> path() const;
};

template <class M>
double euler_step(const M& model, const typename M::Params& th, double x, double dt, double z) {
  return x + model.drift(th, x) * dt + model.diffusion(x) * std::sqrt(dt) * z;
}

double euler_step(const ModelSpec& model, const Theta& theta, double x, double dt, double z);

/// log N(x_next; x + b(x) dt, a(x) dt).
template <class M>
double euler_transition_logdensity(const M& model, const typename M::Params& th, double x,
                                   double x_next, double dt) {
  const double var = model.diffusion_cov(x) * dt;
  if (!(var > 0.0) || !std::isfinite(var)) {
    throw std::domain_error("euler_transition_logdensity: singular diffusion covariance");
  }
  const double r = x_next - x - model.drift(th, x) * dt;
  return -0.5 * std::log(2.0 * std::numbers::pi * var) - 0.5 * r * r / var;
}

double euler_transition_logdensity(const ModelSpec& model, const Theta& theta, double x,
                                   double x_next, double dt);

HiddenPath simulate_hidden(const ModelSpec& model, const Theta& theta, const Grid& grid, double x0,
                           RandomStream& rng);

/// Same as simulate_hidden but driven by caller-supplied standard normals
/// (one per step).
HiddenPath simulate_hidden_from_normals(const ModelSpec& model, const Theta& theta,
                                        const Grid& grid, double x0,
                                        std::span<const double> normals);

ObsRecord simulate_observations(const ModelSpec& model, const Theta& theta,
                                const HiddenPath& hidden, double y0, RandomStream& rng);

/// Halves the grid `shift` times, each time summing neighbouring pairs. The
/// fixed pairwise order makes repeated coarsening bit-identical to a single
/// coarsening by the total shift.
std::vector<double> coarsen_increments(std::span<const double> increments, int shift);

/// Coarsens the record to `level` <= obs.level.
ObsRecord coarsen_obs(const ObsRecord& obs, int level);

/// Reads a single column of prices (optional header line), differences them
/// into increments and assigns the level log2(seconds_per_unit). A trailing
/// partial unit interval is dropped.
ObsRecord load_price_csv(const std::string& path, int seconds_per_unit = 512,
                         bool take_log = false);

}  // namespace ctscore
