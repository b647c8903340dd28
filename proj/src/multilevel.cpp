#include "ctscore/multilevel.hpp"

#include <algorithm>
#include <cmath>

namespace ctscore {

namespace {

std::vector<double> normalized(std::span<const double> w, const char* name) {
  double sum = 0.0;
  for (double v : w) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw std::invalid_argument(std::string(name) + ": weights must be finite and non-negative");
    }
    sum += v;
  }
  if (!(sum > 0.0)) throw std::invalid_argument(std::string(name) + ": weights have no mass");
  std::vector<double> out(w.begin(), w.end());
  for (auto& v : out) v /= sum;
  return out;
}

}  // namespace

IndexCoupling::IndexCoupling(std::span<const double> p_in, std::span<const double> q_in) {
  if (p_in.size() != q_in.size() || p_in.empty()) {
    throw std::invalid_argument("IndexCoupling: p and q must have the same positive length");
  }
  const auto p = normalized(p_in, "IndexCoupling");
  const auto q = normalized(q_in, "IndexCoupling");
  const std::size_t n = p.size();
  common_.resize(n);
  rest_p_.resize(n);
  rest_q_.resize(n);
  double c = 0.0, rp = 0.0, rq = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double m = std::min(p[k], q[k]);
    c += m;
    rp += p[k] - m;
    rq += q[k] - m;
    common_[k] = c;
    rest_p_[k] = rp;
    rest_q_[k] = rq;
  }
  overlap_ = c;
}

std::pair<std::size_t, std::size_t> IndexCoupling::draw(RandomStream& rng) const {
  const double u = rng.uniform();
  // When p = q the residuals are zero up to rounding and never used.
  if (u < overlap_ || !(rest_p_.back() > 0.0) || !(rest_q_.back() > 0.0)) {
    const std::size_t k = sample_cumulative(common_, rng.uniform());
    return {k, k};
  }
  const std::size_t i = sample_cumulative(rest_p_, rng.uniform());
  const std::size_t j = sample_cumulative(rest_q_, rng.uniform());
  return {i, j};
}

std::pair<std::size_t, std::size_t> maximal_coupling_indices(std::span<const double> p,
                                                             std::span<const double> q,
                                                             RandomStream& rng) {
  return IndexCoupling(p, q).draw(rng);
}

void coarse_increments(std::span<const double> fine, std::span<double> coarse) {
  if (fine.size() + 1 != 2 * (coarse.size() + 1)) {
    throw std::invalid_argument("coarse_increments: expected 2^l - 1 fine and 2^(l-1) - 1 coarse");
  }
  for (std::size_t q = 0; q < coarse.size(); ++q) coarse[q] = fine[2 * q] + fine[2 * q + 1];
}

void MLConfig::validate() const {
  if (l_star < 1) throw std::invalid_argument("MLConfig: l_star must be >= 1");
  if (l_star > L) throw std::invalid_argument("MLConfig: l_star must not exceed L");
  if (particles.size() != static_cast<std::size_t>(L - l_star + 2)) {
    throw std::invalid_argument("MLConfig: need one particle count per level l_star - 1 .. L");
  }
  for (auto n : particles) {
    if (n < 1) throw std::invalid_argument("MLConfig: particle counts must be positive");
  }
}

MLConfig allocate_particles(int L, int l_star, double rho, double beta, double scale) {
  if (l_star > L) throw std::invalid_argument("allocate_particles: l_star > L");
  if (l_star < 1) throw std::invalid_argument("allocate_particles: l_star must be >= 1");
  if (!(rho > 0.0)) throw std::invalid_argument("allocate_particles: rho must be > 0");
  if (!(scale > 0.0)) throw std::invalid_argument("allocate_particles: scale must be > 0");
  if (beta != 1.0 && beta != 0.5) throw std::invalid_argument("allocate_particles: beta is 1 or 1/2");
  MLConfig cfg;
  cfg.l_star = l_star;
  cfg.L = L;
  cfg.rho = rho;
  cfg.beta = beta;
  const double base = scale * std::ldexp(1.0, L) * (L - l_star + 2);
  const double top = beta == 0.5 ? std::exp2(rho * L) : 1.0;
  for (int l = l_star - 1; l <= L; ++l) {
    const double n = std::floor(base * std::exp2(-l * (0.5 + rho)) * top);
    cfg.particles.push_back(static_cast<std::size_t>(std::max(2.0, n)));
  }
  return cfg;
}

std::vector<ScoreEstimate> ml_combine(const std::vector<std::vector<CoupledEstimate>>& differences,
                                      const std::vector<ScoreEstimate>& base) {
  std::vector<ScoreEstimate> out = base;
  for (std::size_t l = 0; l < differences.size(); ++l) {
    if (differences[l].size() < base.size()) {
      throw std::invalid_argument("ml_combine: level offset " + std::to_string(l) +
                                  " is missing unit times");
    }
    for (std::size_t k = 0; k < base.size(); ++k) {
      out[k].value += differences[l][k].difference;
      out[k].pair_failures += differences[l][k].pair_failures;
      out[k].cost += differences[l][k].cost;
    }
  }
  return out;
}

std::vector<CoupledEstimate> run_alg4(const ModelSpec& model, const Theta& theta,
                                      const ObsRecord& obs, int level, std::size_t particles,
                                      int horizon, double x_star, RandomStream rng,
                                      bool same_level, const AuxSpec& aux) {
  if (level > obs.level) throw std::invalid_argument("run_alg4: observations too coarse");
  if (horizon < 1 || horizon > obs.horizon) throw std::invalid_argument("run_alg4: bad horizon");
  if (!validate_theta(model, theta)) throw std::invalid_argument("theta outside the model domain");
  const ObsRecord fine = coarsen_obs(obs, level);
  const ObsRecord coarse = same_level ? fine : coarsen_obs(fine, level - 1);
  return model.visit([&](const auto& m) {
    using M = std::decay_t<decltype(m)>;
    CoupledSmoother<M> smoother(m, to_params<M>(theta), level, particles, x_star, std::move(rng),
                                same_level, aux);
    std::vector<CoupledEstimate> out;
    for (int k = 0; k < horizon; ++k) {
      out.push_back(smoother.step(fine.unit_block(k), coarse.unit_block(k)));
    }
    return out;
  });
}

std::vector<ScoreEstimate> run_ml(const ModelSpec& model, const Theta& theta, const ObsRecord& obs,
                                  const MLConfig& config, int horizon, double x_star,
                                  RandomStream& rng, const AuxSpec& aux) {
  config.validate();
  if (config.L > obs.level) throw std::invalid_argument("run_ml: observations too coarse");
  if (horizon < 1 || horizon > obs.horizon) throw std::invalid_argument("run_ml: bad horizon");
  if (!validate_theta(model, theta)) throw std::invalid_argument("theta outside the model domain");
  const ObsRecord top = coarsen_obs(obs, config.L);
  return model.visit([&](const auto& m) {
    using M = std::decay_t<decltype(m)>;
    MultilevelEstimator<M> ml(m, to_params<M>(theta), config, x_star, rng, aux);
    std::vector<ScoreEstimate> out;
    for (int k = 0; k < horizon; ++k) out.push_back(ml.step(top.unit_block(k), config.L));
    return out;
  });
}

}  // namespace ctscore
