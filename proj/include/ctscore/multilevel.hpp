#pragma once

// Coupled fine/coarse bridge smoothers and the multilevel combination.

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "ctscore/backward.hpp"
#include "ctscore/bridge.hpp"
#include "ctscore/discretization.hpp"
#include "ctscore/model.hpp"
#include "ctscore/particles.hpp"
#include "ctscore/rng.hpp"
#include "ctscore/smoother_bridge.hpp"

namespace ctscore {

/// Maximal coupling of two distributions on {0, .., N-1}. Tables are built
/// once, so repeated draws cost O(log N).
class IndexCoupling {
 public:
  /// p and q non-negative with positive mass; both are renormalized.
  IndexCoupling(std::span<const double> p, std::span<const double> q);

  /// P(i = j) = sum_k min(p_k, q_k).
  double overlap() const { return overlap_; }
  std::pair<std::size_t, std::size_t> draw(RandomStream& rng) const;

 private:
  double overlap_ = 0.0;
  std::vector<double> common_, rest_p_, rest_q_;  // cumulative tables
};

std::pair<std::size_t, std::size_t> maximal_coupling_indices(std::span<const double> p,
                                                             std::span<const double> q,
                                                             RandomStream& rng);

struct GaussianLaw {
  double mean = 0.0;
  double var = 1.0;

  double logpdf(double x) const {
    const double r = x - mean;
    return -0.5 * std::log(2.0 * std::numbers::pi * var) - 0.5 * r * r / var;
  }
  double sample(RandomStream& rng) const { return mean + std::sqrt(var) * rng.normal(); }
};

inline constexpr int kMaxCouplingIterations = 1000000;

/// Maximal coupling by rejection: X ~ p is kept as the common value with
/// probability min(1, q(X)/p(X)); otherwise Y is drawn from the residual of
/// q. Throws std::runtime_error when the residual loop exceeds the cap.
template <class Law>
std::pair<double, double> maximal_coupling_endpoints(const Law& p, const Law& q, RandomStream& rng,
                                                     bool* met = nullptr) {
  const double x = p.sample(rng);
  const double lp = p.logpdf(x);
  if (std::log(rng.uniform()) + lp <= q.logpdf(x)) {
    if (met) *met = true;
    return {x, x};
  }
  if (met) *met = false;
  for (int it = 0; it < kMaxCouplingIterations; ++it) {
    const double y = q.sample(rng);
    if (std::log(rng.uniform()) + q.logpdf(y) > p.logpdf(y)) return {x, y};
  }
  throw std::runtime_error("maximal coupling: iteration cap reached");
}

/// coarse[q] = fine[2q] + fine[2q+1] for the 2^(l-1) - 1 coarse increments.
void coarse_increments(std::span<const double> fine, std::span<double> coarse);

/// Estimates from one coupled unit time.
struct CoupledEstimate {
  int time = 0;
  Eigen::VectorXd fine;
  Eigen::VectorXd coarse;
  Eigen::VectorXd difference;
  double index_meet_rate = 0.0;
  double endpoint_meet_rate = 0.0;
  std::uint64_t pair_failures = 0;
  CostCounters cost;  // cumulative, both sides
};

/// Algorithm with paired particle systems at levels l and l - 1. With
/// same_level the coarse side runs at level l on the same noise (test hook;
/// the difference is then exactly zero).
template <class M>
class CoupledSmoother {
 public:
  using Params = typename M::Params;
  static constexpr int kNumParams = M::kNumParams;

  CoupledSmoother(const M& model, const Params& theta, int level, std::size_t particles,
                  double x_star, RandomStream rng, bool same_level = false, AuxSpec aux = {})
      : bridge_(model, theta, aux),
        level_(level),
        coarse_level_(same_level ? level : level - 1),
        n_(particles),
        x_star_(x_star),
        rng_(std::move(rng)) {
    if (coarse_level_ < 0) throw std::invalid_argument("CoupledSmoother: level must be >= 1");
    if (particles < 1) throw std::invalid_argument("CoupledSmoother: need at least one particle");
    require_admissible(model, x_star, 0);
  }

  int time() const { return time_; }
  int level() const { return level_; }
  int coarse_level() const { return coarse_level_; }
  std::size_t particles() const { return n_; }
  const Params& theta() const { return bridge_.theta(); }
  void set_theta(const Params& theta) { bridge_ = GuidedBridge<M>(bridge_.model(), theta, bridge_.aux()); }
  const CostCounters& cost() const { return cost_; }

  /// fine_obs: 2^l increments of the block; coarse_obs: the same block
  /// coarsened to the coarse level.
  CoupledEstimate step(std::span<const double> fine_obs, std::span<const double> coarse_obs) {
    const std::size_t nf = std::size_t{1} << level_;
    const std::size_t nc = std::size_t{1} << coarse_level_;
    if (fine_obs.size() != nf || coarse_obs.size() != nc) {
      throw std::invalid_argument("CoupledSmoother: block size mismatch");
    }
    const double sqrt_dt = std::sqrt(1.0 / static_cast<double>(nf));

    std::vector<double> start_f(n_, x_star_), start_c(n_, x_star_);
    Eigen::MatrixXd prev_f, prev_c;
    std::size_t index_meets = n_;
    if (time_ > 0) {
      std::vector<double> wf(n_), wc(n_);
      normalize_log_weights(std::span<const double>(logw_f_.data(), n_), wf);
      normalize_log_weights(std::span<const double>(logw_c_.data(), n_), wc);
      const IndexCoupling coupling(wf, wc);
      prev_f.resize(static_cast<Eigen::Index>(n_), kNumParams);
      prev_c.resize(static_cast<Eigen::Index>(n_), kNumParams);
      index_meets = 0;
      for (std::size_t i = 0; i < n_; ++i) {
        const auto [a, b] = coupling.draw(rng_);
        index_meets += a == b;
        start_f[i] = end_f_[a];
        start_c[i] = end_c_[b];
        prev_f.row(i) = F_f_.row(a);
        prev_c.row(i) = F_c_.row(b);
      }
    }

    std::vector<double> inc_f(n_ * (nf - 1)), inc_c(n_ * (nc - 1)), end_f(n_), end_c(n_);
    std::size_t endpoint_meets = 0;
    for (std::size_t i = 0; i < n_; ++i) {
      const std::span<double> fi(inc_f.data() + i * (nf - 1), nf - 1);
      for (auto& z : fi) z = sqrt_dt * rng_.normal();
      const std::span<double> ci(inc_c.data() + i * (nc - 1), nc - 1);
      if (nc == nf) {
        std::copy(fi.begin(), fi.end(), ci.begin());
      } else {
        coarse_increments(fi, ci);
      }
      const GaussianLaw pf{start_f[i], bridge_.aux().proposal_scale *
                                           bridge_.model().diffusion_cov(start_f[i])};
      const GaussianLaw pc{start_c[i], bridge_.aux().proposal_scale *
                                           bridge_.model().diffusion_cov(start_c[i])};
      bool met = false;
      std::tie(end_f[i], end_c[i]) = maximal_coupling_endpoints(pf, pc, rng_, &met);
      endpoint_meets += met;
    }

    BridgeUpdate uf = bridge_backward_update(bridge_, start_f, time_ > 0 ? &prev_f : nullptr,
                                             inc_f, end_f, fine_obs);
    BridgeUpdate uc = bridge_backward_update(bridge_, start_c, time_ > 0 ? &prev_c : nullptr,
                                             inc_c, end_c, coarse_obs);

    CoupledEstimate est;
    est.fine = self_normalized_estimate(uf.log_w, uf.F);
    est.coarse = self_normalized_estimate(uc.log_w, uc.F);
    est.difference = est.fine - est.coarse;
    est.index_meet_rate = static_cast<double>(index_meets) / static_cast<double>(n_);
    est.endpoint_meet_rate = static_cast<double>(endpoint_meets) / static_cast<double>(n_);
    est.pair_failures = uf.pair_failures + uc.pair_failures;

    CostCounters cost;
    const std::size_t pairs = time_ > 0 ? n_ * n_ : n_;
    cost.gaussian_draws += n_ * nf;
    cost.drift_evals += pairs * (nf + nc);
    cost.density_evals += 2 * pairs;

    F_f_ = std::move(uf.F);
    F_c_ = std::move(uc.F);
    logw_f_ = std::move(uf.log_w);
    logw_c_ = std::move(uc.log_w);
    end_f_ = std::move(end_f);
    end_c_ = std::move(end_c);
    ++time_;
    cost_ += cost;
    est.time = time_;
    est.cost = cost_;
    return est;
  }

 private:
  GuidedBridge<M> bridge_;
  int level_;
  int coarse_level_;
  std::size_t n_;
  double x_star_;
  RandomStream rng_;
  int time_ = 0;
  std::vector<double> end_f_, end_c_;
  Eigen::MatrixXd F_f_, F_c_;
  Eigen::ArrayXd logw_f_, logw_c_;
  CostCounters cost_;
};

struct MLConfig {
  int l_star = 1;
  int L = 1;
  /// particles[l - (l_star - 1)] for l = l_star - 1 .. L.
  std::vector<std::size_t> particles;
  double rho = 0.0;
  double beta = 1.0;

  std::size_t at(int level) const { return particles.at(static_cast<std::size_t>(level - l_star + 1)); }
  void validate() const;
};

/// N_l = floor(scale 2^L (L - l_* + 2) dt_l^(1/2 + rho) [dt_L^-rho if beta = 1/2]),
/// at least 2, for l = l_* - 1 .. L.
MLConfig allocate_particles(int L, int l_star, double rho, double beta, double scale);

/// Per unit time: base + sum of the level differences. differences[l][k] is
/// the difference at level l_* + l and unit time k.
std::vector<ScoreEstimate> ml_combine(const std::vector<std::vector<CoupledEstimate>>& differences,
                                      const std::vector<ScoreEstimate>& base);

/// Online multilevel estimator: a bridge smoother at l_* - 1 and one coupled
/// smoother per level l_* .. L, all advanced together.
template <class M>
class MultilevelEstimator {
 public:
  using Params = typename M::Params;

  MultilevelEstimator(const M& model, const Params& theta, const MLConfig& config, double x_star,
                      RandomStream& rng, AuxSpec aux = {})
      : config_(config) {
    config.validate();
    base_.emplace_back(model, theta, config.l_star - 1, config.at(config.l_star - 1), x_star,
                       RandomStream(rng.engine()()), SmootherOptions{}, aux);
    for (int l = config.l_star; l <= config.L; ++l) {
      levels_.emplace_back(model, theta, l, config.at(l), x_star, RandomStream(rng.engine()()),
                           false, aux);
    }
  }

  const MLConfig& config() const { return config_; }
  int time() const { return base_.front().time(); }
  void set_theta(const Params& theta) {
    base_.front().set_theta(theta);
    for (auto& c : levels_) c.set_theta(theta);
  }

  /// block: the unit block's increments at a native level >= L.
  ScoreEstimate step(std::span<const double> block, int block_level) {
    if (block_level < config_.L || block.size() != (std::size_t{1} << block_level)) {
      throw std::invalid_argument("MultilevelEstimator: block must be at level >= L");
    }
    std::vector<std::vector<double>> coarse(config_.L + 1);
    coarse[config_.L] = coarsen_increments(block, block_level - config_.L);
    for (int l = config_.L - 1; l >= config_.l_star - 1; --l) {
      coarse[l] = coarsen_increments(coarse[l + 1], 1);
    }
    ScoreEstimate est = base_.front().step(coarse[config_.l_star - 1]);
    for (std::size_t i = 0; i < levels_.size(); ++i) {
      const int l = config_.l_star + static_cast<int>(i);
      const CoupledEstimate d = levels_[i].step(coarse[l], coarse[l - 1]);
      est.value += d.difference;
      est.pair_failures += d.pair_failures;
      est.cost += d.cost;
    }
    est.level = config_.L;
    est.particles = config_.at(config_.L);
    return est;
  }

 private:
  MLConfig config_;
  std::vector<BridgeSmoother<M>> base_;
  std::vector<CoupledSmoother<M>> levels_;
};

std::vector<CoupledEstimate> run_alg4(const ModelSpec& model, const Theta& theta,
                                      const ObsRecord& obs, int level, std::size_t particles,
                                      int horizon, double x_star, RandomStream rng,
                                      bool same_level = false, const AuxSpec& aux = {});

std::vector<ScoreEstimate> run_ml(const ModelSpec& model, const Theta& theta, const ObsRecord& obs,
                                  const MLConfig& config, int horizon, double x_star,
                                  RandomStream& rng, const AuxSpec& aux = {});

}  // namespace ctscore
