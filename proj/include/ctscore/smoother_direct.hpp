#pragma once

// Online score estimation with Euler paths as particles and the O(N^2)
// backward recursion for F.
//
// Unit block k holds x_{k + p dt}, p = 1 .. 2^l, started from the resampled
// predecessor endpoint. In the backward kernel only the first Euler density
// of a block and the potential at its start survive, so the N^2 work is
// independent of the level.

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "ctscore/backward.hpp"
#include "ctscore/discretization.hpp"
#include "ctscore/model.hpp"
#include "ctscore/particles.hpp"
#include "ctscore/rng.hpp"

namespace ctscore {

/// log g = h(x) dY - 0.5 dt h(x)^2.
template <class M>
double g_log_weight(const M& model, const typename M::Params& th, double x, double dy, double dt) {
  const double h = model.obs_drift(th, x);
  return h * dy - 0.5 * dt * h * h;
}

double g_log_weight(const ModelSpec& model, const Theta& theta, double x, double dy, double dt);

/// Sum over the steps of a stored Euler block of
///   grad b a^-1 (x_{p+1} - x_p - b dt) + grad h (dY_p - h dt).
/// states has 2^l + 1 entries (the predecessor endpoint first).
template <class M>
typename M::Params lambda_block_direct(const M& model, const typename M::Params& th,
                                       std::span<const double> states,
                                       std::span<const double> obs) {
  if (states.size() != obs.size() + 1) throw std::invalid_argument("lambda_block_direct: sizes");
  const double dt = 1.0 / static_cast<double>(obs.size());
  typename M::Params out = M::Params::Zero();
  for (std::size_t p = 0; p < obs.size(); ++p) {
    const double x = states[p];
    const double b = model.drift(th, x);
    const double h = model.obs_drift(th, x);
    out += model.grad_drift(th, x) * ((states[p + 1] - x - b * dt) / model.diffusion_cov(x)) +
           model.grad_obs_drift(th, x) * (obs[p] - h * dt);
  }
  return out;
}

Eigen::VectorXd lambda_block_direct(const ModelSpec& model, const Theta& theta,
                                    std::span<const double> states, std::span<const double> obs);

/// One backward update. prev_x are the resampled predecessor endpoints with
/// their F values prev_F (N x d); first holds x_{k+dt} of every new block and
/// lambda_rest the Lambda contribution of the remaining steps. Writes F_out
/// and returns the mean over targets of the backward-weight ESS.
/// With zero_step_lambda the first-step f term is dropped (constant-Lambda hook).
template <class M>
double direct_backward_update(const M& model, const typename M::Params& th, double dt, double dy0,
                              std::span<const double> prev_x, const Eigen::MatrixXd& prev_F,
                              std::span<const double> first, const Eigen::MatrixXd& lambda_rest,
                              Eigen::MatrixXd& F_out, bool zero_step_lambda = false) {
  constexpr int P = M::kNumParams;
  const Eigen::Index n = static_cast<Eigen::Index>(prev_x.size());
  const Eigen::Index m = static_cast<Eigen::Index>(first.size());
  Eigen::ArrayXd c(n), mu(n), inv2v(n);
  // Columns 0..P-1: F~_j + grad h (dY - h dt) - G_j mu_j; columns P..2P-1: G_j.
  Eigen::MatrixXd AG(n, 2 * P);
  for (Eigen::Index j = 0; j < n; ++j) {
    const double x = prev_x[j];
    const double b = model.drift(th, x);
    const double a = model.diffusion_cov(x);
    const double h = model.obs_drift(th, x);
    const double v = a * dt;
    mu[j] = x + b * dt;
    c[j] = h * dy0 - 0.5 * h * h * dt - 0.5 * std::log(2.0 * std::numbers::pi * v);
    inv2v[j] = 0.5 / v;
    const auto gb = model.grad_drift(th, x);
    const auto gh = model.grad_obs_drift(th, x);
    for (int q = 0; q < P; ++q) {
      const double G = zero_step_lambda ? 0.0 : gb[q] / a;
      const double hc = zero_step_lambda ? 0.0 : gh[q] * (dy0 - h * dt);
      AG(j, q) = prev_F(j, q) + hc - G * mu[j];
      AG(j, P + q) = G;
    }
  }
  F_out.resize(m, P);
  // log w_j <= c_j, so max(c) is a safe shift. Exponents are floored at
  // -700 to stay clear of subnormals; the fallback below handles targets far
  // from every predecessor.
  const Eigen::ArrayXd c_shift = c - c.maxCoeff();
  Eigen::ArrayXd log_w(n), w(n);
  double ess_sum = 0.0;
  Eigen::Index live = 0;
  for (Eigen::Index i = 0; i < m; ++i) {
    const double x1 = first[i];
    if (!std::isfinite(x1)) {
      F_out.row(i).setZero();
      continue;
    }
    ++live;
    w = (c_shift - (x1 - mu).square() * inv2v).max(-700.0).exp();
    double s = w.sum();
    if (!(s > 1e-260)) {
      log_w = c - (x1 - mu).square() * inv2v;
      backward_weights(log_w, w);
      s = 1.0;
    }
    ess_sum += s * s / w.square().sum();
    w /= s;
    const Eigen::Matrix<double, 2 * P, 1> acc = AG.transpose() * w.matrix();
    for (int q = 0; q < P; ++q) F_out(i, q) = lambda_rest(i, q) + acc[q] + x1 * acc[P + q];
  }
  return live ? ess_sum / static_cast<double>(live) : 0.0;
}

template <class M>
class DirectSmoother {
 public:
  using Params = typename M::Params;
  static constexpr int kNumParams = M::kNumParams;

  DirectSmoother(const M& model, const Params& theta, int level, std::size_t particles,
                 double x_star, RandomStream rng, SmootherOptions options = {})
      : model_(model),
        theta_(theta),
        level_(level),
        n_(particles),
        x_star_(x_star),
        rng_(std::move(rng)),
        options_(std::move(options)) {
    if (particles < 1) throw std::invalid_argument("DirectSmoother: need at least one particle");
    if (level < 0) throw std::invalid_argument("DirectSmoother: negative level");
    if (options_.constant_lambda && options_.constant_lambda->size() != kNumParams) {
      throw std::invalid_argument("constant_lambda has the wrong dimension");
    }
    require_admissible(model_, x_star, 0);
  }

  int time() const { return time_; }
  int level() const { return level_; }
  std::size_t particles() const { return n_; }
  const Params& theta() const { return theta_; }
  /// Parameter used from the next unit interval on.
  void set_theta(const Params& theta) { theta_ = theta; }
  const CostCounters& cost() const { return cost_; }
  const Eigen::MatrixXd& F() const { return F_; }
  const Eigen::ArrayXd& log_weights() const { return log_w_; }
  const std::vector<double>& endpoints() const { return end_; }

  /// Processes unit block [time, time+1) given its 2^l observation
  /// increments. Returns the estimate of grad log gamma_{time+1}(1).
  /// Throws WeightCollapseError without changing the system state.
  ScoreEstimate step(std::span<const double> obs) {
    const std::size_t steps = std::size_t{1} << level_;
    if (obs.size() != steps) throw std::invalid_argument("DirectSmoother: block size mismatch");
    const double dt = 1.0 / static_cast<double>(steps);
    const double sqrt_dt = std::sqrt(dt);
    const Eigen::Index n = static_cast<Eigen::Index>(n_);

    std::vector<double> start(n_);
    Eigen::MatrixXd prev_F;
    CostCounters cost;
    if (time_ == 0) {
      std::fill(start.begin(), start.end(), x_star_);
    } else {
      std::vector<double> w(n_);
      std::vector<std::size_t> anc(n_);
      normalize_log_weights(std::span<const double>(log_w_.data(), n_), w);
      multinomial_resample(w, anc, rng_);
      prev_F.resize(n, kNumParams);
      for (std::size_t j = 0; j < n_; ++j) {
        start[j] = end_[anc[j]];
        prev_F.row(j) = F_.row(anc[j]);
      }
    }

    std::vector<double> first(n_), end(n_);
    Eigen::ArrayXd log_w(n);
    Eigen::MatrixXd lam(n, kNumParams);
    std::uint64_t failures = 0;
    for (std::size_t i = 0; i < n_; ++i) {
      double x = start[i];
      double lg = 0.0;
      bool dead = false;
      Params l_first = Params::Zero(), l_rest = Params::Zero();
      for (std::size_t p = 0; p < steps; ++p) {
        const double b = model_.drift(theta_, x);
        const double h = model_.obs_drift(theta_, x);
        lg += h * obs[p] - 0.5 * dt * h * h;
        const double noise = model_.diffusion(x) * sqrt_dt * rng_.normal();
        const double next = x + b * dt + noise;
        if (p == 0) first[i] = next;
        if (!model_.admissible(next)) {
          // The path left the state space: the particle gets weight zero.
          dead = true;
          break;
        }
        const Params f = model_.grad_drift(theta_, x) * (noise / model_.diffusion_cov(x)) +
                         model_.grad_obs_drift(theta_, x) * (obs[p] - h * dt);
        (p == 0 ? l_first : l_rest) += f;
        x = next;
      }
      end[i] = x;
      if (dead) {
        ++failures;
        log_w[i] = kNegInf;
        lam.row(i).setZero();
        continue;
      }
      log_w[i] = lg + options_.log_weight_offset;
      if (options_.constant_lambda) {
        l_first.setZero();
        l_rest = *options_.constant_lambda;
      }
      lam.row(i) = (time_ == 0 ? Params(l_first + l_rest) : l_rest).transpose();
    }
    cost.drift_evals += n_ * steps;
    cost.gaussian_draws += n_ * steps;

    Eigen::MatrixXd F;
    double backward_ess = static_cast<double>(n_);
    if (time_ == 0) {
      F = lam;
    } else {
      backward_ess = direct_backward_update(model_, theta_, dt, obs[0], start, prev_F, first, lam,
                                            F, options_.constant_lambda.has_value());
      cost.density_evals += n_ * n_;
    }

    ScoreEstimate est;
    est.value = self_normalized_estimate(log_w, F, &est.ess);
    // Commit.
    F_ = std::move(F);
    log_w_ = std::move(log_w);
    end_ = std::move(end);
    ++time_;
    cost_ += cost;
    est.time = time_;
    est.level = level_;
    est.particles = n_;
    est.backward_ess = backward_ess;
    est.pair_failures = failures;
    est.cost = cost_;
    return est;
  }

 private:
  M model_;
  Params theta_;
  int level_;
  std::size_t n_;
  double x_star_;
  RandomStream rng_;
  SmootherOptions options_;
  int time_ = 0;
  std::vector<double> end_;
  Eigen::MatrixXd F_;
  Eigen::ArrayXd log_w_;
  CostCounters cost_;
};

/// T online estimates, one per unit time, from observations coarsened to
/// `level`.
std::vector<ScoreEstimate> run_alg1(const ModelSpec& model, const Theta& theta,
                                    const ObsRecord& obs, int level, std::size_t particles,
                                    int horizon, double x_star, RandomStream rng,
                                    const SmootherOptions& options = {});

}  // namespace ctscore
