#pragma once

// Online score estimation with guided-bridge blocks as particles.
//
// A particle block is (z_1 .. z_{2^l - 1}, x_{k+1}). For every target i and
// every resampled predecessor j the bridge path is rebuilt from x~_j with
// particle i's increments and endpoint, so one unit time costs N^2 2^l.

#include <Eigen/Dense>

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "ctscore/backward.hpp"
#include "ctscore/bridge.hpp"
#include "ctscore/discretization.hpp"
#include "ctscore/model.hpp"
#include "ctscore/particles.hpp"
#include "ctscore/rng.hpp"

namespace ctscore {

struct BridgeUpdate {
  Eigen::MatrixXd F;       // N x d_theta
  Eigen::ArrayXd log_w;    // log G~ of each new block (without the test offset)
  double backward_ess = 0.0;
  std::uint64_t pair_failures = 0;
};

/// Backward update for one unit time. starts[i] is the predecessor endpoint
/// particle i was propagated from; increments is row-major N x (2^l - 1);
/// prev_F is null for the first block, where F is the particle's own Lambda~.
template <class M>
BridgeUpdate bridge_backward_update(const GuidedBridge<M>& bridge, std::span<const double> starts,
                                    const Eigen::MatrixXd* prev_F,
                                    std::span<const double> increments,
                                    std::span<const double> ends, std::span<const double> obs,
                                    const SmootherOptions& options = {}) {
  constexpr int P = M::kNumParams;
  const std::size_t n = ends.size();
  const std::size_t n_inc = obs.size() - 1;
  if (starts.size() != n || increments.size() != n * n_inc) {
    throw std::invalid_argument("bridge_backward_update: inconsistent sizes");
  }
  const bool initial = prev_F == nullptr;
  const std::size_t n_pred = initial ? 1 : n;
  BridgeUpdate out;
  out.F.resize(static_cast<Eigen::Index>(n), P);
  out.log_w.resize(static_cast<Eigen::Index>(n));
  Eigen::ArrayXd log_k(static_cast<Eigen::Index>(n_pred)), w;
  Eigen::MatrixXd lam(static_cast<Eigen::Index>(n_pred), P);
  double ess_sum = 0.0;
  std::size_t ess_count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto inc = increments.subspan(i * n_inc, n_inc);
    const auto pred = initial ? starts.subspan(i, 1) : starts;
    out.pair_failures += bridge.pair_kernels(pred, inc, ends[i], obs,
                                             std::span<double>(log_k.data(), n_pred),
                                             std::span<double>(lam.data(), n_pred * P));
    const std::size_t self = initial ? 0 : i;
    out.log_w[i] = log_k[self] == kNegInf
                       ? kNegInf
                       : log_k[self] - bridge.proposal_logpdf(starts[i], ends[i]);
    if (options.constant_lambda) {
      for (int q = 0; q < P; ++q) lam.col(q).setConstant((*options.constant_lambda)[q]);
    }
    if (initial) {
      out.F.row(i) = lam.row(0);
      continue;
    }
    if (!std::isfinite(log_k.maxCoeff())) {
      // Every pair failed, including the particle's own path: its weight is 0.
      out.F.row(i).setZero();
      continue;
    }
    ess_sum += backward_weights(log_k, w);
    ++ess_count;
    out.F.row(i) = (prev_F->transpose() * w.matrix() + lam.transpose() * w.matrix()).transpose();
  }
  out.backward_ess = ess_count ? ess_sum / static_cast<double>(ess_count) : static_cast<double>(n);
  return out;
}

template <class M>
class BridgeSmoother {
 public:
  using Params = typename M::Params;
  static constexpr int kNumParams = M::kNumParams;

  BridgeSmoother(const M& model, const Params& theta, int level, std::size_t particles,
                 double x_star, RandomStream rng, SmootherOptions options = {}, AuxSpec aux = {})
      : bridge_(model, theta, aux),
        level_(level),
        n_(particles),
        x_star_(x_star),
        rng_(std::move(rng)),
        options_(std::move(options)) {
    if (particles < 1) throw std::invalid_argument("BridgeSmoother: need at least one particle");
    if (level < 0) throw std::invalid_argument("BridgeSmoother: negative level");
    if (options_.constant_lambda && options_.constant_lambda->size() != kNumParams) {
      throw std::invalid_argument("constant_lambda has the wrong dimension");
    }
    require_admissible(model, x_star, 0);
  }

  int time() const { return time_; }
  int level() const { return level_; }
  std::size_t particles() const { return n_; }
  const Params& theta() const { return bridge_.theta(); }
  void set_theta(const Params& theta) { bridge_ = GuidedBridge<M>(bridge_.model(), theta, bridge_.aux()); }
  const CostCounters& cost() const { return cost_; }
  const Eigen::MatrixXd& F() const { return F_; }
  const Eigen::ArrayXd& log_weights() const { return log_w_; }
  const std::vector<double>& endpoints() const { return end_; }
  const GuidedBridge<M>& bridge() const { return bridge_; }

  ScoreEstimate step(std::span<const double> obs) {
    const std::size_t steps = std::size_t{1} << level_;
    if (obs.size() != steps) throw std::invalid_argument("BridgeSmoother: block size mismatch");
    const double sqrt_dt = std::sqrt(1.0 / static_cast<double>(steps));
    const std::size_t n_inc = steps - 1;

    std::vector<double> start(n_, x_star_);
    Eigen::MatrixXd prev_F;
    if (time_ > 0) {
      std::vector<double> w(n_);
      std::vector<std::size_t> anc(n_);
      normalize_log_weights(std::span<const double>(log_w_.data(), n_), w);
      multinomial_resample(w, anc, rng_);
      prev_F.resize(static_cast<Eigen::Index>(n_), kNumParams);
      for (std::size_t j = 0; j < n_; ++j) {
        start[j] = end_[anc[j]];
        prev_F.row(j) = F_.row(anc[j]);
      }
    }
    std::vector<double> inc(n_ * n_inc), end(n_);
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t s = 0; s < n_inc; ++s) inc[i * n_inc + s] = sqrt_dt * rng_.normal();
      end[i] = bridge_.proposal_sample(start[i], rng_);
    }
    BridgeUpdate upd = bridge_backward_update(bridge_, start, time_ > 0 ? &prev_F : nullptr, inc,
                                              end, obs, options_);
    upd.log_w += options_.log_weight_offset;

    CostCounters cost;
    const std::size_t pairs = time_ > 0 ? n_ * n_ : n_;
    cost.gaussian_draws += n_ * steps;
    cost.drift_evals += pairs * steps;
    cost.density_evals += pairs;

    ScoreEstimate est;
    est.value = self_normalized_estimate(upd.log_w, upd.F, &est.ess);
    F_ = std::move(upd.F);
    log_w_ = std::move(upd.log_w);
    end_ = std::move(end);
    ++time_;
    cost_ += cost;
    pair_failures_ += upd.pair_failures;
    est.time = time_;
    est.level = level_;
    est.particles = n_;
    est.backward_ess = upd.backward_ess;
    est.pair_failures = upd.pair_failures;
    est.cost = cost_;
    return est;
  }

 private:
  GuidedBridge<M> bridge_;
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
  std::uint64_t pair_failures_ = 0;
};

std::vector<ScoreEstimate> run_alg3(const ModelSpec& model, const Theta& theta,
                                    const ObsRecord& obs, int level, std::size_t particles,
                                    int horizon, double x_star, RandomStream rng,
                                    const SmootherOptions& options = {}, const AuxSpec& aux = {});

}  // namespace ctscore
