#pragma once

// Guided diffusion bridges on a unit interval.
//
// The auxiliary process is driftless with diffusion coefficient frozen at the
// target, dX~ = sqrt(a(x')) dW, so that its transition density from (x, t)
// to (x', 1) is N(x'; x, (1 - t) a(x')). Endpoints are proposed from
// N(x, s a(x)) with s = AuxSpec::proposal_scale. For constant-diffusion
// models and s = 1 the proposal coincides with the auxiliary density.
//
// A block on level l carries 2^l - 1 Brownian increments (variance 2^-l) and
// the endpoint. The Euler recursion for the guided SDE is run for
// s = 0 .. 2^l - 2; the last grid point is the endpoint itself.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>

#include "ctscore/model.hpp"
#include "ctscore/rng.hpp"

namespace ctscore {

struct AuxSpec {
  double proposal_scale = 1.0;
};

/// The auxiliary process and endpoint proposal used for every built-in model.
inline AuxSpec default_aux(const ModelSpec&) { return AuxSpec{}; }

template <int P>
struct BlockFunctionals {
  double psi = 0.0;        // Riemann sum of L over the block
  double obs_term = 0.0;   // sum h dY - 0.5 h^2 dt
  double log_ratio = 0.0;  // log p~(x_k, x_{k+1}) - log p^(x_k, x_{k+1})
  ParamVec<P> lambda = ParamVec<P>::Zero();

  /// Log of the block weight G~.
  double phi() const { return obs_term + psi + log_ratio; }
};

template <class M>
class GuidedBridge {
 public:
  using Params = typename M::Params;
  static constexpr int kNumParams = M::kNumParams;
  /// Starts processed together by pair_kernels.
  static constexpr std::size_t kChunk = 64;

  GuidedBridge(const M& model, const Params& theta, AuxSpec aux = {})
      : model_(model), theta_(theta), aux_(aux) {
    if (!(aux.proposal_scale > 0.0)) throw std::invalid_argument("proposal_scale must be > 0");
  }

  const M& model() const { return model_; }
  const Params& theta() const { return theta_; }
  const AuxSpec& aux() const { return aux_; }

  double aux_cov(double /*t*/, double /*x*/, double target) const {
    return model_.diffusion_cov(target);
  }
  double aux_drift(double /*t*/, double /*x*/) const { return 0.0; }

  double log_tilde_p(double x, double t, double target) const {
    const double v = (1.0 - t) * aux_cov(t, x, target);
    const double r = target - x;
    return -0.5 * std::log(2.0 * std::numbers::pi * v) - 0.5 * r * r / v;
  }
  double grad_log_tilde_p(double x, double t, double target) const {
    return (target - x) / ((1.0 - t) * aux_cov(t, x, target));
  }
  double hess_log_tilde_p(double x, double t, double target) const {
    return -1.0 / ((1.0 - t) * aux_cov(t, x, target));
  }

  /// b(x) + a(x) d/dx log p~(x, t; target, 1). Singular at t = 1.
  double guided_drift(double t, double x, double target) const {
    if (!(t < 1.0)) throw std::domain_error("guided_drift: t must be < 1");
    return model_.drift(theta_, x) + model_.diffusion_cov(x) * grad_log_tilde_p(x, t, target);
  }

  /// The integrand of the bridge likelihood ratio.
  double L(double t, double x, double target) const {
    if (!(t < 1.0)) throw std::domain_error("L: t must be < 1");
    const double s = grad_log_tilde_p(x, t, target);
    const double hess = hess_log_tilde_p(x, t, target);
    const double da = model_.diffusion_cov(x) - aux_cov(t, x, target);
    return (model_.drift(theta_, x) - aux_drift(t, x)) * s - 0.5 * da * (-hess - s * s);
  }

  double proposal_logpdf(double from, double to) const {
    const double v = aux_.proposal_scale * model_.diffusion_cov(from);
    const double r = to - from;
    return -0.5 * std::log(2.0 * std::numbers::pi * v) - 0.5 * r * r / v;
  }
  double proposal_sample(double from, RandomStream& rng) const {
    return from + std::sqrt(aux_.proposal_scale * model_.diffusion_cov(from)) * rng.normal();
  }

  /// path[0] = start, path[s] for s = 1 .. 2^l - 1 from the guided Euler
  /// recursion, path[2^l] = end. Throws InadmissibleStateError on exit from
  /// the model's state region.
  void reconstruct(double start, std::span<const double> increments, double end,
                   std::span<double> path) const {
    const std::size_t n = increments.size() + 1;
    if (path.size() != n + 1) throw std::invalid_argument("reconstruct: path size");
    const double dt = 1.0 / static_cast<double>(n);
    require_admissible(model_, start, 0);
    path[0] = start;
    for (std::size_t s = 0; s + 1 < n; ++s) {
      const double x = path[s];
      const double t = static_cast<double>(s) * dt;
      path[s + 1] = x + guided_drift(t, x, end) * dt + model_.diffusion(x) * increments[s];
      require_admissible(model_, path[s + 1], s + 1);
    }
    require_admissible(model_, end, n);
    path[n] = end;
  }

  /// Psi, J, the log density ratio and Lambda~ for one block. Throws
  /// InadmissibleStateError if the reconstructed path is inadmissible.
  BlockFunctionals<kNumParams> functionals(double start, std::span<const double> increments,
                                           double end, std::span<const double> obs) const {
    check_block(increments, obs);
    double psi = 0.0, obs_term = 0.0;
    std::array<double, kNumParams> lam{};
    bool bad = false;
    chunk(&start, 1, increments, end, obs, &psi, &obs_term, lam.data(), 1, &bad);
    if (bad) throw InadmissibleStateError("bridge path outside admissible region", 0);
    BlockFunctionals<kNumParams> out;
    out.psi = psi;
    out.obs_term = obs_term;
    out.log_ratio = log_tilde_p(start, 0.0, end) - proposal_logpdf(start, end);
    for (int q = 0; q < kNumParams; ++q) out.lambda[q] = lam[q];
    return out;
  }

  /// Backward-kernel ingredients for one target block and many predecessor
  /// endpoints: log_kernel[j] = J + Psi + log p~(starts[j], end), i.e. the
  /// log of G~ * p^, and Lambda~ in lambda[q * starts.size() + j]. Pairs
  /// whose path is inadmissible get log_kernel = -inf and Lambda~ = 0.
  /// Returns the number of such pairs.
  std::size_t pair_kernels(std::span<const double> starts, std::span<const double> increments,
                           double end, std::span<const double> obs, std::span<double> log_kernel,
                           std::span<double> lambda) const {
    check_block(increments, obs);
    const std::size_t n = starts.size();
    std::array<double, kChunk> psi, obs_term;
    std::array<double, kChunk * kNumParams> lam;
    std::array<bool, kChunk> bad;
    std::size_t failures = 0;
    for (std::size_t base = 0; base < n; base += kChunk) {
      const std::size_t count = std::min(kChunk, n - base);
      chunk(starts.data() + base, count, increments, end, obs, psi.data(), obs_term.data(),
            lam.data(), kChunk, bad.data());
      for (std::size_t j = 0; j < count; ++j) {
        const double x0 = starts[base + j];
        if (bad[j]) {
          ++failures;
          log_kernel[base + j] = -std::numeric_limits<double>::infinity();
          for (int q = 0; q < kNumParams; ++q) lambda[q * n + base + j] = 0.0;
          continue;
        }
        log_kernel[base + j] = obs_term[j] + psi[j] + log_tilde_p(x0, 0.0, end);
        for (int q = 0; q < kNumParams; ++q) lambda[q * n + base + j] = lam[q * kChunk + j];
      }
    }
    return failures;
  }

 private:
  static void check_block(std::span<const double> increments, std::span<const double> obs) {
    if (obs.empty() || increments.size() + 1 != obs.size()) {
      throw std::invalid_argument("bridge block: expected 2^l - 1 increments and 2^l observations");
    }
  }

  // Runs `count` bridges from starts[0..count) side by side. Arrays are
  // laid out with stride `stride` per parameter coordinate.
  void chunk(const double* starts, std::size_t count, std::span<const double> increments,
             double end, std::span<const double> obs, double* psi, double* obs_term, double* lam,
             std::size_t stride, bool* bad) const {
    const std::size_t n = obs.size();
    const double dt = 1.0 / static_cast<double>(n);
    const double a_end = aux_cov(1.0, end, end);
    const bool end_ok = model_.admissible(end);
    alignas(64) std::array<double, kChunk> x, lowest;
    for (std::size_t j = 0; j < count; ++j) {
      x[j] = starts[j];
      lowest[j] = starts[j];
      psi[j] = 0.0;
      obs_term[j] = 0.0;
      for (int q = 0; q < kNumParams; ++q) lam[q * stride + j] = 0.0;
    }
    for (std::size_t s = 0; s + 1 < n; ++s) {
      advance<false>(x.data(), lowest.data(), count, static_cast<double>(s) * dt, dt, a_end, end,
                     obs[s], increments[s], psi, obs_term, lam, stride);
    }
    advance<true>(x.data(), lowest.data(), count, static_cast<double>(n - 1) * dt, dt, a_end, end,
                  obs[n - 1], 0.0, psi, obs_term, lam, stride);
    // Every built-in state space is an interval unbounded above, so the path
    // stayed admissible iff its lowest point did and nothing overflowed.
    for (std::size_t j = 0; j < count; ++j) {
      double total = psi[j] + obs_term[j];
      for (int q = 0; q < kNumParams; ++q) total += lam[q * stride + j];
      bad[j] = !end_ok || !model_.admissible(lowest[j]) || !std::isfinite(total);
    }
  }

  // One Euler step of every bridge in the chunk. On the last step the next
  // state is the endpoint.
  template <bool kLast>
  void advance(double* x, double* lowest, std::size_t count, double t, double dt,
               double a_end, double end, double dy, double z, double* psi, double* obs_term,
               double* lam, std::size_t stride) const {
    const double c = 1.0 / ((1.0 - t) * a_end);
    const double inv_a_end = 1.0 / a_end;
#pragma GCC ivdep
    for (std::size_t j = 0; j < count; ++j) {
      const double xj = x[j];
      const double b = model_.drift(theta_, xj);
      const double score = (end - xj) * c;
      double a, inv_a;
      if constexpr (M::kConstantDiffusion) {
        a = a_end;
        inv_a = inv_a_end;
        psi[j] += b * score * dt;
      } else {
        a = model_.diffusion_cov(xj);
        inv_a = 1.0 / a;
        psi[j] += (b * score - 0.5 * (a - a_end) * (c - score * score)) * dt;
      }
      const double h = model_.obs_drift(theta_, xj);
      obs_term[j] += h * dy - 0.5 * h * h * dt;
      double next;
      if constexpr (kLast) {
        next = end;
      } else {
        const double sd = M::kConstantDiffusion ? model_.diffusion(end) : model_.diffusion(xj);
        next = xj + (b + a * score) * dt + sd * z;
      }
      const double resid = (next - xj - b * dt) * inv_a;
      const double innov = dy - h * dt;
      const Params gb = model_.grad_drift(theta_, xj);
      const Params gh = model_.grad_obs_drift(theta_, xj);
      for (int q = 0; q < kNumParams; ++q) {
        lam[q * stride + j] += gb[q] * resid + gh[q] * innov;
      }
      if constexpr (!kLast) {
        x[j] = next;
        lowest[j] = next < lowest[j] ? next : lowest[j];
      }
    }
  }

  M model_;
  Params theta_;
  AuxSpec aux_;
};

}  // namespace ctscore
