#pragma once

// Parameter estimation drivers (online recursive maximum likelihood and
// offline gradient ascent) and a Kalman filter oracle for model 1.

#include <Eigen/Dense>

#include <memory>
#include <span>
#include <vector>

#include "ctscore/bridge.hpp"
#include "ctscore/discretization.hpp"
#include "ctscore/model.hpp"
#include "ctscore/multilevel.hpp"
#include "ctscore/particles.hpp"
#include "ctscore/rng.hpp"

namespace ctscore {

/// alpha_k = c k^-gamma.
struct StepSchedule {
  double c = 1.0;
  double gamma = 1.0;

  double alpha(int k) const;
  /// Throws unless c > 0 and gamma in (1/2, 1].
  void validate() const;
};

enum class KalmanForm {
  /// Exact filter of the Euler-discretized linear model; the likelihood is
  /// taken relative to the law of dY under theta_2 = 0, matching the
  /// particle potentials g.
  kEuler,
  /// Euler-discretized Kalman-Bucy filter with
  /// log-likelihood sum pi(h) dY - 0.5 pi(h)^2 dt.
  kKalmanBucy,
};

/// Online linear-Gaussian filter for model 1 at the grid of the blocks it is
/// fed. Starts from the point mass at x_star.
class LinearGaussianFilter {
 public:
  LinearGaussianFilter(const LinearGaussianModel& model, const LinearGaussianModel::Params& theta,
                       double x_star, KalmanForm form = KalmanForm::kEuler);

  /// Filters one block of increments; returns the log-likelihood increment.
  double advance(std::span<const double> increments, double dt);
  void set_theta(const LinearGaussianModel::Params& theta) { theta_ = theta; }
  double mean() const { return m_; }
  double var() const { return P_; }
  double loglik() const { return loglik_; }

 private:
  LinearGaussianModel model_;
  LinearGaussianModel::Params theta_;
  KalmanForm form_;
  double m_;
  double P_ = 0.0;
  double loglik_ = 0.0;
};

/// Log-likelihood of the first `horizon` unit times of obs (all if < 0) at
/// obs.level. Throws std::invalid_argument for models other than model 1.
double kalman_bucy_loglik(const ModelSpec& model, const Theta& theta, const ObsRecord& obs,
                          double x_star, KalmanForm form = KalmanForm::kEuler, int horizon = -1);

/// Central finite-difference gradient of kalman_bucy_loglik.
Eigen::VectorXd kb_score_fd(const ModelSpec& model, const Theta& theta, const ObsRecord& obs,
                            double x_star, double h = 1e-5, KalmanForm form = KalmanForm::kEuler,
                            int horizon = -1);

enum class BackendKind { kDirect, kBridge, kMultilevel, kKalman };

struct BackendConfig {
  BackendKind kind = BackendKind::kDirect;
  int level = 8;
  std::size_t particles = 1000;
  MLConfig ml;
  AuxSpec aux;
  /// Finite-difference step of the Kalman backend.
  double fd_step = 1e-5;
};

/// A score estimator advanced one unit time at a time.
class ScoreBackend {
 public:
  virtual ~ScoreBackend() = default;
  /// block holds the unit block's increments at block_level, which must be
  /// at least the backend's level. Throws WeightCollapseError leaving the
  /// backend unchanged.
  virtual ScoreEstimate advance(std::span<const double> block, int block_level) = 0;
  /// Parameter for subsequent unit times; the particle system carries over.
  virtual void set_theta(const Theta& theta) = 0;
  virtual int time() const = 0;
  virtual int level() const = 0;
};

std::unique_ptr<ScoreBackend> make_backend(const ModelSpec& model, const Theta& theta,
                                           const BackendConfig& config, double x_star,
                                           RandomStream& rng);

struct RMLRecord {
  int time = 0;
  Theta theta;               // after the update at this time
  Eigen::VectorXd estimate;  // grad log gamma_time
  double increment_norm = 0.0;
  double step_size = 0.0;
  bool collapsed = false;  // weight collapse: no update this time
  bool rejected = false;   // update violated the joint constraint
  bool clipped = false;    // update was projected onto the box
  std::uint64_t pair_failures = 0;
};

class RMLState {
 public:
  RMLState(const ModelSpec& model, const Theta& theta0, std::unique_ptr<ScoreBackend> backend,
           const StepSchedule& schedule);

  /// theta_T = Proj[theta_{T-1} + alpha_T (est_T - est_{T-1})].
  RMLRecord step(std::span<const double> block, int block_level);
  const Theta& theta() const { return theta_; }
  int time() const { return time_; }

 private:
  ModelSpec model_;
  Theta theta_;
  std::unique_ptr<ScoreBackend> backend_;
  StepSchedule schedule_;
  Eigen::VectorXd previous_;
  int time_ = 0;
};

std::vector<RMLRecord> run_rml(const ModelSpec& model, const ObsRecord& obs,
                               const BackendConfig& backend, const StepSchedule& schedule,
                               const Theta& theta0, int horizon, double x_star, RandomStream& rng);

/// theta^{m+1} = Proj[theta^m + alpha_{m+1} S(theta^m)] with S the backend's
/// score over the first `horizon` unit times. Returns theta^0 .. theta^M.
std::vector<Theta> offline_gradient(const ModelSpec& model, const ObsRecord& obs,
                                    const BackendConfig& backend, const StepSchedule& schedule,
                                    const Theta& theta0, int iterations, int horizon,
                                    double x_star, RandomStream& rng);

}  // namespace ctscore
