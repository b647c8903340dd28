#include "ctscore/estimation.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "ctscore/smoother_bridge.hpp"
#include "ctscore/smoother_direct.hpp"

namespace ctscore {

double StepSchedule::alpha(int k) const {
  if (k < 1) throw std::invalid_argument("StepSchedule: index starts at 1");
  return c * std::pow(static_cast<double>(k), -gamma);
}

void StepSchedule::validate() const {
  if (!(c > 0.0)) throw std::invalid_argument("step schedule: c must be > 0");
  if (!(gamma > 0.5 && gamma <= 1.0)) {
    throw std::invalid_argument("step schedule: gamma must lie in (1/2, 1]");
  }
}

LinearGaussianFilter::LinearGaussianFilter(const LinearGaussianModel& model,
                                           const LinearGaussianModel::Params& theta,
                                           double x_star, KalmanForm form)
    : model_(model), theta_(theta), form_(form), m_(x_star) {}

double LinearGaussianFilter::advance(std::span<const double> increments, double dt) {
  const double t1 = theta_[0], t2 = theta_[1];
  const double kappa = model_.kappa, s2 = model_.sigma * model_.sigma;
  double ll = 0.0;
  for (double dy : increments) {
    if (form_ == KalmanForm::kEuler) {
      // dY = t2 kappa dt - t2 dt x + sqrt(dt) e, then x' = (1 + t1 dt) x + sigma sqrt(dt) z.
      const double H = -t2 * dt;
      const double S = H * H * P_ + dt;
      const double v = dy - t2 * kappa * dt - H * m_;
      ll += -0.5 * std::log(S / dt) - 0.5 * v * v / S + 0.5 * dy * dy / dt;
      const double K = P_ * H / S;
      const double m_post = m_ + K * v;
      const double P_post = P_ - K * H * P_;
      const double A = 1.0 + t1 * dt;
      m_ = A * m_post;
      P_ = A * A * P_post + s2 * dt;
    } else {
      const double h = t2 * (kappa - m_);
      ll += h * dy - 0.5 * h * h * dt;
      const double m_next = m_ + t1 * m_ * dt - t2 * P_ * (dy - h * dt);
      P_ += (2.0 * t1 * P_ + s2 - t2 * t2 * P_ * P_) * dt;
      m_ = m_next;
    }
  }
  loglik_ += ll;
  return ll;
}

namespace {

const LinearGaussianModel& require_model1(const ModelSpec& model) {
  const auto* m = std::get_if<LinearGaussianModel>(&model.variant());
  if (!m) throw std::invalid_argument("the Kalman oracle applies to model 1 only");
  return *m;
}

}  // namespace

double kalman_bucy_loglik(const ModelSpec& model, const Theta& theta, const ObsRecord& obs,
                          double x_star, KalmanForm form, int horizon) {
  const auto& m = require_model1(model);
  const int T = horizon < 0 ? obs.horizon : horizon;
  if (T > obs.horizon) throw std::invalid_argument("kalman_bucy_loglik: horizon exceeds data");
  LinearGaussianFilter filter(m, to_params<LinearGaussianModel>(theta), x_star, form);
  const std::size_t n = static_cast<std::size_t>(T) * obs.steps_per_unit();
  return filter.advance(std::span<const double>(obs.increments).first(n),
                        std::ldexp(1.0, -obs.level));
}

Eigen::VectorXd kb_score_fd(const ModelSpec& model, const Theta& theta, const ObsRecord& obs,
                            double x_star, double h, KalmanForm form, int horizon) {
  require_model1(model);
  Eigen::VectorXd g(theta.size());
  for (Eigen::Index q = 0; q < theta.size(); ++q) {
    Theta up = theta, down = theta;
    up[q] += h;
    down[q] -= h;
    g[q] = (kalman_bucy_loglik(model, up, obs, x_star, form, horizon) -
            kalman_bucy_loglik(model, down, obs, x_star, form, horizon)) /
           (2.0 * h);
  }
  return g;
}

namespace {

std::span<const double> at_level(std::span<const double> block, int block_level, int level,
                                 std::vector<double>& buffer) {
  if (block_level < level || block.size() != (std::size_t{1} << block_level)) {
    throw std::invalid_argument("backend: block is coarser than the backend level");
  }
  if (block_level == level) return block;
  buffer = coarsen_increments(block, block_level - level);
  return buffer;
}

template <class M, template <class> class S>
class SingleLevelBackend final : public ScoreBackend {
 public:
  template <class... Args>
  explicit SingleLevelBackend(Args&&... args) : smoother_(std::forward<Args>(args)...) {}

  ScoreEstimate advance(std::span<const double> block, int block_level) override {
    std::vector<double> buffer;
    return smoother_.step(at_level(block, block_level, smoother_.level(), buffer));
  }
  void set_theta(const Theta& theta) override { smoother_.set_theta(to_params<M>(theta)); }
  int time() const override { return smoother_.time(); }
  int level() const override { return smoother_.level(); }

 private:
  S<M> smoother_;
};

template <class M>
class MultilevelBackend final : public ScoreBackend {
 public:
  MultilevelBackend(const M& model, const typename M::Params& theta, const MLConfig& config,
                    double x_star, RandomStream& rng, const AuxSpec& aux)
      : ml_(model, theta, config, x_star, rng, aux) {}

  ScoreEstimate advance(std::span<const double> block, int block_level) override {
    return ml_.step(block, block_level);
  }
  void set_theta(const Theta& theta) override { ml_.set_theta(to_params<M>(theta)); }
  int time() const override { return ml_.time(); }
  int level() const override { return ml_.config().L; }

 private:
  MultilevelEstimator<M> ml_;
};

/// Filters at theta and theta +- h e_q, carried forward as theta moves.
class KalmanBackend final : public ScoreBackend {
 public:
  KalmanBackend(const LinearGaussianModel& model, const Theta& theta, int level, double x_star,
                double h)
      : model_(model), level_(level), h_(h) {
    for (int s = 0; s < 2 * LinearGaussianModel::kNumParams; ++s) {
      filters_.emplace_back(model, LinearGaussianModel::Params::Zero(), x_star);
    }
    set_theta(theta);
  }

  ScoreEstimate advance(std::span<const double> block, int block_level) override {
    std::vector<double> buffer;
    const auto data = at_level(block, block_level, level_, buffer);
    const double dt = std::ldexp(1.0, -level_);
    for (auto& f : filters_) f.advance(data, dt);
    ScoreEstimate est;
    est.value.resize(LinearGaussianModel::kNumParams);
    for (int q = 0; q < LinearGaussianModel::kNumParams; ++q) {
      est.value[q] = (filters_[2 * q].loglik() - filters_[2 * q + 1].loglik()) / (2.0 * h_);
    }
    est.time = ++time_;
    est.level = level_;
    return est;
  }
  void set_theta(const Theta& theta) override {
    const auto th = to_params<LinearGaussianModel>(theta);
    for (int q = 0; q < LinearGaussianModel::kNumParams; ++q) {
      auto up = th, down = th;
      up[q] += h_;
      down[q] -= h_;
      filters_[2 * q].set_theta(up);
      filters_[2 * q + 1].set_theta(down);
    }
  }
  int time() const override { return time_; }
  int level() const override { return level_; }

 private:
  LinearGaussianModel model_;
  int level_;
  double h_;
  int time_ = 0;
  std::vector<LinearGaussianFilter> filters_;
};

}  // namespace

std::unique_ptr<ScoreBackend> make_backend(const ModelSpec& model, const Theta& theta,
                                           const BackendConfig& config, double x_star,
                                           RandomStream& rng) {
  if (!validate_theta(model, theta)) throw std::invalid_argument("theta outside the model domain");
  if (config.kind == BackendKind::kKalman) {
    return std::make_unique<KalmanBackend>(require_model1(model), theta, config.level, x_star,
                                           config.fd_step);
  }
  return model.visit([&](const auto& m) -> std::unique_ptr<ScoreBackend> {
    using M = std::decay_t<decltype(m)>;
    const auto th = to_params<M>(theta);
    RandomStream stream(rng.engine()());
    switch (config.kind) {
      case BackendKind::kDirect:
        return std::make_unique<SingleLevelBackend<M, DirectSmoother>>(
            m, th, config.level, config.particles, x_star, std::move(stream), SmootherOptions{});
      case BackendKind::kBridge:
        return std::make_unique<SingleLevelBackend<M, BridgeSmoother>>(
            m, th, config.level, config.particles, x_star, std::move(stream), SmootherOptions{},
            config.aux);
      case BackendKind::kMultilevel:
        return std::make_unique<MultilevelBackend<M>>(m, th, config.ml, x_star, stream,
                                                      config.aux);
      default:
        throw std::invalid_argument("unknown backend");
    }
  });
}

RMLState::RMLState(const ModelSpec& model, const Theta& theta0,
                   std::unique_ptr<ScoreBackend> backend, const StepSchedule& schedule)
    : model_(model),
      theta_(theta0),
      backend_(std::move(backend)),
      schedule_(schedule),
      previous_(Eigen::VectorXd::Zero(theta0.size())) {
  if (!validate_theta(model, theta0)) throw std::invalid_argument("initial theta outside domain");
}

RMLRecord RMLState::step(std::span<const double> block, int block_level) {
  RMLRecord rec;
  ScoreEstimate est;
  try {
    est = backend_->advance(block, block_level);
  } catch (const WeightCollapseError&) {
    // The backend is unchanged; rerun the block with fresh randomness and
    // skip this time's update.
    rec.collapsed = true;
    est = backend_->advance(block, block_level);
  }
  ++time_;
  rec.time = time_;
  rec.estimate = est.value;
  rec.pair_failures = est.pair_failures;
  const Eigen::VectorXd increment = est.value - previous_;
  previous_ = est.value;
  rec.increment_norm = increment.norm();
  rec.step_size = schedule_.alpha(time_);
  if (!rec.collapsed) {
    const Theta proposal = theta_ + rec.step_size * increment;
    const Theta projected = model_.domain().project(proposal);
    rec.clipped = (projected.array() != proposal.array()).any();
    if (validate_theta(model_, projected)) {
      theta_ = projected;
      backend_->set_theta(theta_);
    } else {
      rec.rejected = true;
    }
  }
  rec.theta = theta_;
  return rec;
}

std::vector<RMLRecord> run_rml(const ModelSpec& model, const ObsRecord& obs,
                               const BackendConfig& backend, const StepSchedule& schedule,
                               const Theta& theta0, int horizon, double x_star, RandomStream& rng) {
  schedule.validate();
  if (horizon < 1 || horizon > obs.horizon) throw std::invalid_argument("run_rml: bad horizon");
  RMLState state(model, theta0, make_backend(model, theta0, backend, x_star, rng), schedule);
  std::vector<RMLRecord> out;
  out.reserve(horizon);
  for (int k = 0; k < horizon; ++k) out.push_back(state.step(obs.unit_block(k), obs.level));
  return out;
}

std::vector<Theta> offline_gradient(const ModelSpec& model, const ObsRecord& obs,
                                    const BackendConfig& backend, const StepSchedule& schedule,
                                    const Theta& theta0, int iterations, int horizon,
                                    double x_star, RandomStream& rng) {
  if (!(schedule.c > 0.0) || !(schedule.gamma > 0.0)) {
    throw std::invalid_argument("offline_gradient: step schedule needs c > 0 and gamma > 0");
  }
  if (horizon < 1 || horizon > obs.horizon) {
    throw std::invalid_argument("offline_gradient: bad horizon");
  }
  if (!validate_theta(model, theta0)) throw std::invalid_argument("initial theta outside domain");
  std::vector<Theta> out{theta0};
  Theta theta = theta0;
  for (int m = 0; m < iterations; ++m) {
    auto b = make_backend(model, theta, backend, x_star, rng);
    ScoreEstimate est;
    for (int k = 0; k < horizon; ++k) est = b->advance(obs.unit_block(k), obs.level);
    const Theta next = model.domain().project(theta + schedule.alpha(m + 1) * est.value);
    if (validate_theta(model, next)) theta = next;
    out.push_back(theta);
  }
  return out;
}

}  // namespace ctscore
