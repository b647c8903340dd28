#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "ctscore/estimation.hpp"
#include "ctscore/smoother_direct.hpp"
#include "helpers.hpp"

using namespace ctscore;
using testing::vec;

namespace {

const LinearGaussianModel kM1{2.0, 0.3};
const StochasticVolatilityModel kM4{2.0};

// Backward update written out term by term with log-sum-exp weights.
template <class M>
Eigen::MatrixXd brute_force_update(const M& model, const typename M::Params& th, double dt,
                                   double dy0, const std::vector<double>& prev_x,
                                   const Eigen::MatrixXd& prev_F, const std::vector<double>& first,
                                   const Eigen::MatrixXd& rest) {
  const std::size_t n = prev_x.size();
  Eigen::MatrixXd out(first.size(), M::kNumParams);
  for (std::size_t i = 0; i < first.size(); ++i) {
    std::vector<double> lw(n);
    for (std::size_t j = 0; j < n; ++j) {
      const double x = prev_x[j];
      const double h = model.obs_drift(th, x);
      const double mean = x + model.drift(th, x) * dt;
      const double var = model.diffusion_cov(x) * dt;
      lw[j] = h * dy0 - 0.5 * h * h * dt - 0.5 * std::log(2 * std::numbers::pi * var) -
              0.5 * (first[i] - mean) * (first[i] - mean) / var;
    }
    const double mx = *std::max_element(lw.begin(), lw.end());
    double s = 0.0;
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(M::kNumParams);
    for (std::size_t j = 0; j < n; ++j) {
      const double x = prev_x[j];
      const double w = std::exp(lw[j] - mx);
      const double b = model.drift(th, x), h = model.obs_drift(th, x);
      const Eigen::VectorXd f = model.grad_drift(th, x) * ((first[i] - x - b * dt) /
                                                           model.diffusion_cov(x)) +
                                model.grad_obs_drift(th, x) * (dy0 - h * dt);
      acc += w * (prev_F.row(j).transpose() + f);
      s += w;
    }
    out.row(i) = (acc / s + rest.row(i).transpose()).transpose();
  }
  return out;
}

std::vector<double> block(int level, std::uint64_t seed, double scale = 0.1) {
  RandomStream rng(seed);
  std::vector<double> v(std::size_t{1} << level);
  for (auto& x : v) x = scale * rng.normal();
  return v;
}

}  // namespace

TEST_CASE("g_log_weight examples") {
  // h = theta3 - x^2 / 2 = 1 at x = 0.
  CHECK(g_log_weight(kM4, StochasticVolatilityModel::Params(2.4, 0.5, 1.0), 0.0, 0.1, 0.25) ==
        doctest::Approx(-0.025));
  CHECK(g_log_weight(kM1, LinearGaussianModel::Params(-0.7, 0.0), 1.3, 0.4, 0.5) == 0.0);
  CHECK(g_log_weight(kM1, LinearGaussianModel::Params(-0.7, -0.5), 2.0, 0.4, 0.5) == 0.0);
  const ModelSpec m4 = testing::paper_model(4);
  CHECK(g_log_weight(m4, vec({2.4, 0.5, 1.0}), 0.0, 0.1, 0.25) == doctest::Approx(-0.025));
}

TEST_CASE("lambda_block_direct single step and sum over steps") {
  const LinearGaussianModel::Params th(-0.7, -0.5);
  const std::vector<double> states{0.8, 0.3};
  const std::vector<double> obs{0.25};
  const auto l = lambda_block_direct(kM1, th, std::span<const double>(states),
                                     std::span<const double>(obs));
  const double dw = (0.3 - 0.8 - (-0.7) * 0.8) / 0.3;
  CHECK(l[0] == doctest::Approx(0.8 * dw / 0.3));
  CHECK(l[1] == doctest::Approx((2.0 - 0.8) * (0.25 - (-0.5) * (2.0 - 0.8))));

  // Model 3 over four steps.
  const CirRootModel m3{1.5, 0.25};
  const CirRootModel::Params t3(2.0, 1.0, 0.45);
  const std::vector<double> xs{1.2, 1.1, 1.3, 1.25, 1.0};
  const std::vector<double> dy{0.1, -0.2, 0.05, 0.3};
  Eigen::Vector3d expect = Eigen::Vector3d::Zero();
  for (int p = 0; p < 4; ++p) {
    const double x = xs[p], dt = 0.25;
    const double b = 0.5 * ((2.0 * 1.0 - 0.0625) / x - 1.0 * x);
    const double h = 0.45 * (1.5 - x * x);
    const double r = (xs[p + 1] - x - b * dt) / 0.0625;
    expect += Eigen::Vector3d(0.5 / x, 0.5 * (2.0 / x - x), 0.0) * r +
              Eigen::Vector3d(0.0, 0.0, 1.5 - x * x) * (dy[p] - h * dt);
  }
  const auto got = lambda_block_direct(m3, t3, std::span<const double>(xs),
                                       std::span<const double>(dy));
  CHECK((got - expect).norm() < 1e-12);
  CHECK_THROWS_AS(lambda_block_direct(m3, t3, std::span<const double>(xs).first(3),
                                      std::span<const double>(dy)),
                  std::invalid_argument);
}

TEST_CASE("direct_backward_update matches the written-out mixture") {
  RandomStream rng(41);
  const int n = 17, m = 9;
  std::vector<double> prev_x(n), first(m);
  for (auto& x : prev_x) x = 0.5 * rng.normal();
  for (auto& x : first) x = 0.5 * rng.normal();
  const Eigen::MatrixXd prev_F = Eigen::MatrixXd::Random(n, 3);
  const Eigen::MatrixXd rest = Eigen::MatrixXd::Random(m, 3);
  const StochasticVolatilityModel::Params th(2.4, 0.5, 0.4);
  Eigen::MatrixXd out;
  const double ess = direct_backward_update(kM4, th, 1.0 / 32, 0.07, prev_x, prev_F, first, rest,
                                            out);
  const Eigen::MatrixXd expect = brute_force_update(kM4, th, 1.0 / 32, 0.07, prev_x, prev_F,
                                                    first, rest);
  CHECK((out - expect).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(ess >= 1.0);
  CHECK(ess <= n);

  SUBCASE("predecessor order does not matter") {
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::reverse(perm.begin(), perm.end());
    std::swap(perm[2], perm[7]);
    std::vector<double> px(n);
    Eigen::MatrixXd pF(n, 3);
    for (int j = 0; j < n; ++j) {
      px[j] = prev_x[perm[j]];
      pF.row(j) = prev_F.row(perm[j]);
    }
    Eigen::MatrixXd out2;
    direct_backward_update(kM4, th, 1.0 / 32, 0.07, px, pF, first, rest, out2);
    CHECK((out - out2).cwiseAbs().maxCoeff() < 1e-12);
  }

  SUBCASE("targets are processed independently") {
    std::vector<double> f2(first.rbegin(), first.rend());
    Eigen::MatrixXd r2 = rest.colwise().reverse();
    Eigen::MatrixXd out2;
    direct_backward_update(kM4, th, 1.0 / 32, 0.07, prev_x, prev_F, f2, r2, out2);
    CHECK((out.colwise().reverse() - out2).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("single particle estimate is its own Lambda") {
  const LinearGaussianModel::Params th(-0.4, -0.5);
  const auto obs = block(5, 3);
  DirectSmoother<LinearGaussianModel> s(kM1, th, 5, 1, 0.2, RandomStream(7));
  const ScoreEstimate e = s.step(obs);
  CHECK((e.value - s.F().row(0).transpose()).norm() == 0.0);
  CHECK(e.ess == 1.0);
  const ScoreEstimate e2 = s.step(block(5, 4));
  CHECK((e2.value - s.F().row(0).transpose()).norm() == 0.0);
}

TEST_CASE("flat observation drift gives the plain particle average") {
  const LinearGaussianModel::Params th(-0.4, 0.0);
  DirectSmoother<LinearGaussianModel> s(kM1, th, 4, 50, 0.2, RandomStream(8));
  for (int k = 0; k < 3; ++k) {
    const ScoreEstimate e = s.step(block(4, 10 + k));
    CHECK((s.log_weights() == 0.0).all());
    CHECK((e.value - s.F().colwise().mean().transpose()).norm() < 1e-12);
    CHECK(e.ess == doctest::Approx(50.0));
  }
}

TEST_CASE("constant Lambda gives F = (k + 1) c") {
  SmootherOptions opt;
  opt.constant_lambda = vec({0.3, -0.2, 1.0});
  const StochasticVolatilityModel::Params th(2.4, 0.5, 0.4);
  DirectSmoother<StochasticVolatilityModel> s(kM4, th, 3, 40, 1.3, RandomStream(9), opt);
  for (int k = 0; k < 5; ++k) {
    const ScoreEstimate e = s.step(block(3, 20 + k));
    const Eigen::RowVector3d c = (k + 1) * opt.constant_lambda->transpose();
    CHECK((s.F().rowwise() - c).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((e.value.transpose() - c).cwiseAbs().maxCoeff() < 1e-12);
  }

  opt.constant_lambda = vec({0.0, 0.0, 0.0});
  DirectSmoother<StochasticVolatilityModel> z(kM4, th, 3, 40, 1.3, RandomStream(9), opt);
  for (int k = 0; k < 3; ++k) {
    z.step(block(3, 30 + k));
    CHECK(z.F().cwiseAbs().maxCoeff() == 0.0);
  }
  opt.constant_lambda = vec({1.0});
  CHECK_THROWS_AS(
      DirectSmoother<StochasticVolatilityModel>(kM4, th, 3, 40, 1.3, RandomStream(9), opt),
      std::invalid_argument);
}

TEST_CASE("a constant log-weight shift leaves the estimates unchanged") {
  const LinearGaussianModel::Params th(-0.4, -0.5);
  SmootherOptions shifted;
  shifted.log_weight_offset = 100.0;
  DirectSmoother<LinearGaussianModel> a(kM1, th, 5, 200, 0.2, RandomStream(12));
  DirectSmoother<LinearGaussianModel> b(kM1, th, 5, 200, 0.2, RandomStream(12), shifted);
  for (int k = 0; k < 4; ++k) {
    const auto obs = block(5, 40 + k, 0.3);
    const auto ea = a.step(obs);
    const auto eb = b.step(obs);
    CHECK((ea.value - eb.value).norm() < 1e-9 * (1.0 + ea.value.norm()));
  }
}

TEST_CASE("determinism under a fixed stream") {
  const LinearGaussianModel::Params th(-0.4, -0.5);
  DirectSmoother<LinearGaussianModel> a(kM1, th, 6, 100, 0.2, RandomStream(13));
  DirectSmoother<LinearGaussianModel> b(kM1, th, 6, 100, 0.2, RandomStream(13));
  for (int k = 0; k < 3; ++k) {
    const auto obs = block(6, 50 + k);
    CHECK(a.step(obs).value == b.step(obs).value);
  }
  CHECK(a.endpoints() == b.endpoints());
}

TEST_CASE("block size and start state are checked") {
  const LinearGaussianModel::Params th(-0.4, -0.5);
  DirectSmoother<LinearGaussianModel> s(kM1, th, 4, 10, 0.2, RandomStream(1));
  CHECK_THROWS_AS(s.step(block(3, 1)), std::invalid_argument);
  const ReciprocalDriftModel m2{2.2, 0.25};
  CHECK_THROWS_AS(DirectSmoother<ReciprocalDriftModel>(m2, ReciprocalDriftModel::Params(1.3, -0.5,
                                                                                        0.18),
                                                       4, 10, -1.0, RandomStream(1)),
                  InadmissibleStateError);
}

TEST_CASE("weight collapse leaves the smoother untouched") {
  // Every path jumps below zero in its first step.
  const ReciprocalDriftModel m2{2.2, 0.25};
  const ReciprocalDriftModel::Params th(-10.0, 0.0, 0.18);
  DirectSmoother<ReciprocalDriftModel> s(m2, th, 0, 20, 0.01, RandomStream(2));
  CHECK_THROWS_AS(s.step(block(0, 1)), WeightCollapseError);
  CHECK(s.time() == 0);
}

TEST_CASE("Alg1 agrees with the Euler Kalman score") {
  const ModelSpec m1 = testing::paper_model(1);
  const Theta th = vec({-0.4, -0.5});
  const int level = 6, horizon = 2, reps = 16;
  const ObsRecord obs = testing::simulate(m1, th, level, horizon, 0.2, 77);
  const Eigen::VectorXd oracle = kb_score_fd(m1, th, obs, 0.2, 1e-5, KalmanForm::kEuler, horizon);
  std::vector<Eigen::VectorXd> finals;
  for (int r = 0; r < reps; ++r) {
    const auto est = run_alg1(m1, th, obs, level, 2000, horizon, 0.2,
                              RandomStream(5, {std::uint64_t(r), StreamRole::kTest, 0, 0}));
    REQUIRE(est.size() == std::size_t(horizon));
    finals.push_back(est.back().value);
    MESSAGE("backward ESS ", est.back().backward_ess);
  }
  const auto s = testing::mean_and_se(finals);
  for (int i = 0; i < 2; ++i) {
    INFO("coordinate ", i, " mean ", s.mean[i], " oracle ", oracle[i], " se ", s.se[i]);
    CHECK(std::abs(s.mean[i] - oracle[i]) < 3.0 * s.se[i]);
  }
}

TEST_CASE("run_alg1 matches stepping the smoother and counts N^2 work") {
  const ModelSpec m1 = testing::paper_model(1);
  const Theta th = vec({-0.4, -0.5});
  const ObsRecord obs = testing::simulate(m1, th, 7, 2, 0.2, 78);
  const auto est = run_alg1(m1, th, obs, 5, 64, 2, 0.2, RandomStream(3));
  const ObsRecord c = coarsen_obs(obs, 5);
  DirectSmoother<LinearGaussianModel> s(kM1, LinearGaussianModel::Params(-0.4, -0.5), 5, 64, 0.2,
                                        RandomStream(3));
  CHECK(s.step(c.unit_block(0)).value == est[0].value);
  CHECK(s.step(c.unit_block(1)).value == est[1].value);
  CHECK(est[1].cost.density_evals == 64u * 64u);
  CHECK(est[1].cost.drift_evals == 2u * 64u * 32u);

  const auto twice = run_alg1(m1, th, obs, 5, 128, 2, 0.2, RandomStream(3));
  CHECK(twice[1].cost.density_evals == 4 * est[1].cost.density_evals);
  CHECK_THROWS(run_alg1(m1, th, obs, 8, 64, 2, 0.2, RandomStream(3)));
}
