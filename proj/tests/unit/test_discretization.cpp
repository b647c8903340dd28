#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "ctscore/discretization.hpp"

using namespace ctscore;

namespace {

Theta vec(std::initializer_list<double> v) {
  Theta t(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) t[i++] = x;
  return t;
}

const ModelSpec kModel1 = builtin_model(1, {{"kappa", 2.0}, {"sigma", 0.3}});

struct Moments {
  double mean = 0.0, var = 0.0;
  std::size_t n = 0;
};

Moments moments(const std::vector<double>& v) {
  Moments m;
  m.n = v.size();
  for (double x : v) m.mean += x;
  m.mean /= static_cast<double>(m.n);
  for (double x : v) m.var += (x - m.mean) * (x - m.mean);
  m.var /= static_cast<double>(m.n - 1);
  return m;
}

}  // namespace

TEST_CASE("grid arithmetic") {
  const Grid g{5, 3};
  CHECK(g.step() * static_cast<double>(g.steps_per_unit()) == 1.0);
  CHECK(g.total_steps() == 96);
}

TEST_CASE("euler_step examples") {
  CHECK(euler_step(kModel1, vec({-0.7, -0.5}), 1.0, 0.25, 0.0) == doctest::Approx(0.825));
  CHECK(euler_step(kModel1, vec({0.0, -0.5}), 1.7, 0.25, 0.0) == 1.7);
  CHECK(euler_step(kModel1, vec({-0.7, -0.5}), 1.0, 0.25, 2.0) == doctest::Approx(1.125));
}

TEST_CASE("simulate_hidden shape and determinism") {
  RandomStream a(3), b(3);
  const HiddenPath p = simulate_hidden(kModel1, vec({-0.7, -0.5}), Grid{0, 1}, 0.2, a);
  CHECK(p.values.size() == 2);
  CHECK(p.brownian.size() == 1);
  CHECK(p.values[0] == 0.2);
  CHECK(p.values[1] == doctest::Approx(0.2 - 0.7 * 0.2 + 0.3 * p.brownian[0]));

  RandomStream c(9), d(9);
  const HiddenPath q1 = simulate_hidden(kModel1, vec({-0.7, -0.5}), Grid{6, 2}, 0.2, c);
  const HiddenPath q2 = simulate_hidden(kModel1, vec({-0.7, -0.5}), Grid{6, 2}, 0.2, d);
  CHECK(q1.values == q2.values);
  CHECK(q1.values.size() == 2 * 64 + 1);
  CHECK(q1.horizon() == 2);
}

TEST_CASE("simulate_hidden reports the step that leaves the state space") {
  const ModelSpec m2 = builtin_model(2, {{"kappa", 2.2}, {"sigma", 0.25}});
  std::vector<double> normals(4, -50.0);
  try {
    simulate_hidden_from_normals(m2, vec({1.3, -0.5, 0.18}), Grid{2, 1}, 1.0, normals);
    FAIL("expected an inadmissible state");
  } catch (const InadmissibleStateError& e) {
    CHECK(e.step() == 1);
  }
}

TEST_CASE("Euler chain variance matches the exact AR(1) recursion") {
  // x_{k+1} = (1 + theta dt) x_k + sigma sqrt(dt) z_k
  const double theta1 = -0.7, sigma = 0.3, x0 = 0.2;
  const int level = 8, horizon = 5, reps = 10000;
  const double dt = std::ldexp(1.0, -level);
  const double r = 1.0 + theta1 * dt;
  const int steps = horizon << level;
  double var = 0.0;
  for (int i = 0; i < steps; ++i) var += std::pow(r, 2.0 * i);
  var *= sigma * sigma * dt;
  const double mean = x0 * std::pow(r, steps);

  std::vector<double> finals;
  RandomStream rng(17);
  for (int k = 0; k < reps; ++k) {
    finals.push_back(
        simulate_hidden(kModel1, vec({theta1, -0.5}), Grid{level, horizon}, x0, rng).values.back());
  }
  const Moments m = moments(finals);
  const double se_var = var * std::sqrt(2.0 / (reps - 1));
  CHECK(std::abs(m.var - var) < 3.0 * se_var);
  CHECK(std::abs(m.mean - mean) < 3.0 * std::sqrt(var / reps));
}

TEST_CASE("coarse noise gives the same law as direct simulation") {
  const int level = 4, horizon = 2, reps = 10000;
  const Theta th = vec({-0.7, -0.5});
  const std::size_t fine_steps = std::size_t(horizon) << (level + 1);
  std::vector<double> a, b;
  RandomStream rng(23);
  for (int k = 0; k < reps; ++k) {
    std::vector<double> fine(fine_steps), coarse(fine_steps / 2);
    for (auto& z : fine) z = rng.normal();
    for (std::size_t j = 0; j < coarse.size(); ++j) {
      coarse[j] = (fine[2 * j] + fine[2 * j + 1]) / std::numbers::sqrt2;
    }
    a.push_back(simulate_hidden_from_normals(kModel1, th, Grid{level, horizon}, 0.2, coarse)
                    .values.back());
    b.push_back(simulate_hidden(kModel1, th, Grid{level, horizon}, 0.2, rng).values.back());
  }
  const Moments ma = moments(a), mb = moments(b);
  CHECK(std::abs(ma.mean - mb.mean) < 3.0 * std::sqrt(ma.var / reps + mb.var / reps));
  const double se = std::sqrt(2.0 / (reps - 1)) * std::hypot(ma.var, mb.var);
  CHECK(std::abs(ma.var - mb.var) < 3.0 * se);
}

TEST_CASE("observations") {
  RandomStream rng(5);
  const Theta flat = vec({-0.7, 0.0});
  const HiddenPath h = simulate_hidden(kModel1, flat, Grid{6, 20}, 0.2, rng);
  const ObsRecord o = simulate_observations(kModel1, flat, h, 1.5, rng);
  CHECK(o.increments.size() == 20 * 64);
  CHECK(o.level == 6);
  CHECK(o.horizon == 20);
  CHECK(o.path().front() == 1.5);
  const double dt = 1.0 / 64;
  std::vector<double> scaled;
  for (double dy : o.increments) scaled.push_back(dy / std::sqrt(dt));
  const Moments m = moments(scaled);
  CHECK(std::abs(m.mean) < 3.0 / std::sqrt(double(m.n)));
  CHECK(std::abs(m.var - 1.0) < 3.0 * std::sqrt(2.0 / (m.n - 1)));

  // dY / dt - h(x) is pure noise with variance 1 / dt.
  const Theta th = vec({-0.7, -0.5});
  RandomStream r2(6), r3(6);
  const HiddenPath h2 = simulate_hidden(kModel1, th, Grid{6, 200}, 0.2, r2);
  const ObsRecord o2 = simulate_observations(kModel1, th, h2, 0.0, r2);
  double resid = 0.0;
  for (std::size_t k = 0; k < o2.increments.size(); ++k) {
    resid += o2.increments[k] / dt - kModel1.obs_drift(th, h2.values[k]);
  }
  resid /= static_cast<double>(o2.increments.size());
  CHECK(std::abs(resid) < 3.0 * std::sqrt(1.0 / dt / o2.increments.size()));

  const HiddenPath h3 = simulate_hidden(kModel1, th, Grid{6, 200}, 0.2, r3);
  const ObsRecord o3 = simulate_observations(kModel1, th, h3, 0.0, r3);
  CHECK(o2.increments == o3.increments);
}

TEST_CASE("coarsen_obs") {
  ObsRecord o{1, 2, 0.0, {0.1, 0.2, 0.3, 0.4}};
  const ObsRecord c = coarsen_obs(o, 0);
  REQUIRE(c.increments.size() == 2);
  CHECK(c.increments[0] == doctest::Approx(0.3));
  CHECK(c.increments[1] == doctest::Approx(0.7));
  CHECK(coarsen_obs(o, 1).increments == o.increments);
  CHECK_THROWS_AS(coarsen_obs(o, 2), std::invalid_argument);

  RandomStream rng(8);
  ObsRecord big{7, 3, 0.0, {}};
  for (int k = 0; k < 3 * 128; ++k) big.increments.push_back(rng.normal());
  double total = 0.0;
  for (double v : big.increments) total += v;
  for (int l2 = 0; l2 <= 7; ++l2) {
    const ObsRecord direct = coarsen_obs(big, l2);
    double s = 0.0;
    for (double v : direct.increments) s += v;
    CHECK(s == doctest::Approx(total).epsilon(1e-12));
    for (int l1 = l2; l1 <= 7; ++l1) {
      CHECK(coarsen_obs(coarsen_obs(big, l1), l2).increments == direct.increments);
    }
    // Block j is the sum of the fine increments it covers.
    const std::size_t w = std::size_t{1} << (7 - l2);
    for (std::size_t j = 0; j < direct.increments.size(); ++j) {
      double sum = 0.0;
      for (std::size_t k = j * w; k < (j + 1) * w; ++k) sum += big.increments[k];
      CHECK(direct.increments[j] == doctest::Approx(sum).epsilon(1e-12));
    }
  }
}

TEST_CASE("euler transition density") {
  const ModelSpec unit = builtin_model(1, {{"kappa", 0.0}, {"sigma", 1.0}});
  CHECK(euler_transition_logdensity(unit, vec({0.0, 0.0}), 0.4, 0.4, 1.0) ==
        doctest::Approx(-0.5 * std::log(2.0 * std::numbers::pi)));
  CHECK(euler_transition_logdensity(kModel1, vec({-0.7, -0.5}), 1.0, 0.9125, 0.125) ==
        doctest::Approx(-0.5 * std::log(2.0 * std::numbers::pi * 0.01125)));

  // Trapezoid quadrature over +-12 standard deviations.
  const double mean = 0.9125, sd = std::sqrt(0.01125);
  const int n = 200000;
  const double lo = mean - 12 * sd, hi = mean + 12 * sd, h = (hi - lo) / n;
  double integral = 0.0;
  for (int k = 0; k <= n; ++k) {
    const double w = (k == 0 || k == n) ? 0.5 : 1.0;
    integral += w * std::exp(euler_transition_logdensity(kModel1, vec({-0.7, -0.5}), 1.0,
                                                          lo + k * h, 0.125));
  }
  CHECK(std::abs(integral * h - 1.0) < 1e-6);

  // Maximized at x + b(x) dt.
  double best = -1e300, arg = 0.0;
  for (int k = -1000; k <= 1000; ++k) {
    const double x = mean + k * 1e-4;
    const double v = euler_transition_logdensity(kModel1, vec({-0.7, -0.5}), 1.0, x, 0.125);
    if (v > best) {
      best = v;
      arg = x;
    }
  }
  CHECK(arg == doctest::Approx(mean).epsilon(1e-9));
}

TEST_CASE("price CSV ingestion") {
  const auto path = std::filesystem::temp_directory_path() / "ctscore_prices.csv";
  {
    std::ofstream out(path);
    out << "price\n";
    for (int k = 0; k <= 9; ++k) out << 100.0 + k * k << "\n";
  }
  const ObsRecord o = load_price_csv(path.string(), 4, false);
  CHECK(o.level == 2);
  CHECK(o.horizon == 2);  // 9 increments, trailing partial unit dropped
  REQUIRE(o.increments.size() == 8);
  CHECK(o.y0 == 100.0);
  for (int k = 0; k < 8; ++k) CHECK(o.increments[k] == doctest::Approx(2.0 * k + 1.0));

  const ObsRecord l = load_price_csv(path.string(), 4, true);
  CHECK(l.y0 == doctest::Approx(std::log(100.0)));
  CHECK(l.increments[0] == doctest::Approx(std::log(101.0) - std::log(100.0)));
  CHECK_THROWS(load_price_csv(path.string(), 3, false));
  std::filesystem::remove(path);
}
