// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "semflow/ode_flow.hpp"
#include "semflow/param_set.hpp"

using namespace semflow;

namespace {

// Linear-flow change of variables computed without the integrator.
RowVector linear_logp_oracle(const Matrix& a, const Matrix& w, double span) {
  const Matrix z1 = (a * span).exp() * w;
  const double d = static_cast<double>(w.rows());
  RowVector out(w.cols());
  for (Eigen::Index c = 0; c < w.cols(); ++c) {
    out(c) = -0.5 * z1.col(c).squaredNorm() - 0.5 * d * std::log(2 * std::numbers::pi) + a.trace() * span;
  }
  return out;
}

double round_trip_error(const DynamicsNet& net, const Matrix& w, const Matrix& s, int steps) {
  IntegratorConfig cfg;
  cfg.steps = steps;
  const Matrix z1 = integrate_inverse(net, w, s, cfg, false).z1;
  return (edit(net, z1, s, cfg) - w).cwiseAbs().maxCoeff();
}

}  // namespace

TEST_CASE("rk4_step: zero field leaves z and delta_logp unchanged, advances t") {
  const DynamicsNet net = zero_dynamics({4, 2, 8, 2});
  Tape t;
  BoundDynamics b = bind_dynamics_frozen(t, net);
  std::mt19937_64 rng(0);
  const Matrix z = oracle::random_matrix(4, 3, rng);
  FlowState st{t.constant(z), 0.25, t.constant(Matrix::Zero(1, 3))};
  FlowState fwd = rk4_step(b, st, t.constant(Matrix::Constant(2, 3, 0.5)), 0.1, Direction::Forward, true);
  CHECK(fwd.z.value() == z);
  CHECK(fwd.delta_logp.value().isZero(0));
  CHECK(fwd.t == doctest::Approx(0.35));
  FlowState rev = rk4_step(b, st, t.constant(Matrix::Constant(2, 3, 0.5)), 0.1, Direction::Reverse, false);
  CHECK(rev.t == doctest::Approx(0.15));
}

TEST_CASE("rk4_step: constant field is integrated exactly") {
  DynamicsNet net = zero_dynamics({3, 1, 4, 0});
  Matrix c(3, 1);
  c << 0.5, -1.25, 2.0;
  net.params[1].value = c;
  Tape t;
  BoundDynamics b = bind_dynamics_frozen(t, net);
  const Matrix z = Matrix::Ones(3, 2);
  FlowState st{t.constant(z), 0.0, {}};
  FlowState out = rk4_step(b, st, t.constant(Matrix::Zero(1, 2)), 0.3, Direction::Forward, false);
  const Matrix expected = z + (c * 0.3).replicate(1, 2);
  CHECK((out.z.value() - expected).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("integrate_inverse: dz/dt = z over the unit interval gives e") {
  const DynamicsNet net = linear_dynamics(Matrix::Identity(2, 2), 1);
  const Matrix w = Matrix::Ones(2, 1);
  const InverseValues r = integrate_inverse(net, w, Matrix::Zero(1, 1), IntegratorConfig{});
  // RK4's global error here is about e * h^4 / 120 = 1.4e-7 in absolute terms.
  CHECK(std::abs(r.z1(0, 0) / w(0, 0) - std::numbers::e) / std::numbers::e < 1e-7);
  CHECK(std::abs(r.delta_logp(0) - 2.0) < 1e-12);
}

TEST_CASE("integrate_inverse: zero net is the identity flow") {
  const DynamicsNet net = zero_dynamics({16, 3, 64, 3});
  std::mt19937_64 rng(1);
  const Matrix w = oracle::random_matrix(16, 4, rng);
  const InverseValues r = integrate_inverse(net, w, Matrix::Constant(3, 4, 0.5), IntegratorConfig{});
  CHECK(r.z1 == w);
  CHECK(r.delta_logp.isZero(0));
  CHECK(edit(net, w, Matrix::Constant(3, 4, 0.1), IntegratorConfig{}) == w);
}

TEST_CASE("integrate_inverse: linear field accumulates Tr(A)") {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 10; ++i) {
    const Matrix a = oracle::random_matrix(4, 4, rng, 0.5);
    const InverseValues r = integrate_inverse(linear_dynamics(a, 2), oracle::random_matrix(4, 3, rng),
                                              Matrix::Constant(2, 3, 0.5), IntegratorConfig{});
    CHECK((r.delta_logp.array() - a.trace()).abs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("log_likelihood: Gaussian density under the zero net") {
  const DynamicsNet net = zero_dynamics({4, 2, 8, 1});
  const RowVector at_origin = log_likelihood(net, Matrix::Zero(4, 1), Matrix::Zero(2, 1), IntegratorConfig{});
  CHECK(at_origin(0) == doctest::Approx(-3.67575413).epsilon(1e-8));

  std::mt19937_64 rng(3);
  const Matrix w = oracle::random_matrix(4, 5, rng);
  const RowVector lp = log_likelihood(net, w, Matrix::Zero(2, 5), IntegratorConfig{});
  for (Eigen::Index c = 0; c < 5; ++c) {
    CHECK(lp(c) == doctest::Approx(-0.5 * w.col(c).squaredNorm() - 2 * std::log(2 * std::numbers::pi)));
  }
}

TEST_CASE("log_likelihood: linear dynamics matches the matrix-exponential oracle") {
  std::mt19937_64 rng(4);
  double worst = 0;
  for (int i = 0; i < 50; ++i) {
    const int d = 1 + i % 4;
    const Matrix a = oracle::random_matrix(d, d, rng, 0.5);
    const Matrix w = oracle::random_matrix(d, 3, rng);
    const RowVector lp = log_likelihood(linear_dynamics(a, 2), w, Matrix::Constant(2, 3, 0.5), IntegratorConfig{});
    worst = std::max(worst, (lp - linear_logp_oracle(a, w, 1.0)).cwiseAbs().maxCoeff());
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("log_likelihood: tape and plain paths agree") {
  const DynamicsNet net = init_dynamics({4, 2, 8, 2}, 5);
  std::mt19937_64 rng(5);
  const Matrix w = oracle::random_matrix(4, 3, rng);
  const Matrix s = Matrix::Constant(2, 3, 0.3);
  Tape t;
  BoundDynamics b = bind_dynamics_frozen(t, net);
  const Matrix taped = log_likelihood(b, t.constant(w), t.constant(s), IntegratorConfig{}).value();
  CHECK((taped - log_likelihood(net, w, s, IntegratorConfig{})).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("edit: round trip at the original condition, 100 random nets") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  double worst = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    DynamicsNet net = init_dynamics({8, 3, 16, 2}, seed);
    net.params[net.params.size() - 2].value *= 30.0;
    const Matrix w = oracle::random_matrix(8, 2, rng);
    Matrix s(3, 2);
    for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = uni(rng);
    worst = std::max(worst, round_trip_error(net, w, s, 20));
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("edit: initial flow is near identity") {
  const DynamicsNet net = init_dynamics({16, 3, 64, 3}, 0);
  std::mt19937_64 rng(7);
  const Matrix w = oracle::random_matrix(16, 20, rng);
  const Matrix z1 = integrate_inverse(net, w, Matrix::Constant(3, 20, 0.5), IntegratorConfig{}).z1;
  CHECK(((z1 - w).colwise().norm().array() / w.colwise().norm().array()).maxCoeff() < 0.1);
}

TEST_CASE("solver order: one-way error is fourth order, round trip fifth") {
  DynamicsNet net = init_dynamics({4, 2, 16, 2}, 1);
  net.params[net.params.size() - 2].value *= 150.0;
  std::mt19937_64 rng(8);
  const Matrix w = oracle::random_matrix(4, 8, rng);
  const Matrix s = Matrix::Constant(2, 8, 0.5);
  IntegratorConfig fine;
  fine.steps = 2000;
  const Matrix reference = integrate_inverse(net, w, s, fine, false).z1;
  std::vector<double> logh;
  std::vector<double> one_way;
  std::vector<double> round_trip;
  for (int steps : {5, 10, 20, 40}) {
    IntegratorConfig cfg;
    cfg.steps = steps;
    logh.push_back(std::log(cfg.step_size()));
    one_way.push_back(std::log((integrate_inverse(net, w, s, cfg, false).z1 - reference).cwiseAbs().maxCoeff()));
    round_trip.push_back(std::log(round_trip_error(net, w, s, steps)));
  }
  auto slope = [&](const std::vector<double>& y) {
    const double mx = std::accumulate(logh.begin(), logh.end(), 0.0) / 4;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / 4;
    double num = 0;
    double den = 0;
    for (std::size_t i = 0; i < 4; ++i) {
      num += (logh[i] - mx) * (y[i] - my);
      den += (logh[i] - mx) * (logh[i] - mx);
    }
    return num / den;
  };
  CHECK(slope(one_way) == doctest::Approx(4.0).epsilon(0.125));
  // The h^5 local error terms of the forward and backward sweeps cancel.
  CHECK(slope(round_trip) == doctest::Approx(5.0).epsilon(0.1));
}

TEST_CASE("rk4_step: non-finite state reports the step index") {
  const DynamicsNet net = linear_dynamics(Matrix::Identity(2, 2), 1);
  Matrix w = Matrix::Ones(2, 1);
  w(1, 0) = std::numeric_limits<double>::quiet_NaN();
  try {
    (void)integrate_inverse(net, w, Matrix::Zero(1, 1), IntegratorConfig{});
    FAIL("expected NonFiniteError");
  } catch (const NonFiniteError& e) {
    CHECK(e.index() == 0);
  }
  const DynamicsNet blow = linear_dynamics(Matrix::Identity(1, 1) * 1e7, 1);
  try {
    (void)integrate_inverse(blow, Matrix::Ones(1, 1), Matrix::Zero(1, 1), IntegratorConfig{});
    FAIL("expected NonFiniteError");
  } catch (const NonFiniteError& e) {
    CHECK(e.index() > 0);
  }
}

TEST_CASE("IntegratorConfig: invalid intervals are rejected") {
  IntegratorConfig cfg;
  cfg.steps = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = IntegratorConfig{};
  cfg.t1 = cfg.t0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("gradient: L_nll passes grad_check on a 4-dim flow with 5 steps") {
  DynamicsNet net = init_dynamics({4, 2, 8, 2}, 3);
  net.params[net.params.size() - 2].value *= 30.0;
  std::mt19937_64 rng(9);
  const Matrix w = oracle::random_matrix(4, 3, rng);
  const Matrix s = Matrix::Constant(2, 3, 0.6);
  IntegratorConfig cfg;
  cfg.steps = 5;
  auto f = [&](Tape& t, const std::vector<Var>& leaves) {
    BoundDynamics b = bind_dynamics(net.dims, leaves);
    return -mean(log_likelihood(b, t.constant(w), t.constant(s), cfg));
  };
  CHECK(grad_check(f, net.params, 1e-5) < 1e-3);
}
