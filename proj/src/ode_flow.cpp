// SPDX-License-Identifier: Apache-2.0

#include "semflow/ode_flow.hpp"

#include <cmath>
#include <numbers>

namespace semflow {

void IntegratorConfig::validate() const {
  if (!(t0 < t1)) throw std::invalid_argument("IntegratorConfig: t0 must be < t1");
  if (steps < 1) throw std::invalid_argument("IntegratorConfig: steps must be >= 1");
}

namespace {

FieldValue signed_field(const BoundDynamics& net, const Var& z, const Var& s, Scalar t, Scalar sign,
                        bool track_trace) {
  if (track_trace) {
    FieldValue f = phi_with_trace(net, z, s, t);
    if (sign < 0) {
      f.velocity = -f.velocity;
      f.trace = -f.trace;
    }
    return f;
  }
  Var v = phi(net, z, s, t);
  return {sign < 0 ? -v : v, Var{}};
}

}  // namespace

FlowState rk4_step(const BoundDynamics& net, const FlowState& state, const Var& s, Scalar h,
                   Direction direction, bool track_trace, long step_index) {
  if (!(h > 0)) throw std::invalid_argument("rk4_step: step size must be positive");
  const Scalar sign = static_cast<Scalar>(static_cast<int>(direction));
  const Scalar dt = sign * h;  // signed time advance
  const Scalar t = state.t;

  // In the reverse direction the field is negated and evaluated at t - tau,
  // which equals stepping the original ODE backwards in time.
  FieldValue k1 = signed_field(net, state.z, s, t, sign, track_trace);
  FieldValue k2 = signed_field(net, state.z + k1.velocity * (h / 2), s, t + dt / 2, sign, track_trace);
  FieldValue k3 = signed_field(net, state.z + k2.velocity * (h / 2), s, t + dt / 2, sign, track_trace);
  FieldValue k4 = signed_field(net, state.z + k3.velocity * h, s, t + dt, sign, track_trace);

  FlowState next;
  next.t = t + dt;
  next.z = state.z + (k1.velocity + k2.velocity * Scalar(2) + k3.velocity * Scalar(2) + k4.velocity) *
                         (h / 6);
  if (track_trace) {
    Var incr = (k1.trace + k2.trace * Scalar(2) + k3.trace * Scalar(2) + k4.trace) * (h / 6);
    next.delta_logp = state.delta_logp.valid() ? state.delta_logp + incr : incr;
    if (!next.delta_logp.value().allFinite()) {
      throw NonFiniteError("rk4_step: non-finite log-density change", step_index);
    }
  }
  if (!next.z.value().allFinite()) throw NonFiniteError("rk4_step: non-finite state", step_index);
  return next;
}

InverseResult integrate_inverse(const BoundDynamics& net, const Var& w, const Var& s,
                                const IntegratorConfig& cfg, bool track_trace) {
  cfg.validate();
  if (!w.value().allFinite()) throw NonFiniteError("integrate_inverse: non-finite latent code", 0);
  FlowState state{w, cfg.t0, Var{}};
  if (track_trace) state.delta_logp = w.tape()->constant(RowVector::Zero(w.cols()));
  const Scalar h = cfg.step_size();
  for (int i = 0; i < cfg.steps; ++i) {
    state = rk4_step(net, state, s, h, Direction::Forward, track_trace, i);
  }
  return {state.z, state.delta_logp};
}

Var edit(const BoundDynamics& net, const Var& z1, const Var& s_hat, const IntegratorConfig& cfg) {
  cfg.validate();
  FlowState state{z1, cfg.t1, Var{}};
  const Scalar h = cfg.step_size();
  for (int i = 0; i < cfg.steps; ++i) {
    state = rk4_step(net, state, s_hat, h, Direction::Reverse, false, i);
  }
  return state.z;
}

Var standard_normal_logpdf(const Var& z) {
  Tape& tape = *z.tape();
  const Scalar d = static_cast<Scalar>(z.rows());
  Var sq = matmul(tape.constant(Matrix::Ones(1, z.rows())), square(z));
  return sq * Scalar(-0.5) + tape.constant(-0.5 * d * std::log(2.0 * std::numbers::pi));
}

Var log_likelihood(const BoundDynamics& net, const Var& w, const Var& s, const IntegratorConfig& cfg) {
  InverseResult r = integrate_inverse(net, w, s, cfg, true);
  return standard_normal_logpdf(r.z1) + r.delta_logp;
}

InverseValues integrate_inverse(const DynamicsNet& net, const Matrix& w, const Matrix& s,
                                const IntegratorConfig& cfg, bool track_trace) {
  cfg.validate();
  if (!w.allFinite()) throw NonFiniteError("integrate_inverse: non-finite latent code", 0);
  Matrix z = w;
  RowVector dlogp = RowVector::Zero(w.cols());
  const Scalar h = cfg.step_size();
  Scalar t = cfg.t0;
  for (int i = 0; i < cfg.steps; ++i) {
    Tape tape;
    BoundDynamics bound = bind_dynamics_frozen(tape, net);
    FlowState st{tape.constant(z), t, track_trace ? tape.constant(Matrix(dlogp)) : Var{}};
    FlowState next = rk4_step(bound, st, tape.constant(s), h, Direction::Forward, track_trace, i);
    z = next.z.value();
    if (track_trace) dlogp = next.delta_logp.value();
    t = next.t;
  }
  return {std::move(z), std::move(dlogp)};
}

Matrix edit(const DynamicsNet& net, const Matrix& z1, const Matrix& s_hat, const IntegratorConfig& cfg) {
  cfg.validate();
  Matrix z = z1;
  const Scalar h = cfg.step_size();
  Scalar t = cfg.t1;
  for (int i = 0; i < cfg.steps; ++i) {
    Tape tape;
    BoundDynamics bound = bind_dynamics_frozen(tape, net);
    FlowState st{tape.constant(z), t, Var{}};
    FlowState next = rk4_step(bound, st, tape.constant(s_hat), h, Direction::Reverse, false, i);
    z = next.z.value();
    t = next.t;
  }
  return z;
}

RowVector log_likelihood(const DynamicsNet& net, const Matrix& w, const Matrix& s,
                         const IntegratorConfig& cfg) {
  InverseValues r = integrate_inverse(net, w, s, cfg, true);
  const double d = static_cast<double>(w.rows());
  RowVector out = -0.5 * r.z1.colwise().squaredNorm();
  out.array() -= 0.5 * d * std::log(2.0 * std::numbers::pi);
  return out + r.delta_logp;
}

}  // namespace semflow
