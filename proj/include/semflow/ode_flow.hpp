// SPDX-License-Identifier: Apache-2.0
//
// Fixed-step RK4 integration of the conditional field, augmented with the
// running integral of the Jacobian trace.
//
//   inverse:  w = z(t0)  ->  z(t1),   delta_logp = int_{t0}^{t1} Tr(d phi/d z) dt
//   edit:     z(t1)      ->  w_e = z(t0) under a new condition s_hat
//   log p(w) = log N(z(t1); 0, I) + delta_logp
//
// Gradients come from backpropagating through the unrolled solver.

#pragma once

#include "semflow/dynamics.hpp"

namespace semflow {

struct IntegratorConfig {
  Scalar t0 = 0.0;
  Scalar t1 = 1.0;
  int steps = 20;

  void validate() const;
  [[nodiscard]] Scalar step_size() const { return (t1 - t0) / steps; }
};

enum class Direction : int { Forward = 1, Reverse = -1 };

struct FlowState {
  Var z;           ///< D_w x B
  Scalar t = 0.0;
  Var delta_logp;  ///< 1 x B; unset when the trace is not tracked
};

/// One classical RK4 step of the augmented system. Reverse negates the field and
/// moves t backwards by h. Throws NonFiniteError carrying `step_index`.
FlowState rk4_step(const BoundDynamics& net, const FlowState& state, const Var& s, Scalar h,
                   Direction direction, bool track_trace, long step_index = 0);

struct InverseResult {
  Var z1;          ///< D_w x B
  Var delta_logp;  ///< 1 x B (unset if track_trace was false)
};

/// z(t0) = w  ->  z(t1).
InverseResult integrate_inverse(const BoundDynamics& net, const Var& w, const Var& s,
                                const IntegratorConfig& cfg, bool track_trace = true);

/// Reverse-time integration z(t1) -> w_e under condition s_hat.
Var edit(const BoundDynamics& net, const Var& z1, const Var& s_hat, const IntegratorConfig& cfg);

/// log N(z; 0, I) per column: -||z||^2 / 2 - (D/2) log(2 pi).
Var standard_normal_logpdf(const Var& z);

/// log p(w) per column (1 x B).
Var log_likelihood(const BoundDynamics& net, const Var& w, const Var& s, const IntegratorConfig& cfg);

/// Inference helpers that keep only one step on a tape at a time.
struct InverseValues {
  Matrix z1;
  RowVector delta_logp;
};
InverseValues integrate_inverse(const DynamicsNet& net, const Matrix& w, const Matrix& s,
                                const IntegratorConfig& cfg, bool track_trace = true);
Matrix edit(const DynamicsNet& net, const Matrix& z1, const Matrix& s_hat, const IntegratorConfig& cfg);
RowVector log_likelihood(const DynamicsNet& net, const Matrix& w, const Matrix& s,
                         const IntegratorConfig& cfg);

}  // namespace semflow
