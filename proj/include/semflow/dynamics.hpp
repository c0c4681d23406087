// SPDX-License-Identifier: Apache-2.0
//
// Conditional vector field dz/dt = phi(z, s, t): an MLP on the row-stacked
// input [z; s; t] with tanh hidden layers and a linear output layer.
//
// Batches are column-major: z is D_w x B, s is K x B, one sample per column.

#pragma once

#include <cstdint>
#include <vector>

#include "semflow/param_set.hpp"

namespace semflow {

struct DynamicsDims {
  int latent_dim = 16;
  int cond_dim = 3;
  int hidden = 64;
  int depth = 3;  ///< number of tanh hidden layers; 0 gives a single affine layer

  [[nodiscard]] int input_dim() const { return latent_dim + cond_dim + 1; }
  void validate() const;
};

struct DynamicsNet {
  DynamicsDims dims;
  ParamSet params;  ///< fc0.weight, fc0.bias, ..., fc{depth}.weight, fc{depth}.bias
};

/// Uniform(+-1/sqrt(fan_in)) weights, zero biases; output layer scaled by 0.01.
DynamicsNet init_dynamics(const DynamicsDims& dims, std::uint64_t seed);

/// All-zero network of the given shape.
DynamicsNet zero_dynamics(const DynamicsDims& dims);

/// Affine field phi(z) = A z (depth 0, A acts on z only).
DynamicsNet linear_dynamics(const Matrix& a, int cond_dim);

/// The network's parameters as tape nodes, plus per-batch-size constants.
class BoundDynamics {
 public:
  BoundDynamics(const DynamicsDims& dims, std::vector<Var> params);

  [[nodiscard]] const DynamicsDims& dims() const { return dims_; }
  [[nodiscard]] const Var& weight(int layer) const { return params_[2 * layer]; }
  [[nodiscard]] const Var& bias(int layer) const { return params_[2 * layer + 1]; }
  [[nodiscard]] Tape& tape() const { return *params_.front().tape(); }
  /// Parameter nodes in ParamSet order.
  [[nodiscard]] const std::vector<Var>& leaves() const { return params_; }

  struct BatchConstants {
    Var ones_row;     ///< 1 x B
    Var ones_latent;  ///< 1 x D_w
    Var tile;         ///< D_w x (D_w B): B copies of the identity
    Var expand;       ///< B x (D_w B): repeats each column D_w times
    Var expand_t;     ///< (D_w B) x B
  };
  const BatchConstants& constants(Eigen::Index batch) const;

 private:
  DynamicsDims dims_;
  std::vector<Var> params_;
  mutable Eigen::Index cached_batch_ = -1;
  mutable BatchConstants cache_;
};

/// Parameters become gradient-receiving leaves.
BoundDynamics bind_dynamics(Tape& tape, const DynamicsNet& net);

/// Parameters become constants (inference only).
BoundDynamics bind_dynamics_frozen(Tape& tape, const DynamicsNet& net);

/// Wraps leaves already placed on a tape (e.g. by semflow::bind), in ParamSet order.
BoundDynamics bind_dynamics(const DynamicsDims& dims, std::vector<Var> leaves);

struct FieldValue {
  Var velocity;  ///< D_w x B
  Var trace;     ///< 1 x B, Tr(d phi / d z); unset when not requested
};

/// phi(z, s, t) on a batch.
Var phi(const BoundDynamics& net, const Var& z, const Var& s, Scalar t);

/// phi together with its exact Jacobian trace, formed by pushing all D_w basis
/// tangents through the network at once. Differentiable w.r.t. parameters and z.
FieldValue phi_with_trace(const BoundDynamics& net, const Var& z, const Var& s, Scalar t);

/// Plain evaluation helpers (no gradient).
Matrix phi_eval(const DynamicsNet& net, const Matrix& z, const Matrix& s, Scalar t);
RowVector jacobian_trace(const DynamicsNet& net, const Matrix& z, const Matrix& s, Scalar t);

}  // namespace semflow
