// SPDX-License-Identifier: Apache-2.0

#include "semflow/dynamics.hpp"

#include <cmath>
#include <random>
#include <string>

namespace semflow {

namespace {

std::string weight_name(int layer) { return "fc" + std::to_string(layer) + ".weight"; }
std::string bias_name(int layer) { return "fc" + std::to_string(layer) + ".bias"; }

void check_batch(const DynamicsDims& d, const Matrix& z, const Matrix& s) {
  if (z.rows() != d.latent_dim) throw ad::ShapeError("phi: z", z.rows(), z.cols(), d.latent_dim, z.cols());
  if (s.rows() != d.cond_dim) throw ad::ShapeError("phi: s", s.rows(), s.cols(), d.cond_dim, z.cols());
  if (s.cols() != z.cols()) throw ad::ShapeError("phi: batch of z vs s", z.rows(), z.cols(), s.rows(), s.cols());
}

// Layer input [z; s; t].
Var field_input(const BoundDynamics& net, const Var& z, const Var& s, Scalar t) {
  check_batch(net.dims(), z.value(), s.value());
  const auto& k = net.constants(z.cols());
  Var time = scale(k.ones_row, t);
  return ad::concat<Scalar>({z, s, time}, ad::Axis::Rows);
}

Var affine(const BoundDynamics& net, int layer, const Var& x) {
  const auto& k = net.constants(x.cols());
  return matmul(net.weight(layer), x) + matmul(net.bias(layer), k.ones_row);
}

}  // namespace

void DynamicsDims::validate() const {
  if (latent_dim <= 0 || cond_dim < 0 || hidden <= 0 || depth < 0) {
    throw std::invalid_argument("DynamicsDims: dimensions must be positive");
  }
}

DynamicsNet init_dynamics(const DynamicsDims& dims, std::uint64_t seed) {
  dims.validate();
  std::mt19937_64 rng(seed);
  DynamicsNet net{dims, {}};
  int fan_in = dims.input_dim();
  for (int layer = 0; layer <= dims.depth; ++layer) {
    const bool last = layer == dims.depth;
    const int fan_out = last ? dims.latent_dim : dims.hidden;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> uni(-bound, bound);
    Matrix w(fan_out, fan_in);
    for (Eigen::Index c = 0; c < w.cols(); ++c) {
      for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = uni(rng);
    }
    if (last) w *= 0.01;
    net.params.add(weight_name(layer), std::move(w));
    net.params.add(bias_name(layer), Matrix::Zero(fan_out, 1));
    fan_in = fan_out;
  }
  return net;
}

DynamicsNet zero_dynamics(const DynamicsDims& dims) {
  DynamicsNet net = init_dynamics(dims, 0);
  for (auto& e : net.params) e.value.setZero();
  return net;
}

DynamicsNet linear_dynamics(const Matrix& a, int cond_dim) {
  if (a.rows() != a.cols()) throw ad::ShapeError("linear_dynamics: A must be square", a.rows(), a.cols(), a.cols(), a.cols());
  DynamicsDims dims{static_cast<int>(a.rows()), cond_dim, 1, 0};
  DynamicsNet net = zero_dynamics(dims);
  net.params.at(weight_name(0)).leftCols(a.cols()) = a;
  return net;
}

BoundDynamics::BoundDynamics(const DynamicsDims& dims, std::vector<Var> params)
    : dims_(dims), params_(std::move(params)) {
  if (params_.size() != static_cast<std::size_t>(2 * (dims_.depth + 1))) {
    throw std::invalid_argument("BoundDynamics: expected " + std::to_string(2 * (dims_.depth + 1)) +
                                " parameter tensors, got " + std::to_string(params_.size()));
  }
}

const BoundDynamics::BatchConstants& BoundDynamics::constants(Eigen::Index batch) const {
  if (batch == cached_batch_) return cache_;
  Tape& t = tape();
  const Eigen::Index d = dims_.latent_dim;
  Matrix tile = Matrix::Zero(d, d * batch);
  Matrix expand = Matrix::Zero(batch, d * batch);
  for (Eigen::Index b = 0; b < batch; ++b) {
    tile.middleCols(b * d, d).setIdentity();
    expand.row(b).segment(b * d, d).setOnes();
  }
  cache_.ones_row = t.constant(Matrix::Ones(1, batch));
  cache_.ones_latent = t.constant(Matrix::Ones(1, d));
  cache_.expand_t = t.constant(expand.transpose());
  cache_.tile = t.constant(std::move(tile));
  cache_.expand = t.constant(std::move(expand));
  cached_batch_ = batch;
  return cache_;
}

BoundDynamics bind_dynamics(Tape& tape, const DynamicsNet& net) {
  return BoundDynamics(net.dims, bind(tape, net.params));
}

BoundDynamics bind_dynamics_frozen(Tape& tape, const DynamicsNet& net) {
  std::vector<Var> leaves;
  leaves.reserve(net.params.size());
  for (const auto& e : net.params) leaves.push_back(tape.constant(e.value));
  return BoundDynamics(net.dims, std::move(leaves));
}

BoundDynamics bind_dynamics(const DynamicsDims& dims, std::vector<Var> leaves) {
  return BoundDynamics(dims, std::move(leaves));
}

Var phi(const BoundDynamics& net, const Var& z, const Var& s, Scalar t) {
  Var h = field_input(net, z, s, t);
  for (int layer = 0; layer < net.dims().depth; ++layer) h = tanh(affine(net, layer, h));
  return affine(net, net.dims().depth, h);
}

FieldValue phi_with_trace(const BoundDynamics& net, const Var& z, const Var& s, Scalar t) {
  const auto& dims = net.dims();
  const Eigen::Index batch = z.cols();
  Var x = field_input(net, z, s, t);
  const auto& k = net.constants(batch);

  // Tangent block for the z-columns of the first layer, tiled over the batch.
  Var first_z = slice(net.weight(0), 0, 0, net.weight(0).rows(), dims.latent_dim);
  Var tangent = matmul(first_z, k.tile);

  Var h = x;
  for (int layer = 0; layer < dims.depth; ++layer) {
    h = tanh(affine(net, layer, h));
    Var slope = Scalar(1) - square(h);                  // H x B
    Var gate = matmul(slope, k.expand);                  // H x (D_w B)
    tangent = matmul(net.weight(layer + 1), gate * tangent);
  }
  Var out = affine(net, dims.depth, h);
  // tangent now holds the D_w x (D_w B) stacked Jacobians; keep the diagonals.
  Var trace = matmul(matmul(k.ones_latent, tangent * k.tile), k.expand_t);
  return {out, trace};
}

Matrix phi_eval(const DynamicsNet& net, const Matrix& z, const Matrix& s, Scalar t) {
  Tape tape;
  BoundDynamics bound = bind_dynamics_frozen(tape, net);
  return phi(bound, tape.constant(z), tape.constant(s), t).value();
}

RowVector jacobian_trace(const DynamicsNet& net, const Matrix& z, const Matrix& s, Scalar t) {
  Tape tape;
  BoundDynamics bound = bind_dynamics_frozen(tape, net);
  return phi_with_trace(bound, tape.constant(z), tape.constant(s), t).trace.value();
}

}  // namespace semflow
