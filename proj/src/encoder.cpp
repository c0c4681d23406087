// SPDX-License-Identifier: Apache-2.0

#include "semflow/encoder.hpp"

#include <cmath>
#include <random>
#include <string>

namespace semflow {

namespace {

void add_layer(ParamSet& params, const std::string& prefix, int fan_in, int fan_out,
               std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> uni(-bound, bound);
  Matrix w(fan_out, fan_in);
  for (Eigen::Index c = 0; c < w.cols(); ++c) {
    for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = uni(rng);
  }
  params.add(prefix + ".weight", std::move(w));
  params.add(prefix + ".bias", Matrix::Zero(fan_out, 1));
}

}  // namespace

void EncoderDims::validate() const {
  if (input_dim <= 0 || hidden <= 0 || backbone_depth < 0 || head_hidden <= 0 || attributes <= 0) {
    throw std::invalid_argument("EncoderDims: dimensions must be positive");
  }
}

SemanticEncoder init_encoder(const EncoderDims& dims, std::uint64_t seed) {
  dims.validate();
  std::mt19937_64 rng(seed);
  SemanticEncoder enc{dims, {}};
  int width = dims.input_dim;
  for (int i = 0; i < dims.backbone_depth; ++i) {
    add_layer(enc.params, "backbone" + std::to_string(i), width, dims.hidden, rng);
    width = dims.hidden;
  }
  add_layer(enc.params, "head0", width, dims.head_hidden, rng);
  add_layer(enc.params, "head1", dims.head_hidden, dims.head_hidden, rng);
  add_layer(enc.params, "head2", dims.head_hidden, dims.attributes, rng);
  return enc;
}

Var encode(const EncoderDims& dims, const std::vector<Var>& params, const Var& observations) {
  const std::size_t expected = static_cast<std::size_t>(2 * (dims.backbone_depth + 3));
  if (params.size() != expected) {
    throw std::invalid_argument("encode: expected " + std::to_string(expected) + " parameter tensors");
  }
  if (observations.rows() != dims.input_dim) {
    throw ad::ShapeError("encode: observation", observations.rows(), observations.cols(),
                         dims.input_dim, observations.cols());
  }
  Tape& tape = *observations.tape();
  Var ones = tape.constant(Matrix::Ones(1, observations.cols()));
  auto affine = [&](std::size_t layer, const Var& x) {
    return matmul(params[2 * layer], x) + matmul(params[2 * layer + 1], ones);
  };
  Var h = observations;
  std::size_t layer = 0;
  for (; layer < static_cast<std::size_t>(dims.backbone_depth); ++layer) h = tanh(affine(layer, h));
  h = affine(layer++, h);
  h = affine(layer++, h);
  return sigmoid(affine(layer, h));
}

Matrix encode(const SemanticEncoder& enc, const Matrix& observations) {
  Tape tape;
  std::vector<Var> leaves;
  for (const auto& e : enc.params) leaves.push_back(tape.constant(e.value));
  return encode(enc.dims, leaves, tape.constant(observations)).value();
}

}  // namespace semflow
