// SPDX-License-Identifier: Apache-2.0
//
// Semantic encoder E_s: observation (D_I x B) -> semantic variables (K x B) in (0, 1).
// A tanh MLP backbone followed by three linear layers and a sigmoid.

#pragma once

#include <cstdint>

#include "semflow/param_set.hpp"

namespace semflow {

struct EncoderDims {
  int input_dim = 32;
  int hidden = 64;          ///< backbone width
  int backbone_depth = 2;   ///< tanh layers in the backbone
  int head_hidden = 64;     ///< width of the first two linear head layers
  int attributes = 3;

  void validate() const;
};

struct SemanticEncoder {
  EncoderDims dims;
  ParamSet params;  ///< backbone{i}.weight/bias, head{0,1,2}.weight/bias
};

SemanticEncoder init_encoder(const EncoderDims& dims, std::uint64_t seed);

/// Forward pass on tape leaves laid out in ParamSet order.
Var encode(const EncoderDims& dims, const std::vector<Var>& params, const Var& observations);

/// Inference-only forward pass.
Matrix encode(const SemanticEncoder& enc, const Matrix& observations);

}  // namespace semflow
