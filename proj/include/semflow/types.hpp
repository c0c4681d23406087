// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "semflow/autodiff.hpp"

namespace semflow {

using Scalar = double;
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Tape = ad::Tape<Scalar>;
using Var = ad::Var<Scalar>;

/// I/O failure; the message carries the offending path.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numeric routine produced NaN or Inf.
class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(const std::string& what, long index)
      : std::runtime_error(what + " (index " + std::to_string(index) + ")"), index_(index) {}

  [[nodiscard]] long index() const { return index_; }

 private:
  long index_;
};

/// Deterministic child seed derived from a root seed and a stream tag (SplitMix64 mix).
inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream) {
  std::uint64_t z = root + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace semflow
