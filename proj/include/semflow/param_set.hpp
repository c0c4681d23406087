// SPDX-License-Identifier: Apache-2.0
//
// Named parameter tensors, tape binding, checkpoint files and gradient checks.

#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "semflow/types.hpp"

namespace semflow {

/// Ordered name -> matrix mapping. Iteration order is insertion order.
class ParamSet {
 public:
  struct Entry {
    std::string name;
    Matrix value;
  };

  void add(std::string name, Matrix value);

  [[nodiscard]] std::size_t size() const { return entries_.size(); }
  [[nodiscard]] bool empty() const { return entries_.empty(); }

  [[nodiscard]] const Entry& operator[](std::size_t i) const { return entries_[i]; }
  [[nodiscard]] Entry& operator[](std::size_t i) { return entries_[i]; }

  /// Throws std::out_of_range when `name` is absent.
  [[nodiscard]] const Matrix& at(const std::string& name) const;
  [[nodiscard]] Matrix& at(const std::string& name);

  [[nodiscard]] std::vector<Entry>::const_iterator begin() const { return entries_.begin(); }
  [[nodiscard]] std::vector<Entry>::const_iterator end() const { return entries_.end(); }
  [[nodiscard]] std::vector<Entry>::iterator begin() { return entries_.begin(); }
  [[nodiscard]] std::vector<Entry>::iterator end() { return entries_.end(); }

  /// Total scalar count across all entries.
  [[nodiscard]] Eigen::Index numel() const;

  friend bool operator==(const ParamSet& a, const ParamSet& b);

 private:
  std::vector<Entry> entries_;
};

/// Places every parameter on `tape` as a gradient-receiving leaf, in set order.
std::vector<Var> bind(Tape& tape, const ParamSet& params);

/// Reads the gradients of bound leaves after Tape::backward.
std::vector<Matrix> gradients(const std::vector<Var>& bound);

/// Reverse-mode gradient of a scalar root w.r.t. bound leaves. Throws ad::ShapeError
/// if the root is not 1x1.
std::vector<Matrix> backward_grad(const Var& root, const std::vector<Var>& bound);

// Checkpoint file: "SDFW", u32 version, u32 count, then per entry
// u16 name length + UTF-8 name, u8 rank, u32 dims, little-endian f64 payload
// (row-major). Column vectors are stored as rank 1.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_params(const std::filesystem::path& path, const ParamSet& params);
ParamSet load_params(const std::filesystem::path& path);

/// Builds a scalar graph from bound parameter leaves.
using GraphFn = std::function<Var(Tape&, const std::vector<Var>&)>;

/// Max over all parameter entries of |analytic - central| / (|analytic| + |central| + 1e-12).
double grad_check(const GraphFn& f, const ParamSet& params, double h);

}  // namespace semflow
