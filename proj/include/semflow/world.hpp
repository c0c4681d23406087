// SPDX-License-Identifier: Apache-2.0
//
// Synthetic ground-truth world: known attributes a and nuisance n are mixed
// into an entangled latent code w, rendered into an observation I, and
// embedded for identity comparison. All maps are frozen from the seed.
//
//   w = R2 tanh(R1 [a; n]) + 0.1 [a; n; 0]
//   I = tanh(P w)
//   id(I) = Q I

#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "semflow/types.hpp"

namespace semflow {

enum class AttributePrior { Bimodal, Smooth };

struct WorldSpec {
  int attributes = 3;
  int nuisance_dim = 13;
  int latent_dim = 16;
  int obs_dim = 32;
  int id_dim = 16;
  std::uint64_t seed = 0;
  double noise_sigma = 0.02;
  std::vector<AttributePrior> priors{AttributePrior::Bimodal, AttributePrior::Bimodal,
                                     AttributePrior::Smooth};

  void validate() const;

  /// Flat key=value lines.
  [[nodiscard]] std::string to_text() const;
  static WorldSpec from_text(const std::string& text);
};

void save_world_spec(const std::filesystem::path& path, const WorldSpec& spec);
WorldSpec load_world_spec(const std::filesystem::path& path);

/// Column-per-sample factor batch.
struct Factors {
  Matrix a;  ///< K x N, in [0, 1]
  Matrix n;  ///< D_n x N
};

/// Paired records; column i of every block belongs to record i.
struct Dataset {
  Matrix a;
  Matrix n;
  Matrix w;
  Matrix obs;

  [[nodiscard]] Eigen::Index size() const { return w.cols(); }
  /// First 80% of records (rounded down, at least one when size() > 0).
  [[nodiscard]] Eigen::Index train_size() const;
  [[nodiscard]] Eigen::Index test_size() const { return size() - train_size(); }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Dataset file: "SDFD", u32 version, u32 N, K, D_n, D_w, D_I, then row-major
/// little-endian f64 blocks (N x dim) for a, n, w, I.
inline constexpr std::uint32_t kDatasetVersion = 1;
void save_dataset(const std::filesystem::path& path, const Dataset& ds);
Dataset load_dataset(const std::filesystem::path& path);

/// Raised when the oracle is asked about an observation it did not generate.
class UnknownObservation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class World {
 public:
  explicit World(WorldSpec spec);

  [[nodiscard]] const WorldSpec& spec() const { return spec_; }

  [[nodiscard]] Factors sample_factors(std::mt19937_64& rng, Eigen::Index count) const;

  [[nodiscard]] Matrix entangle(const Matrix& a, const Matrix& n) const;
  [[nodiscard]] Matrix observe(const Matrix& w) const;
  /// Differentiable rendering, used when training through edited codes.
  [[nodiscard]] Var observe(const Var& w) const;
  [[nodiscard]] Matrix identity_embed(const Matrix& obs) const;

  /// Ground truth plus N(0, noise_sigma^2) label noise, clamped to [0, 1].
  [[nodiscard]] Matrix oracle_classify(const Matrix& a, std::mt19937_64& rng) const;
  /// Same, looking each observation up in `ds`; throws UnknownObservation otherwise.
  [[nodiscard]] Matrix oracle_classify(const Dataset& ds, const Matrix& obs, std::mt19937_64& rng) const;
  /// Fixed noisy labels for every record of `ds` (one draw per record, seeded by the world).
  [[nodiscard]] Matrix oracle_labels(const Dataset& ds) const;

  [[nodiscard]] Dataset generate_dataset(Eigen::Index count) const;

  /// Gauss-Newton inversion of entangle() for each column of w.
  [[nodiscard]] Factors recover_factors(const Matrix& w, int iterations = 50) const;

  [[nodiscard]] const Matrix& mixing_inner() const { return r1_; }
  [[nodiscard]] const Matrix& mixing_outer() const { return r2_; }
  [[nodiscard]] const Matrix& render_map() const { return p_; }
  [[nodiscard]] const Matrix& embed_map() const { return q_; }

 private:
  WorldSpec spec_;
  Matrix r1_;
  Matrix r2_;
  Matrix p_;
  Matrix q_;
};

/// Cosine similarity per column pair; zero-norm columns yield NaN.
RowVector column_cosine(const Matrix& x, const Matrix& y);

}  // namespace semflow
