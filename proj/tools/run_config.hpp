// SPDX-License-Identifier: Apache-2.0
//
// Flat key=value run configuration shared by all subcommands.

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "semflow/evaluation.hpp"

namespace semflow::cli {

/// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;      ///< bad arguments, bad config, I/O failure
inline constexpr int kExitNonFinite = 2;  ///< training or evaluation hit a non-finite value

struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path out = ".";
  Eigen::Index samples = 10000;
  WorldSpec world;
  TrainConfig train = desk_train_config();
  Eigen::Index eval_samples = 500;
  int bins = 10;

  static TrainConfig desk_train_config();

  /// Applies one key; throws std::invalid_argument for unknown keys or unparsable values.
  void set(const std::string& key, const std::string& value);
  /// Derives module seeds, fills default priors for a changed attribute count,
  /// and validates everything. Call once after all overrides.
  void finalize();
  /// Applies every pair of a key=value document.
  void apply_text(const std::string& text);
  [[nodiscard]] std::string to_text() const;

  /// Per-module seeds split from the root seed.
  [[nodiscard]] std::uint64_t world_seed() const { return derive_seed(seed, 1); }
  [[nodiscard]] std::uint64_t train_seed() const { return derive_seed(seed, 2); }
  [[nodiscard]] std::uint64_t referee_seed() const { return derive_seed(seed, 3); }

 private:
  bool priors_explicit_ = false;
};

/// Every accepted key with its default, in documentation order.
std::vector<std::pair<std::string, std::string>> default_keys();

}  // namespace semflow::cli
