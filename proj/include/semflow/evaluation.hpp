// SPDX-License-Identifier: Apache-2.0
//
// Editing metrics, strength sweeps, the loss-ablation ladder and histogram export.
// All attribute readouts of edited observations come from a frozen evaluation
// regressor; binary classes are split at 0.5.

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "semflow/encoder.hpp"
#include "semflow/ode_flow.hpp"
#include "semflow/training.hpp"
#include "semflow/world.hpp"

namespace semflow {

inline constexpr double kDecisionThreshold = 0.5;
inline constexpr double kTargetAccuracy = 0.99;

struct EditModel {
  DynamicsNet flow;
  SemanticEncoder encoder;
  IntegratorConfig integrator;
};

struct MetricsRecord {
  double strength = 0;
  double editing_accuracy = 0;
  double attribute_preservation = 0;
  double identity_cosine = 0;
};

/// Fraction of columns whose attribute j lies on the target side of 0.5
/// (`target(c) >= 0.5` means the high side). Throws on an empty set.
double editing_accuracy(const Matrix& edited_pred, int j, const RowVector& target);

/// Fraction of columns where every attribute k != j keeps its side of 0.5.
/// Defined as 1 when there are no other attributes.
double attribute_preservation(const Matrix& original_pred, const Matrix& edited_pred, int j);

struct IdentityScore {
  double mean_cosine = 0;
  long excluded = 0;  ///< pairs dropped because an embedding had zero norm
};

/// Mean cosine between identity embeddings of original and edited observations.
IdentityScore identity_preservation(const World& world, const Matrix& original_obs,
                                    const Matrix& edited_obs);

/// Target value per column: the opposite class of the regressor's readout of attribute j.
RowVector opposite_targets(const Matrix& original_pred, int j);

/// s_hat_j = (1 - strength) s_j + strength * target; other rows unchanged.
Matrix edit_condition(const Matrix& s, int j, const RowVector& target, double strength);

/// For each strength in grid: encode -> inverse -> edit -> observe -> score.
/// Stops after the first record whose accuracy reaches kTargetAccuracy.
std::vector<MetricsRecord> strength_sweep(const EditModel& model, const World& world,
                                          const SemanticEncoder& evaluator, const Matrix& w,
                                          const Matrix& obs, int j, const std::vector<double>& grid);

/// 0, 0.05, ..., 1.
std::vector<double> default_strength_grid();

enum class PreservationAxis { Attribute, Identity };

/// Trapezoidal area under preservation vs editing accuracy, divided by the
/// accuracy span. Points are ordered by accuracy. Throws on < 2 points or zero span.
double preservation_auc(const std::vector<MetricsRecord>& curve, PreservationAxis axis);

/// Header `strength,edit_acc,attr_pres,id_cosine`.
std::string curve_csv(const std::vector<MetricsRecord>& curve);

struct Histogram {
  int attribute = 0;
  std::vector<double> edges;  ///< bins + 1 edges on [0, 1]
  std::vector<long> counts;
};

std::vector<Histogram> histogram_export(const SemanticEncoder& encoder, const Matrix& obs, int bins);

/// Header `attribute,bin_lo,bin_hi,count`.
std::string histogram_csv(const std::vector<Histogram>& hists);

// ---------------------------------------------------------------------------
// Ablation ladder
// ---------------------------------------------------------------------------

struct AblationVariant {
  std::string name;
  LossSwitches use;
  bool frozen_encoder = false;  ///< condition on the distilled classifier instead of a trained encoder
};

/// baseline (L_nll), +reg, +reg+mi (frozen classifier as encoder), full.
std::vector<AblationVariant> ablation_ladder();

struct VariantResult {
  AblationVariant variant;
  EditModel model;
  std::vector<std::vector<MetricsRecord>> curves;  ///< one per attribute
  double attr_auc = 0;  ///< mean over attributes
  double id_auc = 0;
  std::vector<LossRow> log;
};

struct AblationConfig {
  TrainConfig train;
  std::vector<double> grid = default_strength_grid();
  Eigen::Index eval_samples = 500;
};

/// Frozen helper models shared by evaluation and the ablation ladder.
struct Referees {
  SemanticEncoder evaluator;   ///< regressor scoring edited observations
  SemanticEncoder distilled;   ///< classifier distilled from the oracle labels
};

Referees fit_referees(const World& world, const Dataset& data, std::uint64_t seed);

/// Mean AUCs for a set of per-attribute curves (degenerate curves contribute 0).
std::pair<double, double> mean_aucs(const std::vector<std::vector<MetricsRecord>>& curves);

/// Evaluates an already trained model on the first `eval_samples` test records.
std::vector<std::vector<MetricsRecord>> evaluate_model(const EditModel& model, const World& world,
                                                       const Dataset& data,
                                                       const SemanticEncoder& evaluator,
                                                       const std::vector<double>& grid,
                                                       Eigen::Index eval_samples);

/// Shared initialisation for every trained model; `train_seed` is TrainConfig::seed.
DynamicsNet initial_flow(const World& world, std::uint64_t train_seed);
SemanticEncoder initial_encoder(const World& world, std::uint64_t train_seed);

/// Trains one variant from the shared initialisation and evaluates it.
VariantResult run_variant(const AblationVariant& variant, const World& world, const Dataset& data,
                          const Referees& referees, const AblationConfig& cfg);

std::vector<VariantResult> run_ablation(const World& world, const Dataset& data,
                                        const Referees& referees, const AblationConfig& cfg);

/// Header `variant,attr_auc,id_auc`.
std::string ablation_csv(const std::vector<VariantResult>& results);

/// Test split slice helper: columns [train_size, train_size + count).
Matrix test_block(const Dataset& data, const Matrix& block, Eigen::Index count);

}  // namespace semflow
