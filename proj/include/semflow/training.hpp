// SPDX-License-Identifier: Apache-2.0
//
// Joint optimisation of the flow and the semantic encoder.
//
//   L = L_nll + L_kd + L_mi + L_reg        (unit weights, each term switchable)
//
//   L_nll  mean -log p(w | s), with s = E_s(I) held constant
//   L_kd   (1/N) sum ||C(I) - E_s(I)||^2
//   L_mi   (1/N) sum ||E_s(I_hat) - s_hat||^2,   I_hat = G(edit(z1, s_hat))
//   L_reg  (1/N) sum ||w - w_e||^2

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "semflow/encoder.hpp"
#include "semflow/ode_flow.hpp"
#include "semflow/world.hpp"

namespace semflow {

struct LossSwitches {
  bool nll = true;
  bool kd = true;
  bool mi = true;
  bool reg = true;
};

struct TrainConfig {
  int batch_size = 16;
  int iterations = 10000;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;
  LossSwitches use;
  bool train_encoder = true;  ///< false keeps the encoder fixed (frozen classifier)
  IntegratorConfig integrator;
  std::uint64_t seed = 0;
  int checkpoint_every = 0;  ///< 0: only the initial and final checkpoints

  void validate() const;
};

struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  long step = 0;

  static AdamState zeros_like(const ParamSet& params);
};

/// Bias-corrected Adam update, in place.
void adam_step(ParamSet& params, const std::vector<Matrix>& grads, AdamState& state,
               const TrainConfig& cfg);

/// One attribute per column is resampled uniformly on [0, 1].
struct Manipulation {
  Matrix s_hat;                     ///< K x B
  std::vector<int> index;           ///< manipulated attribute per column
};
Manipulation sample_manipulation(const Matrix& s, std::mt19937_64& rng);

Var loss_nll(const Var& log_p);
Var loss_kd(const Var& targets, const Var& predicted);
Var loss_mi(const Var& predicted_edited, const Var& s_hat);
Var loss_reg(const Var& w, const Var& w_edited);

struct Batch {
  Matrix w;       ///< D_w x B
  Matrix obs;     ///< D_I x B
  Matrix labels;  ///< K x B, classifier targets
};

/// All loss terms built on one tape. Disabled terms are constant zeros.
struct LossTerms {
  Var nll;
  Var kd;
  Var mi;
  Var reg;
  Var total;
  Var w_edited;  ///< set when mi or reg is enabled
};

LossTerms compute_losses(const BoundDynamics& flow, const EncoderDims& enc_dims,
                         const std::vector<Var>& enc_params, const World& world, const Batch& batch,
                         const LossSwitches& use, const IntegratorConfig& integrator,
                         std::mt19937_64& rng);

/// Sum of the enabled terms.
Var total_loss(const LossTerms& terms, const LossSwitches& use);

struct LossRow {
  long iter = 0;
  double nll = 0;
  double kd = 0;
  double mi = 0;
  double reg = 0;
  double total = 0;
};

/// Header `iter,l_nll,l_kd,l_mi,l_reg,total`, one row per iteration.
std::string loss_log_csv(const std::vector<LossRow>& rows);

struct TrainResult {
  DynamicsNet flow;
  SemanticEncoder encoder;
  std::vector<LossRow> log;
};

/// Training stopped on a non-finite loss; the last good state was checkpointed.
class TrainingAborted : public NonFiniteError {
 public:
  using NonFiniteError::NonFiniteError;
};

/// Runs the iteration loop. With `out_dir`, writes flow_{iter}.sdfw / enc_{iter}.sdfw
/// (iteration 0, every checkpoint_every, and the last) and loss_log.csv.
TrainResult train(const World& world, const Dataset& data, const TrainConfig& cfg, DynamicsNet flow,
                  SemanticEncoder encoder, const std::optional<std::filesystem::path>& out_dir = {});

struct FitConfig {
  int iterations = 3000;
  int batch_size = 64;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

/// Supervised regression of encoder outputs onto targets (squared error), on all
/// columns of obs/targets. Used for the frozen evaluation regressor and for the
/// distilled classifier that stands in for a pre-trained encoder.
SemanticEncoder fit_encoder(SemanticEncoder encoder, const Matrix& obs, const Matrix& targets,
                            const FitConfig& cfg);

}  // namespace semflow
