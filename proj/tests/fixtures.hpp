// SPDX-License-Identifier: Apache-2.0
//
// Miniature configuration shared by the training tests and the acceptance run:
// D_w = 4, K = 2, five RK4 steps.

#pragma once

#include <random>
#include <string>
#include <vector>

#include "semflow/training.hpp"

namespace semflow::fixture {

inline WorldSpec mini_world_spec() {
  WorldSpec spec;
  spec.attributes = 2;
  spec.nuisance_dim = 2;
  spec.latent_dim = 4;
  spec.obs_dim = 6;
  spec.id_dim = 4;
  spec.priors = {AttributePrior::Bimodal, AttributePrior::Smooth};
  return spec;
}

inline IntegratorConfig mini_integrator() {
  IntegratorConfig cfg;
  cfg.steps = 5;
  return cfg;
}

struct Mini {
  World world{mini_world_spec()};
  DynamicsNet flow;
  SemanticEncoder encoder;
  Batch batch;
  Matrix s;      ///< encoder prediction at the base parameters (the detached condition)
  Matrix s_hat;  ///< manipulated targets
  ParamSet joint;

  explicit Mini(std::uint64_t seed) {
    flow = init_dynamics({4, 2, 8, 2}, seed);
    // Undo most of the output damping so every parameter has a visible effect.
    flow.params[flow.params.size() - 2].value *= 30.0;
    EncoderDims ed;
    ed.input_dim = 6;
    ed.hidden = 8;
    ed.head_hidden = 6;
    ed.attributes = 2;
    encoder = init_encoder(ed, seed + 1);
    const Dataset ds = world.generate_dataset(5);
    batch = Batch{ds.w, ds.obs, world.oracle_labels(ds)};
    s = encode(encoder, batch.obs);
    std::mt19937_64 rng(seed);
    s_hat = sample_manipulation(s, rng).s_hat;
    for (const auto& e : flow.params) joint.add("flow." + e.name, e.value);
    for (const auto& e : encoder.params) joint.add("enc." + e.name, e.value);
  }

  [[nodiscard]] std::size_t flow_count() const { return flow.params.size(); }

  BoundDynamics flow_of(const std::vector<Var>& leaves) const {
    return bind_dynamics(flow.dims,
                         std::vector<Var>(leaves.begin(), leaves.begin() + static_cast<long>(flow_count())));
  }
  std::vector<Var> enc_of(const std::vector<Var>& leaves) const {
    return std::vector<Var>(leaves.begin() + static_cast<long>(flow_count()), leaves.end());
  }

  Var edited(Tape& t, const BoundDynamics& b) const {
    const IntegratorConfig cfg = mini_integrator();
    Var z1 = integrate_inverse(b, t.constant(batch.w), t.constant(s), cfg, false).z1;
    return edit(b, z1, t.constant(s_hat), cfg);
  }

  // Each term as a function of the joint parameter set, with the detached
  // quantities (s as condition, s_hat) held at their base values.
  Var nll(Tape& t, const std::vector<Var>& v) const {
    return loss_nll(log_likelihood(flow_of(v), t.constant(batch.w), t.constant(s), mini_integrator()));
  }
  Var kd(Tape& t, const std::vector<Var>& v) const {
    return loss_kd(t.constant(batch.labels), encode(encoder.dims, enc_of(v), t.constant(batch.obs)));
  }
  Var mi(Tape& t, const std::vector<Var>& v) const {
    Var obs_e = world.observe(edited(t, flow_of(v)));
    return loss_mi(encode(encoder.dims, enc_of(v), obs_e), t.constant(s_hat));
  }
  Var reg(Tape& t, const std::vector<Var>& v) const {
    return loss_reg(t.constant(batch.w), edited(t, flow_of(v)));
  }
};

}  // namespace semflow::fixture
