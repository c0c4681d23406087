// SPDX-License-Identifier: Apache-2.0

#include "semflow/training.hpp"

#include <cmath>
#include <sstream>

#include "binary_io.hpp"
#include "semflow/kv_text.hpp"

namespace semflow {

void TrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (iterations < 0) throw std::invalid_argument("TrainConfig: iterations must be >= 0");
  if (!(beta1 > 0 && beta1 < 1) || !(beta2 > 0 && beta2 < 1)) {
    throw std::invalid_argument("TrainConfig: betas must lie in (0, 1)");
  }
  if (!(lr > 0)) throw std::invalid_argument("TrainConfig: lr must be positive");
  if (checkpoint_every < 0) throw std::invalid_argument("TrainConfig: checkpoint_every must be >= 0");
  integrator.validate();
}

AdamState AdamState::zeros_like(const ParamSet& params) {
  AdamState s;
  for (const auto& e : params) {
    s.m.push_back(Matrix::Zero(e.value.rows(), e.value.cols()));
    s.v.push_back(Matrix::Zero(e.value.rows(), e.value.cols()));
  }
  return s;
}

void adam_step(ParamSet& params, const std::vector<Matrix>& grads, AdamState& state,
               const TrainConfig& cfg) {
  if (grads.size() != params.size() || state.m.size() != params.size()) {
    throw std::invalid_argument("adam_step: parameter/gradient/state counts differ");
  }
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& p = params[i].value;
    const Matrix& g = grads[i];
    if (g.rows() != p.rows() || g.cols() != p.cols()) {
      throw ad::ShapeError("adam_step: " + params[i].name, p.rows(), p.cols(), g.rows(), g.cols());
    }
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g.cwiseAbs2();
    p.array() -= cfg.lr * (state.m[i].array() / c1) / ((state.v[i].array() / c2).sqrt() + cfg.eps);
  }
}

Manipulation sample_manipulation(const Matrix& s, std::mt19937_64& rng) {
  Manipulation out{s, std::vector<int>(static_cast<std::size_t>(s.cols()))};
  std::uniform_int_distribution<int> pick(0, static_cast<int>(s.rows()) - 1);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (Eigen::Index c = 0; c < s.cols(); ++c) {
    const int j = pick(rng);
    out.index[static_cast<std::size_t>(c)] = j;
    out.s_hat(j, c) = uni(rng);
  }
  return out;
}

namespace {

// (1/N) sum_i ||a_i - b_i||^2 over columns.
Var mean_column_sq(const Var& a, const Var& b) {
  return sum(square(a - b)) * (1.0 / static_cast<double>(a.cols()));
}

}  // namespace

Var loss_nll(const Var& log_p) { return -mean(log_p); }

Var loss_kd(const Var& targets, const Var& predicted) { return mean_column_sq(targets, predicted); }

Var loss_mi(const Var& predicted_edited, const Var& s_hat) {
  return mean_column_sq(predicted_edited, s_hat);
}

Var loss_reg(const Var& w, const Var& w_edited) { return mean_column_sq(w, w_edited); }

LossTerms compute_losses(const BoundDynamics& flow, const EncoderDims& enc_dims,
                         const std::vector<Var>& enc_params, const World& world, const Batch& batch,
                         const LossSwitches& use, const IntegratorConfig& integrator,
                         std::mt19937_64& rng) {
  Tape& tape = flow.tape();
  const Var zero = tape.constant(0.0);
  LossTerms terms{zero, zero, zero, zero, zero, Var{}};

  Var w = tape.constant(batch.w);
  Var obs = tape.constant(batch.obs);
  Var s = encode(enc_dims, enc_params, obs);
  // The flow is conditioned on the encoder's prediction without letting the
  // likelihood push gradients into the encoder.
  Var condition = tape.constant(s.value());

  if (use.kd) terms.kd = loss_kd(tape.constant(batch.labels), s);

  const bool need_edit = use.mi || use.reg;
  if (use.nll || need_edit) {
    InverseResult inv = integrate_inverse(flow, w, condition, integrator, use.nll);
    if (use.nll) terms.nll = loss_nll(standard_normal_logpdf(inv.z1) + inv.delta_logp);
    if (need_edit) {
      Manipulation m = sample_manipulation(s.value(), rng);
      Var s_hat = tape.constant(std::move(m.s_hat));
      terms.w_edited = edit(flow, inv.z1, s_hat, integrator);
      if (use.mi) terms.mi = loss_mi(encode(enc_dims, enc_params, world.observe(terms.w_edited)), s_hat);
      if (use.reg) terms.reg = loss_reg(w, terms.w_edited);
    }
  }
  terms.total = total_loss(terms, use);
  return terms;
}

Var total_loss(const LossTerms& terms, const LossSwitches& use) {
  Var total = terms.nll.tape()->constant(0.0);
  if (use.nll) total = total + terms.nll;
  if (use.kd) total = total + terms.kd;
  if (use.mi) total = total + terms.mi;
  if (use.reg) total = total + terms.reg;
  return total;
}

std::string loss_log_csv(const std::vector<LossRow>& rows) {
  std::ostringstream os;
  os << "iter,l_nll,l_kd,l_mi,l_reg,total\n";
  for (const auto& r : rows) {
    os << r.iter << ',' << kv::format_double(r.nll) << ',' << kv::format_double(r.kd) << ','
       << kv::format_double(r.mi) << ',' << kv::format_double(r.reg) << ','
       << kv::format_double(r.total) << '\n';
  }
  return os.str();
}

namespace {

Batch gather(const Dataset& data, const Matrix& labels, const std::vector<Eigen::Index>& idx) {
  const auto n = static_cast<Eigen::Index>(idx.size());
  Batch b{Matrix(data.w.rows(), n), Matrix(data.obs.rows(), n), Matrix(labels.rows(), n)};
  for (Eigen::Index c = 0; c < n; ++c) {
    const Eigen::Index i = idx[static_cast<std::size_t>(c)];
    b.w.col(c) = data.w.col(i);
    b.obs.col(c) = data.obs.col(i);
    b.labels.col(c) = labels.col(i);
  }
  return b;
}

void write_checkpoint(const std::filesystem::path& dir, long iter, const DynamicsNet& flow,
                      const SemanticEncoder& enc) {
  save_params(dir / ("flow_" + std::to_string(iter) + ".sdfw"), flow.params);
  save_params(dir / ("enc_" + std::to_string(iter) + ".sdfw"), enc.params);
}

}  // namespace

TrainResult train(const World& world, const Dataset& data, const TrainConfig& cfg, DynamicsNet flow,
                  SemanticEncoder encoder, const std::optional<std::filesystem::path>& out_dir) {
  cfg.validate();
  if (data.size() == 0) throw std::invalid_argument("train: empty dataset");
  const Matrix labels = world.oracle_labels(data);
  const Eigen::Index pool = data.train_size();

  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<Eigen::Index> pick(0, pool - 1);
  AdamState flow_state = AdamState::zeros_like(flow.params);
  AdamState enc_state = AdamState::zeros_like(encoder.params);

  TrainResult result{std::move(flow), std::move(encoder), {}};
  result.log.reserve(static_cast<std::size_t>(cfg.iterations));
  if (out_dir) write_checkpoint(*out_dir, 0, result.flow, result.encoder);

  std::vector<Eigen::Index> idx(static_cast<std::size_t>(cfg.batch_size));
  for (long it = 0; it < cfg.iterations; ++it) {
    for (auto& i : idx) i = pick(rng);
    const Batch batch = gather(data, labels, idx);

    Tape tape;
    BoundDynamics bound = bind_dynamics(tape, result.flow);
    std::vector<Var> enc_leaves;
    for (const auto& e : result.encoder.params) {
      enc_leaves.push_back(cfg.train_encoder ? tape.variable(e.value) : tape.constant(e.value));
    }

    LossTerms terms;
    try {
      terms = compute_losses(bound, result.encoder.dims, enc_leaves, world, batch, cfg.use,
                             cfg.integrator, rng);
      if (!std::isfinite(terms.total.scalar())) throw NonFiniteError("train: non-finite loss", it);
    } catch (const NonFiniteError& e) {
      if (out_dir) {
        write_checkpoint(*out_dir, it, result.flow, result.encoder);
        io::write_atomic(*out_dir / "loss_log.csv", loss_log_csv(result.log));
      }
      throw TrainingAborted(std::string("training aborted: ") + e.what(), it);
    }

    tape.backward(terms.total);
    adam_step(result.flow.params, gradients(bound.leaves()), flow_state, cfg);
    if (cfg.train_encoder) adam_step(result.encoder.params, gradients(enc_leaves), enc_state, cfg);

    result.log.push_back(LossRow{it, terms.nll.scalar(), terms.kd.scalar(), terms.mi.scalar(),
                                 terms.reg.scalar(), terms.total.scalar()});

    const long done = it + 1;
    if (out_dir && cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0 && done != cfg.iterations) {
      write_checkpoint(*out_dir, done, result.flow, result.encoder);
    }
  }
  if (out_dir) {
    if (cfg.iterations > 0) write_checkpoint(*out_dir, cfg.iterations, result.flow, result.encoder);
    io::write_atomic(*out_dir / "loss_log.csv", loss_log_csv(result.log));
  }
  return result;
}

SemanticEncoder fit_encoder(SemanticEncoder encoder, const Matrix& obs, const Matrix& targets,
                            const FitConfig& cfg) {
  if (obs.cols() != targets.cols() || obs.cols() == 0) {
    throw ad::ShapeError("fit_encoder", obs.rows(), obs.cols(), targets.rows(), targets.cols());
  }
  TrainConfig adam;
  adam.lr = cfg.lr;
  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<Eigen::Index> pick(0, obs.cols() - 1);
  AdamState state = AdamState::zeros_like(encoder.params);
  Matrix xb(obs.rows(), cfg.batch_size);
  Matrix yb(targets.rows(), cfg.batch_size);
  for (int it = 0; it < cfg.iterations; ++it) {
    for (Eigen::Index c = 0; c < cfg.batch_size; ++c) {
      const Eigen::Index i = pick(rng);
      xb.col(c) = obs.col(i);
      yb.col(c) = targets.col(i);
    }
    Tape tape;
    std::vector<Var> leaves = bind(tape, encoder.params);
    Var loss = loss_kd(tape.constant(yb), encode(encoder.dims, leaves, tape.constant(xb)));
    tape.backward(loss);
    adam_step(encoder.params, gradients(leaves), state, adam);
  }
  return encoder;
}

}  // namespace semflow
