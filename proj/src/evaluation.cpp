// SPDX-License-Identifier: Apache-2.0

#include "semflow/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "semflow/kv_text.hpp"

namespace semflow {

namespace {

bool high(double v) { return v >= kDecisionThreshold; }

void require_nonempty(const Matrix& m, const char* what) {
  if (m.cols() == 0) throw std::invalid_argument(std::string(what) + ": empty sample set");
}

void check_record(const MetricsRecord& r) {
  const bool ok = std::isfinite(r.strength) && r.editing_accuracy >= 0 && r.editing_accuracy <= 1 &&
                  r.attribute_preservation >= 0 && r.attribute_preservation <= 1 &&
                  r.identity_cosine >= -1 - 1e-12 && r.identity_cosine <= 1 + 1e-12;
  if (!ok) throw std::runtime_error("metrics record out of bounds");
}

}  // namespace

double editing_accuracy(const Matrix& edited_pred, int j, const RowVector& target) {
  require_nonempty(edited_pred, "editing_accuracy");
  if (target.size() != edited_pred.cols()) {
    throw ad::ShapeError("editing_accuracy", edited_pred.rows(), edited_pred.cols(), 1, target.size());
  }
  long hits = 0;
  for (Eigen::Index c = 0; c < edited_pred.cols(); ++c) {
    if (high(edited_pred(j, c)) == high(target(c))) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(edited_pred.cols());
}

double attribute_preservation(const Matrix& original_pred, const Matrix& edited_pred, int j) {
  require_nonempty(edited_pred, "attribute_preservation");
  if (original_pred.rows() != edited_pred.rows() || original_pred.cols() != edited_pred.cols()) {
    throw ad::ShapeError("attribute_preservation", original_pred.rows(), original_pred.cols(),
                         edited_pred.rows(), edited_pred.cols());
  }
  long kept = 0;
  for (Eigen::Index c = 0; c < edited_pred.cols(); ++c) {
    bool same = true;
    for (Eigen::Index k = 0; k < edited_pred.rows(); ++k) {
      if (k != j && high(original_pred(k, c)) != high(edited_pred(k, c))) same = false;
    }
    if (same) ++kept;
  }
  return static_cast<double>(kept) / static_cast<double>(edited_pred.cols());
}

IdentityScore identity_preservation(const World& world, const Matrix& original_obs,
                                    const Matrix& edited_obs) {
  require_nonempty(edited_obs, "identity_preservation");
  const RowVector cos =
      column_cosine(world.identity_embed(original_obs), world.identity_embed(edited_obs));
  IdentityScore out;
  double total = 0;
  long used = 0;
  for (Eigen::Index c = 0; c < cos.size(); ++c) {
    if (std::isnan(cos(c))) {
      ++out.excluded;
    } else {
      total += cos(c);
      ++used;
    }
  }
  if (used == 0) throw std::invalid_argument("identity_preservation: every embedding had zero norm");
  out.mean_cosine = total / static_cast<double>(used);
  return out;
}

RowVector opposite_targets(const Matrix& original_pred, int j) {
  RowVector t(original_pred.cols());
  for (Eigen::Index c = 0; c < t.size(); ++c) t(c) = high(original_pred(j, c)) ? 0.0 : 1.0;
  return t;
}

Matrix edit_condition(const Matrix& s, int j, const RowVector& target, double strength) {
  Matrix out = s;
  out.row(j) = (1.0 - strength) * s.row(j) + strength * target;
  return out;
}

std::vector<double> default_strength_grid() {
  std::vector<double> g;
  for (int i = 0; i <= 20; ++i) g.push_back(i / 20.0);
  return g;
}

std::vector<MetricsRecord> strength_sweep(const EditModel& model, const World& world,
                                          const SemanticEncoder& evaluator, const Matrix& w,
                                          const Matrix& obs, int j, const std::vector<double>& grid) {
  require_nonempty(obs, "strength_sweep");
  if (j < 0 || j >= model.encoder.dims.attributes) {
    throw std::out_of_range("strength_sweep: attribute index " + std::to_string(j) + " out of range");
  }
  const Matrix s = encode(model.encoder, obs);
  const Matrix z1 = integrate_inverse(model.flow, w, s, model.integrator, false).z1;
  const Matrix original_pred = encode(evaluator, obs);
  const RowVector target = opposite_targets(original_pred, j);

  std::vector<MetricsRecord> curve;
  for (double strength : grid) {
    if (strength < 0 || strength > 1) throw std::invalid_argument("strength_sweep: strength outside [0, 1]");
    const Matrix w_e = edit(model.flow, z1, edit_condition(s, j, target, strength), model.integrator);
    const Matrix obs_e = world.observe(w_e);
    const Matrix pred = encode(evaluator, obs_e);
    MetricsRecord r{strength, editing_accuracy(pred, j, target),
                    attribute_preservation(original_pred, pred, j),
                    identity_preservation(world, obs, obs_e).mean_cosine};
    check_record(r);
    curve.push_back(r);
    if (r.editing_accuracy >= kTargetAccuracy) break;
  }
  return curve;
}

double preservation_auc(const std::vector<MetricsRecord>& curve, PreservationAxis axis) {
  if (curve.size() < 2) throw std::invalid_argument("preservation_auc: need at least two points");
  std::vector<std::pair<double, double>> pts;
  for (const auto& r : curve) {
    pts.emplace_back(r.editing_accuracy,
                     axis == PreservationAxis::Attribute ? r.attribute_preservation : r.identity_cosine);
  }
  std::stable_sort(pts.begin(), pts.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  const double span = pts.back().first - pts.front().first;
  if (!(span > 1e-12)) throw std::invalid_argument("preservation_auc: degenerate accuracy span");
  double area = 0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    area += 0.5 * (pts[i].second + pts[i - 1].second) * (pts[i].first - pts[i - 1].first);
  }
  return area / span;
}

std::string curve_csv(const std::vector<MetricsRecord>& curve) {
  std::ostringstream os;
  os << "strength,edit_acc,attr_pres,id_cosine\n";
  for (const auto& r : curve) {
    os << kv::format_double(r.strength) << ',' << kv::format_double(r.editing_accuracy) << ','
       << kv::format_double(r.attribute_preservation) << ',' << kv::format_double(r.identity_cosine)
       << '\n';
  }
  return os.str();
}

std::vector<Histogram> histogram_export(const SemanticEncoder& encoder, const Matrix& obs, int bins) {
  if (bins < 2) throw std::invalid_argument("histogram_export: need at least two bins");
  const Matrix s = encode(encoder, obs);
  std::vector<Histogram> out;
  for (Eigen::Index k = 0; k < s.rows(); ++k) {
    Histogram h{static_cast<int>(k), {}, std::vector<long>(static_cast<std::size_t>(bins), 0)};
    for (int b = 0; b <= bins; ++b) h.edges.push_back(static_cast<double>(b) / bins);
    for (Eigen::Index c = 0; c < s.cols(); ++c) {
      const int b = std::clamp(static_cast<int>(s(k, c) * bins), 0, bins - 1);
      ++h.counts[static_cast<std::size_t>(b)];
    }
    out.push_back(std::move(h));
  }
  return out;
}

std::string histogram_csv(const std::vector<Histogram>& hists) {
  std::ostringstream os;
  os << "attribute,bin_lo,bin_hi,count\n";
  for (const auto& h : hists) {
    for (std::size_t b = 0; b < h.counts.size(); ++b) {
      os << h.attribute << ',' << kv::format_double(h.edges[b]) << ','
         << kv::format_double(h.edges[b + 1]) << ',' << h.counts[b] << '\n';
    }
  }
  return os.str();
}

std::vector<AblationVariant> ablation_ladder() {
  return {
      {"baseline", {true, false, false, false}, true},
      {"reg", {true, false, false, true}, true},
      {"reg_mi_frozen", {true, false, true, true}, true},
      {"full", {true, true, true, true}, false},
  };
}

Matrix test_block(const Dataset& data, const Matrix& block, Eigen::Index count) {
  const Eigen::Index n = std::min(count, data.test_size());
  return block.middleCols(data.train_size(), n);
}

Referees fit_referees(const World& world, const Dataset& data, std::uint64_t seed) {
  const Eigen::Index n = data.train_size();
  EncoderDims dims;
  dims.input_dim = world.spec().obs_dim;
  dims.attributes = world.spec().attributes;
  FitConfig fit;
  fit.seed = derive_seed(seed, 10);
  Referees r;
  r.evaluator = fit_encoder(init_encoder(dims, derive_seed(seed, 11)), data.obs.leftCols(n),
                            data.a.leftCols(n), fit);
  fit.seed = derive_seed(seed, 12);
  r.distilled = fit_encoder(init_encoder(dims, derive_seed(seed, 13)), data.obs.leftCols(n),
                            world.oracle_labels(data).leftCols(n), fit);
  return r;
}

std::pair<double, double> mean_aucs(const std::vector<std::vector<MetricsRecord>>& curves) {
  double attr = 0;
  double id = 0;
  for (const auto& c : curves) {
    try {
      attr += preservation_auc(c, PreservationAxis::Attribute);
      id += preservation_auc(c, PreservationAxis::Identity);
    } catch (const std::invalid_argument&) {
      // A curve that never moves editing accuracy encloses no area.
    }
  }
  const auto n = static_cast<double>(curves.size());
  return {attr / n, id / n};
}

std::vector<std::vector<MetricsRecord>> evaluate_model(const EditModel& model, const World& world,
                                                       const Dataset& data,
                                                       const SemanticEncoder& evaluator,
                                                       const std::vector<double>& grid,
                                                       Eigen::Index eval_samples) {
  const Matrix w = test_block(data, data.w, eval_samples);
  const Matrix obs = test_block(data, data.obs, eval_samples);
  std::vector<std::vector<MetricsRecord>> curves;
  for (int j = 0; j < model.encoder.dims.attributes; ++j) {
    curves.push_back(strength_sweep(model, world, evaluator, w, obs, j, grid));
  }
  return curves;
}

DynamicsNet initial_flow(const World& world, std::uint64_t train_seed) {
  DynamicsDims dims;
  dims.latent_dim = world.spec().latent_dim;
  dims.cond_dim = world.spec().attributes;
  return init_dynamics(dims, derive_seed(train_seed, 20));
}

SemanticEncoder initial_encoder(const World& world, std::uint64_t train_seed) {
  EncoderDims dims;
  dims.input_dim = world.spec().obs_dim;
  dims.attributes = world.spec().attributes;
  return init_encoder(dims, derive_seed(train_seed, 21));
}

VariantResult run_variant(const AblationVariant& variant, const World& world, const Dataset& data,
                          const Referees& referees, const AblationConfig& cfg) {
  TrainConfig tc = cfg.train;
  tc.use = variant.use;
  tc.train_encoder = !variant.frozen_encoder;
  DynamicsNet flow = initial_flow(world, tc.seed);
  SemanticEncoder enc = variant.frozen_encoder ? referees.distilled : initial_encoder(world, tc.seed);

  TrainResult trained = train(world, data, tc, std::move(flow), std::move(enc));
  VariantResult out;
  out.variant = variant;
  out.model = EditModel{std::move(trained.flow), std::move(trained.encoder), tc.integrator};
  out.log = std::move(trained.log);
  out.curves = evaluate_model(out.model, world, data, referees.evaluator, cfg.grid, cfg.eval_samples);
  std::tie(out.attr_auc, out.id_auc) = mean_aucs(out.curves);
  return out;
}

std::vector<VariantResult> run_ablation(const World& world, const Dataset& data,
                                        const Referees& referees, const AblationConfig& cfg) {
  std::vector<VariantResult> out;
  for (const auto& v : ablation_ladder()) out.push_back(run_variant(v, world, data, referees, cfg));
  return out;
}

std::string ablation_csv(const std::vector<VariantResult>& results) {
  std::ostringstream os;
  os << "variant,attr_auc,id_auc\n";
  for (const auto& r : results) {
    os << r.variant.name << ',' << kv::format_double(r.attr_auc) << ',' << kv::format_double(r.id_auc)
       << '\n';
  }
  return os.str();
}

}  // namespace semflow
