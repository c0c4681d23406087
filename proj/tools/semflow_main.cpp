// SPDX-License-Identifier: Apache-2.0
//
// semflow: generate a synthetic world, train the conditional flow, edit, evaluate.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "run_config.hpp"
#include "semflow/kv_text.hpp"

namespace fs = std::filesystem;
using namespace semflow;
using semflow::cli::RunConfig;

namespace {

struct CommonArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config, "key=value configuration file");
  cmd->add_option("--seed", args.seed, "root seed");
  cmd->add_option("--out", args.out, "artifact directory (must exist)");
  cmd->add_option("--set", args.sets, "override one key, e.g. --set iterations=500");
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw IoError(path.string() + ": write failed");
}

RunConfig resolve(const CommonArgs& args) {
  RunConfig cfg;
  if (!args.config.empty()) cfg.apply_text(read_text(args.config));
  for (const auto& s : args.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value, got '" + s + "'");
    cfg.set(s.substr(0, eq), s.substr(eq + 1));
  }
  if (args.seed) cfg.seed = *args.seed;
  if (args.out) cfg.out = *args.out;
  cfg.finalize();
  if (!fs::is_directory(cfg.out)) throw IoError(cfg.out.string() + ": output directory does not exist");
  return cfg;
}

struct Artifacts {
  World world;
  Dataset data;
};

Artifacts load_artifacts(const RunConfig& cfg) {
  return {World(load_world_spec(cfg.out / "world.txt")), load_dataset(cfg.out / "dataset.sdfd")};
}

DynamicsNet flow_from(ParamSet params) {
  if (params.size() < 2 || params.size() % 2 != 0) throw IoError("flow checkpoint: unexpected tensor count");
  DynamicsDims dims;
  dims.depth = static_cast<int>(params.size() / 2) - 1;
  dims.latent_dim = static_cast<int>(params[params.size() - 2].value.rows());
  dims.hidden = static_cast<int>(params[0].value.rows());
  dims.cond_dim = static_cast<int>(params[0].value.cols()) - dims.latent_dim - 1;
  dims.validate();
  return {dims, std::move(params)};
}

SemanticEncoder encoder_from(ParamSet params) {
  if (params.size() < 6 || params.size() % 2 != 0) throw IoError("encoder checkpoint: unexpected tensor count");
  EncoderDims dims;
  dims.backbone_depth = static_cast<int>(params.size() / 2) - 3;
  dims.input_dim = static_cast<int>(params[0].value.cols());
  dims.hidden = dims.backbone_depth > 0 ? static_cast<int>(params[0].value.rows()) : dims.hidden;
  dims.head_hidden = static_cast<int>(params.at("head0.weight").rows());
  dims.attributes = static_cast<int>(params.at("head2.weight").rows());
  dims.validate();
  return {dims, std::move(params)};
}

EditModel load_model(const RunConfig& cfg, long checkpoint) {
  const std::string tag = std::to_string(checkpoint) + ".sdfw";
  return {flow_from(load_params(cfg.out / ("flow_" + tag))), encoder_from(load_params(cfg.out / ("enc_" + tag))),
          cfg.train.integrator};
}

std::string vec_text(const Matrix& v) {
  std::string out = "(";
  for (Eigen::Index i = 0; i < v.size(); ++i) out += (i ? ", " : "") + kv::format_double(v(i));
  return out + ")";
}

int cmd_gen_data(const RunConfig& cfg) {
  const World world(cfg.world);
  const Dataset ds = world.generate_dataset(cfg.samples);
  save_world_spec(cfg.out / "world.txt", cfg.world);
  save_dataset(cfg.out / "dataset.sdfd", ds);
  write_text(cfg.out / "run_config.txt", cfg.to_text());
  std::cout << "generated " << ds.size() << " records (train " << ds.train_size() << ", test " << ds.test_size()
            << "), K=" << cfg.world.attributes << " D_n=" << cfg.world.nuisance_dim
            << " D_w=" << cfg.world.latent_dim << " D_I=" << cfg.world.obs_dim << " -> "
            << (cfg.out / "dataset.sdfd").string() << "\n";
  return cli::kExitOk;
}

int cmd_train(const RunConfig& cfg) {
  const Artifacts art = load_artifacts(cfg);
  // Without distillation the encoder has no supervision; condition on the
  // frozen distilled classifier instead, as the ablation ladder does.
  const bool frozen = !cfg.train.use.kd;
  TrainConfig tc = cfg.train;
  tc.train_encoder = !frozen;
  SemanticEncoder enc = frozen ? fit_referees(art.world, art.data, cfg.referee_seed()).distilled
                               : initial_encoder(art.world, tc.seed);
  const TrainResult r = train(art.world, art.data, tc, initial_flow(art.world, tc.seed), std::move(enc), cfg.out);
  std::cout << "trained " << tc.iterations << " iterations ("
            << (frozen ? "frozen distilled encoder" : "joint encoder") << ")";
  if (!r.log.empty()) {
    const LossRow& last = r.log.back();
    std::cout << "; last losses nll=" << last.nll << " kd=" << last.kd << " mi=" << last.mi << " reg=" << last.reg;
  }
  std::cout << "\n";
  return cli::kExitOk;
}

int cmd_edit(const RunConfig& cfg, long checkpoint, int attribute, double target, long index) {
  const Artifacts art = load_artifacts(cfg);
  const EditModel model = load_model(cfg, checkpoint);
  const int k = model.encoder.dims.attributes;
  if (attribute < 0 || attribute >= k) {
    throw std::out_of_range("attribute index " + std::to_string(attribute) + " out of range [0, " +
                            std::to_string(k) + ")");
  }
  if (!(target >= 0 && target <= 1)) throw std::out_of_range("target must lie in [0, 1]");
  if (index < 0 || index >= art.data.size()) {
    throw std::out_of_range("record index " + std::to_string(index) + " out of range [0, " +
                            std::to_string(art.data.size()) + ")");
  }
  const Matrix w = art.data.w.col(index);
  const Matrix obs = art.data.obs.col(index);
  const Matrix s = encode(model.encoder, obs);
  Matrix s_hat = s;
  s_hat(attribute, 0) = target;
  const Matrix z1 = integrate_inverse(model.flow, w, s, model.integrator, false).z1;
  const Matrix w_e = edit(model.flow, z1, s_hat, model.integrator);
  const Matrix obs_e = art.world.observe(w_e);
  if (!w_e.allFinite() || !obs_e.allFinite()) throw NonFiniteError("edit produced a non-finite code", 0);
  const SemanticEncoder evaluator = fit_referees(art.world, art.data, cfg.referee_seed()).evaluator;

  const Factors f = art.world.recover_factors(w_e);
  const fs::path path = cfg.out / ("edited_" + std::to_string(index) + ".sdfd");
  save_dataset(path, Dataset{f.a, f.n, w_e, obs_e});
  std::cout << "s        = " << vec_text(s) << "\n"
            << "s_hat    = " << vec_text(s_hat) << "\n"
            << "|w-w_e|  = " << kv::format_double((w - w_e).norm()) << "\n"
            << "readout  = " << vec_text(encode(evaluator, obs_e)) << "\n"
            << "written  " << path.string() << "\n";
  return cli::kExitOk;
}

void write_curves(const fs::path& dir, const std::string& prefix,
                  const std::vector<std::vector<MetricsRecord>>& curves) {
  for (std::size_t j = 0; j < curves.size(); ++j) {
    write_text(dir / (prefix + "attr" + std::to_string(j) + ".csv"), curve_csv(curves[j]));
  }
}

int cmd_eval(const RunConfig& cfg, long checkpoint) {
  const Artifacts art = load_artifacts(cfg);
  const EditModel model = load_model(cfg, checkpoint);
  const Referees ref = fit_referees(art.world, art.data, cfg.referee_seed());
  const auto curves =
      evaluate_model(model, art.world, art.data, ref.evaluator, default_strength_grid(), cfg.eval_samples);
  write_curves(cfg.out, "curve_", curves);
  const Matrix test_obs = test_block(art.data, art.data.obs, art.data.test_size());
  write_text(cfg.out / "histogram.csv", histogram_csv(histogram_export(model.encoder, test_obs, cfg.bins)));
  for (std::size_t j = 0; j < curves.size(); ++j) {
    const MetricsRecord& last = curves[j].back();
    std::cout << "attribute " << j << ": strength " << last.strength << " accuracy " << last.editing_accuracy
              << " preservation " << last.attribute_preservation << " identity " << last.identity_cosine << "\n";
  }
  const auto [attr_auc, id_auc] = mean_aucs(curves);
  std::cout << "mean AUC: attribute " << attr_auc << " identity " << id_auc << "\n";
  return cli::kExitOk;
}

int cmd_ablate(const RunConfig& cfg) {
  const Artifacts art = load_artifacts(cfg);
  const Referees ref = fit_referees(art.world, art.data, cfg.referee_seed());
  AblationConfig ac;
  ac.train = cfg.train;
  ac.eval_samples = cfg.eval_samples;
  const auto results = run_ablation(art.world, art.data, ref, ac);
  const Matrix test_obs = test_block(art.data, art.data.obs, art.data.test_size());
  for (const auto& r : results) {
    write_curves(cfg.out, "ablation_" + r.variant.name + "_", r.curves);
    write_text(cfg.out / ("ablation_" + r.variant.name + "_histogram.csv"),
               histogram_csv(histogram_export(r.model.encoder, test_obs, cfg.bins)));
    std::cout << r.variant.name << ": attribute AUC " << r.attr_auc << " identity AUC " << r.id_auc << "\n";
  }
  write_text(cfg.out / "ablation.csv", ablation_csv(results));
  return cli::kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attribute editing with a conditional continuous normalizing flow on a synthetic world"};
  app.require_subcommand(1);
  app.footer(
      "Artifacts live in --out: world.txt, dataset.sdfd, flow_N.sdfw, enc_N.sdfw, CSVs.\n"
      "Exit codes: 0 success, 1 bad arguments/config or I/O failure, 2 non-finite values.");

  CommonArgs common;
  auto* gen = app.add_subcommand("gen-data", "generate the world spec and dataset");
  auto* trn = app.add_subcommand("train", "train flow and encoder; writes checkpoints and loss_log.csv");
  auto* edt = app.add_subcommand("edit", "edit one record and write it as a dataset file");
  auto* evl = app.add_subcommand("eval", "strength sweeps per attribute and encoder histograms");
  auto* abl = app.add_subcommand("ablate", "train and evaluate the four-variant ablation ladder");
  for (auto* cmd : {gen, trn, edt, evl, abl}) add_common(cmd, common);

  bool no_kd = false;
  bool no_mi = false;
  bool no_reg = false;
  trn->add_flag("--no-kd", no_kd, "disable the distillation loss (encoder becomes the frozen classifier)");
  trn->add_flag("--no-mi", no_mi, "disable the mutual-information loss");
  trn->add_flag("--no-reg", no_reg, "disable the latent regularizer");

  std::optional<long> checkpoint;
  int attribute = 0;
  double target = 1.0;
  long index = 0;
  for (auto* cmd : {edt, evl}) cmd->add_option("--checkpoint", checkpoint, "checkpoint iteration (default: iterations)");
  edt->add_option("--attribute", attribute, "attribute index")->required();
  edt->add_option("--target", target, "target value in [0, 1]")->required();
  edt->add_option("--index", index, "dataset record index")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    return cli::kExitUsage;
  }

  try {
    RunConfig cfg = resolve(common);
    if (no_kd) cfg.train.use.kd = false;
    if (no_mi) cfg.train.use.mi = false;
    if (no_reg) cfg.train.use.reg = false;
    const long ckpt = checkpoint.value_or(cfg.train.iterations);
    if (*gen) return cmd_gen_data(cfg);
    if (*trn) return cmd_train(cfg);
    if (*edt) return cmd_edit(cfg, ckpt, attribute, target, index);
    if (*evl) return cmd_eval(cfg, ckpt);
    if (*abl) return cmd_ablate(cfg);
  } catch (const NonFiniteError& e) {
    std::cerr << "error: " << e.what() << " (at step " << e.index() << ")\n";
    return cli::kExitNonFinite;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::kExitUsage;
  }
  return cli::kExitUsage;
}
