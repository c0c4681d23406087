// SPDX-License-Identifier: Apache-2.0

#include "run_config.hpp"

#include <sstream>

#include "semflow/kv_text.hpp"

namespace semflow::cli {

namespace {

std::string bool_text(bool b) { return b ? "true" : "false"; }

std::string priors_text(const std::vector<AttributePrior>& priors) {
  std::string out;
  for (std::size_t i = 0; i < priors.size(); ++i) {
    if (i) out += ",";
    out += priors[i] == AttributePrior::Bimodal ? "bimodal" : "smooth";
  }
  return out;
}

}  // namespace

TrainConfig RunConfig::desk_train_config() {
  TrainConfig cfg;
  cfg.iterations = 2000;
  return cfg;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  using namespace kv;
  if (key == "seed") seed = to_u64(key, value);
  else if (key == "out") out = value;
  else if (key == "samples") samples = to_int(key, value);
  else if (key == "attributes") world.attributes = to_int(key, value);
  else if (key == "nuisance_dim") world.nuisance_dim = to_int(key, value);
  else if (key == "latent_dim") world.latent_dim = to_int(key, value);
  else if (key == "obs_dim") world.obs_dim = to_int(key, value);
  else if (key == "id_dim") world.id_dim = to_int(key, value);
  else if (key == "noise_sigma") world.noise_sigma = to_double(key, value);
  else if (key == "priors") {
    world.priors.clear();
    for (const auto& item : split_list(value)) {
      if (item == "bimodal") world.priors.push_back(AttributePrior::Bimodal);
      else if (item == "smooth") world.priors.push_back(AttributePrior::Smooth);
      else throw std::invalid_argument("priors: unknown prior '" + item + "'");
    }
    priors_explicit_ = true;
  }
  else if (key == "batch_size") train.batch_size = to_int(key, value);
  else if (key == "iterations") train.iterations = to_int(key, value);
  else if (key == "lr") train.lr = to_double(key, value);
  else if (key == "beta1") train.beta1 = to_double(key, value);
  else if (key == "beta2") train.beta2 = to_double(key, value);
  else if (key == "eps") train.eps = to_double(key, value);
  else if (key == "use_nll") train.use.nll = to_bool(key, value);
  else if (key == "use_kd") train.use.kd = to_bool(key, value);
  else if (key == "use_mi") train.use.mi = to_bool(key, value);
  else if (key == "use_reg") train.use.reg = to_bool(key, value);
  else if (key == "checkpoint_every") train.checkpoint_every = to_int(key, value);
  else if (key == "t0") train.integrator.t0 = to_double(key, value);
  else if (key == "t1") train.integrator.t1 = to_double(key, value);
  else if (key == "steps") train.integrator.steps = to_int(key, value);
  else if (key == "eval_samples") eval_samples = to_int(key, value);
  else if (key == "bins") bins = to_int(key, value);
  else throw std::invalid_argument("unknown config key '" + key + "'");
}

void RunConfig::finalize() {
  if (!priors_explicit_ && static_cast<int>(world.priors.size()) != world.attributes && world.attributes > 0) {
    world.priors.assign(static_cast<std::size_t>(world.attributes), AttributePrior::Bimodal);
    world.priors.back() = AttributePrior::Smooth;
  }
  world.seed = world_seed();
  world.validate();
  train.seed = train_seed();
  train.validate();
  if (samples < 1) throw std::invalid_argument("samples must be >= 1");
  if (eval_samples < 1) throw std::invalid_argument("eval_samples must be >= 1");
  if (bins < 2) throw std::invalid_argument("bins must be >= 2");
}

void RunConfig::apply_text(const std::string& text) {
  for (const auto& [key, value] : kv::parse(text)) set(key, value);
}

std::string RunConfig::to_text() const {
  std::ostringstream os;
  os << "seed=" << seed << "\n"
     << "out=" << out.string() << "\n"
     << "samples=" << samples << "\n"
     << "attributes=" << world.attributes << "\n"
     << "nuisance_dim=" << world.nuisance_dim << "\n"
     << "latent_dim=" << world.latent_dim << "\n"
     << "obs_dim=" << world.obs_dim << "\n"
     << "id_dim=" << world.id_dim << "\n"
     << "noise_sigma=" << kv::format_double(world.noise_sigma) << "\n"
     << "priors=" << priors_text(world.priors) << "\n"
     << "batch_size=" << train.batch_size << "\n"
     << "iterations=" << train.iterations << "\n"
     << "lr=" << kv::format_double(train.lr) << "\n"
     << "beta1=" << kv::format_double(train.beta1) << "\n"
     << "beta2=" << kv::format_double(train.beta2) << "\n"
     << "eps=" << kv::format_double(train.eps) << "\n"
     << "use_nll=" << bool_text(train.use.nll) << "\n"
     << "use_kd=" << bool_text(train.use.kd) << "\n"
     << "use_mi=" << bool_text(train.use.mi) << "\n"
     << "use_reg=" << bool_text(train.use.reg) << "\n"
     << "checkpoint_every=" << train.checkpoint_every << "\n"
     << "t0=" << kv::format_double(train.integrator.t0) << "\n"
     << "t1=" << kv::format_double(train.integrator.t1) << "\n"
     << "steps=" << train.integrator.steps << "\n"
     << "eval_samples=" << eval_samples << "\n"
     << "bins=" << bins << "\n";
  return os.str();
}

std::vector<std::pair<std::string, std::string>> default_keys() { return kv::parse(RunConfig{}.to_text()); }

}  // namespace semflow::cli
