// SPDX-License-Identifier: Apache-2.0

#include "semflow/world.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "binary_io.hpp"
#include "semflow/kv_text.hpp"

namespace semflow {

namespace {

// Scale of the inner mixing map. Small enough that tanh stays mildly nonlinear,
// which keeps attributes decodable from observations.
constexpr double kInnerGain = 0.3;
constexpr double kAttributeGain = 2.0;
constexpr double kSkip = 0.1;
// Beta(1, 10) puts 80.3% of its mass within 0.15 of the mode.
constexpr double kModeConcentration = 10.0;

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = normal(rng);
  }
  return m;
}

Matrix random_orthogonal(Eigen::Index n, std::mt19937_64& rng) {
  Matrix g = gaussian(n, n, 1.0, rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  // Fix column signs so the result is uniquely determined by g.
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (r(i, i) < 0) q.col(i) *= -1.0;
  }
  return q;
}

const char* prior_name(AttributePrior p) { return p == AttributePrior::Bimodal ? "bimodal" : "smooth"; }

AttributePrior parse_prior(const std::string& s) {
  if (s == "bimodal") return AttributePrior::Bimodal;
  if (s == "smooth") return AttributePrior::Smooth;
  throw std::invalid_argument("unknown attribute prior '" + s + "'");
}

void write_block(io::ByteWriter& w, const Matrix& m) {
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) w.f64(m(r, c));
  }
}

Matrix read_block(io::ByteReader& r, Eigen::Index dim, Eigen::Index count) {
  Matrix m(dim, count);
  for (Eigen::Index c = 0; c < count; ++c) {
    for (Eigen::Index k = 0; k < dim; ++k) m(k, c) = r.f64();
  }
  return m;
}

}  // namespace

// ---------------------------------------------------------------------------
// WorldSpec
// ---------------------------------------------------------------------------

void WorldSpec::validate() const {
  if (attributes <= 0 || nuisance_dim < 0 || latent_dim <= 0 || obs_dim <= 0 || id_dim <= 0) {
    throw std::invalid_argument("WorldSpec: dimensions must be positive");
  }
  if (latent_dim < attributes + nuisance_dim) {
    throw std::invalid_argument("WorldSpec: latent_dim must be >= attributes + nuisance_dim");
  }
  if (static_cast<int>(priors.size()) != attributes) {
    throw std::invalid_argument("WorldSpec: need one prior per attribute");
  }
  if (!(noise_sigma >= 0)) throw std::invalid_argument("WorldSpec: noise_sigma must be >= 0");
}

std::string WorldSpec::to_text() const {
  std::ostringstream os;
  os << "attributes=" << attributes << "\n";
  os << "nuisance_dim=" << nuisance_dim << "\n";
  os << "latent_dim=" << latent_dim << "\n";
  os << "obs_dim=" << obs_dim << "\n";
  os << "id_dim=" << id_dim << "\n";
  os << "seed=" << seed << "\n";
  os << "noise_sigma=" << kv::format_double(noise_sigma) << "\n";
  os << "priors=";
  for (std::size_t i = 0; i < priors.size(); ++i) os << (i ? "," : "") << prior_name(priors[i]);
  os << "\n";
  return os.str();
}

WorldSpec WorldSpec::from_text(const std::string& text) {
  WorldSpec spec;
  bool priors_set = false;
  for (const auto& [key, value] : kv::parse(text)) {
    if (key == "attributes") spec.attributes = kv::to_int(key, value);
    else if (key == "nuisance_dim") spec.nuisance_dim = kv::to_int(key, value);
    else if (key == "latent_dim") spec.latent_dim = kv::to_int(key, value);
    else if (key == "obs_dim") spec.obs_dim = kv::to_int(key, value);
    else if (key == "id_dim") spec.id_dim = kv::to_int(key, value);
    else if (key == "seed") spec.seed = kv::to_u64(key, value);
    else if (key == "noise_sigma") spec.noise_sigma = kv::to_double(key, value);
    else if (key == "priors") {
      spec.priors.clear();
      for (const auto& item : kv::split_list(value)) spec.priors.push_back(parse_prior(item));
      priors_set = true;
    } else {
      throw std::invalid_argument("WorldSpec: unknown key '" + key + "'");
    }
  }
  if (!priors_set && static_cast<int>(spec.priors.size()) != spec.attributes) {
    spec.priors.assign(static_cast<std::size_t>(spec.attributes), AttributePrior::Bimodal);
  }
  spec.validate();
  return spec;
}

void save_world_spec(const std::filesystem::path& path, const WorldSpec& spec) {
  io::write_atomic(path, spec.to_text());
}

WorldSpec load_world_spec(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  try {
    return WorldSpec::from_text(std::string(bytes.begin(), bytes.end()));
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

Eigen::Index Dataset::train_size() const {
  if (size() == 0) return 0;
  return std::max<Eigen::Index>(1, (size() * 8) / 10);
}

void save_dataset(const std::filesystem::path& path, const Dataset& ds) {
  io::ByteWriter w;
  w.bytes("SDFD");
  w.u32(kDatasetVersion);
  w.u32(static_cast<std::uint32_t>(ds.size()));
  w.u32(static_cast<std::uint32_t>(ds.a.rows()));
  w.u32(static_cast<std::uint32_t>(ds.n.rows()));
  w.u32(static_cast<std::uint32_t>(ds.w.rows()));
  w.u32(static_cast<std::uint32_t>(ds.obs.rows()));
  write_block(w, ds.a);
  write_block(w, ds.n);
  write_block(w, ds.w);
  write_block(w, ds.obs);
  io::write_atomic(path, w.buffer());
}

Dataset load_dataset(const std::filesystem::path& path) {
  io::ByteReader r(io::read_file(path), path);
  r.expect_magic("SDFD");
  const std::uint32_t version = r.u32();
  if (version != kDatasetVersion) {
    throw IoError(path.string() + ": unsupported dataset version " + std::to_string(version));
  }
  const Eigen::Index count = r.u32();
  const Eigen::Index k = r.u32();
  const Eigen::Index dn = r.u32();
  const Eigen::Index dw = r.u32();
  const Eigen::Index di = r.u32();
  Dataset ds;
  ds.a = read_block(r, k, count);
  ds.n = read_block(r, dn, count);
  ds.w = read_block(r, dw, count);
  ds.obs = read_block(r, di, count);
  r.expect_end();
  return ds;
}

// ---------------------------------------------------------------------------
// World
// ---------------------------------------------------------------------------

World::World(WorldSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  std::mt19937_64 rng(derive_seed(spec_.seed, 0));
  const Eigen::Index factors = spec_.attributes + spec_.nuisance_dim;
  // Orthonormal columns keep the factors recoverable even when they fill the latent space.
  r1_ = random_orthogonal(spec_.latent_dim, rng).leftCols(factors) *
        (kInnerGain * std::sqrt(static_cast<double>(spec_.latent_dim) / static_cast<double>(factors)));
  r1_.leftCols(spec_.attributes) *= kAttributeGain;
  r2_ = random_orthogonal(spec_.latent_dim, rng);
  p_ = gaussian(spec_.obs_dim, spec_.latent_dim, 1.0 / std::sqrt(static_cast<double>(spec_.latent_dim)), rng);
  q_ = gaussian(spec_.id_dim, spec_.obs_dim, 1.0 / std::sqrt(static_cast<double>(spec_.obs_dim)), rng);
}

Factors World::sample_factors(std::mt19937_64& rng, Eigen::Index count) const {
  Factors f{Matrix(spec_.attributes, count), Matrix(spec_.nuisance_dim, count)};
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index i = 0; i < count; ++i) {
    for (int k = 0; k < spec_.attributes; ++k) {
      if (spec_.priors[static_cast<std::size_t>(k)] == AttributePrior::Smooth) {
        f.a(k, i) = uni(rng);
      } else {
        const bool high = uni(rng) < 0.5;
        const double offset = 1.0 - std::pow(uni(rng), 1.0 / kModeConcentration);
        f.a(k, i) = high ? 1.0 - offset : offset;
      }
    }
    for (int k = 0; k < spec_.nuisance_dim; ++k) f.n(k, i) = normal(rng);
  }
  return f;
}

Matrix World::entangle(const Matrix& a, const Matrix& n) const {
  if (a.rows() != spec_.attributes || n.rows() != spec_.nuisance_dim || a.cols() != n.cols()) {
    throw ad::ShapeError("entangle", a.rows(), a.cols(), n.rows(), n.cols());
  }
  Matrix x(a.rows() + n.rows(), a.cols());
  x << a, n;
  Matrix w = r2_ * (r1_ * x).array().tanh().matrix();
  w.topRows(x.rows()) += kSkip * x;
  return w;
}

Matrix World::observe(const Matrix& w) const {
  if (w.rows() != spec_.latent_dim) throw ad::ShapeError("observe", w.rows(), w.cols(), spec_.latent_dim, w.cols());
  return (p_ * w).array().tanh().matrix();
}

Var World::observe(const Var& w) const {
  if (w.rows() != spec_.latent_dim) throw ad::ShapeError("observe", w.rows(), w.cols(), spec_.latent_dim, w.cols());
  return tanh(matmul(w.tape()->constant(p_), w));
}

Matrix World::identity_embed(const Matrix& obs) const {
  if (obs.rows() != spec_.obs_dim) throw ad::ShapeError("identity_embed", obs.rows(), obs.cols(), spec_.obs_dim, obs.cols());
  return q_ * obs;
}

Matrix World::oracle_classify(const Matrix& a, std::mt19937_64& rng) const {
  if (a.rows() != spec_.attributes) throw ad::ShapeError("oracle_classify", a.rows(), a.cols(), spec_.attributes, a.cols());
  Matrix out = a;
  if (spec_.noise_sigma > 0) {
    std::normal_distribution<double> normal(0.0, spec_.noise_sigma);
    for (Eigen::Index c = 0; c < out.cols(); ++c) {
      for (Eigen::Index r = 0; r < out.rows(); ++r) out(r, c) += normal(rng);
    }
  }
  return out.cwiseMax(0.0).cwiseMin(1.0);
}

Matrix World::oracle_classify(const Dataset& ds, const Matrix& obs, std::mt19937_64& rng) const {
  Matrix truth(spec_.attributes, obs.cols());
  for (Eigen::Index c = 0; c < obs.cols(); ++c) {
    Eigen::Index found = -1;
    for (Eigen::Index i = 0; i < ds.size(); ++i) {
      if (ds.obs.col(i) == obs.col(c)) {
        found = i;
        break;
      }
    }
    if (found < 0) {
      throw UnknownObservation("oracle_classify: observation " + std::to_string(c) +
                               " was not generated by this world; use the evaluation regressor");
    }
    truth.col(c) = ds.a.col(found);
  }
  return oracle_classify(truth, rng);
}

Matrix World::oracle_labels(const Dataset& ds) const {
  std::mt19937_64 rng(derive_seed(spec_.seed, 2));
  return oracle_classify(ds.a, rng);
}

Dataset World::generate_dataset(Eigen::Index count) const {
  if (count < 1) throw std::invalid_argument("generate_dataset: need at least one sample");
  std::mt19937_64 rng(derive_seed(spec_.seed, 1));
  Factors f = sample_factors(rng, count);
  Dataset ds;
  ds.w = entangle(f.a, f.n);
  ds.obs = observe(ds.w);
  ds.a = std::move(f.a);
  ds.n = std::move(f.n);
  return ds;
}

Factors World::recover_factors(const Matrix& w, int iterations) const {
  const Eigen::Index k = spec_.attributes;
  const Eigen::Index m = k + spec_.nuisance_dim;
  Factors out{Matrix(k, w.cols()), Matrix(spec_.nuisance_dim, w.cols())};
  Matrix skip = Matrix::Zero(spec_.latent_dim, m);
  skip.topRows(m) = kSkip * Matrix::Identity(m, m);
  for (Eigen::Index c = 0; c < w.cols(); ++c) {
    Vector x = Vector::Zero(m);
    x.head(k).setConstant(0.5);
    for (int it = 0; it < iterations; ++it) {
      const Vector pre = r1_ * x;
      const Vector act = pre.array().tanh();
      Vector resid = r2_ * act;
      resid.head(m) += kSkip * x;
      resid -= w.col(c);
      const Vector slope = 1.0 - act.array().square();
      const Matrix jac = r2_ * slope.asDiagonal() * r1_ + skip;
      const Vector dx = jac.colPivHouseholderQr().solve(-resid);
      x += dx;
      if (dx.norm() < 1e-14) break;
    }
    out.a.col(c) = x.head(k);
    out.n.col(c) = x.tail(spec_.nuisance_dim);
  }
  return out;
}

RowVector column_cosine(const Matrix& x, const Matrix& y) {
  if (x.rows() != y.rows() || x.cols() != y.cols()) throw ad::ShapeError("cosine", x.rows(), x.cols(), y.rows(), y.cols());
  RowVector out(x.cols());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const double nx = x.col(c).norm();
    const double ny = y.col(c).norm();
    out(c) = (nx == 0 || ny == 0) ? std::numeric_limits<double>::quiet_NaN()
                                  : x.col(c).dot(y.col(c)) / (nx * ny);
  }
  return out;
}

}  // namespace semflow
