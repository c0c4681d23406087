// SPDX-License-Identifier: Apache-2.0

#include "semflow/param_set.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>

#include "binary_io.hpp"

namespace semflow {

void ParamSet::add(std::string name, Matrix value) {
  for (const auto& e : entries_) {
    if (e.name == name) throw std::invalid_argument("ParamSet: duplicate name '" + name + "'");
  }
  entries_.push_back(Entry{std::move(name), std::move(value)});
}

const Matrix& ParamSet::at(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e.value;
  }
  throw std::out_of_range("ParamSet: no parameter named '" + name + "'");
}

Matrix& ParamSet::at(const std::string& name) {
  return const_cast<Matrix&>(std::as_const(*this).at(name));
}

Eigen::Index ParamSet::numel() const {
  Eigen::Index n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

bool operator==(const ParamSet& a, const ParamSet& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& x = a[i];
    const auto& y = b[i];
    if (x.name != y.name || x.value.rows() != y.value.rows() || x.value.cols() != y.value.cols()) {
      return false;
    }
    // Bitwise comparison so that -0.0 / NaN payloads round-trip exactly.
    for (Eigen::Index k = 0; k < x.value.size(); ++k) {
      if (std::bit_cast<std::uint64_t>(x.value.data()[k]) !=
          std::bit_cast<std::uint64_t>(y.value.data()[k])) {
        return false;
      }
    }
  }
  return true;
}

std::vector<Var> bind(Tape& tape, const ParamSet& params) {
  std::vector<Var> out;
  out.reserve(params.size());
  for (const auto& e : params) out.push_back(tape.variable(e.value));
  return out;
}

std::vector<Matrix> gradients(const std::vector<Var>& bound) {
  std::vector<Matrix> out;
  out.reserve(bound.size());
  for (const auto& v : bound) out.push_back(v.grad());
  return out;
}

std::vector<Matrix> backward_grad(const Var& root, const std::vector<Var>& bound) {
  root.tape()->backward(root);
  return gradients(bound);
}

void save_params(const std::filesystem::path& path, const ParamSet& params) {
  io::ByteWriter w;
  w.bytes("SDFW");
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& e : params) {
    if (e.name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw IoError("save_params: parameter name too long: " + e.name);
    }
    w.u16(static_cast<std::uint16_t>(e.name.size()));
    w.bytes(e.name);
    const bool column = e.value.cols() == 1;
    w.u8(column ? 1 : 2);
    w.u32(static_cast<std::uint32_t>(e.value.rows()));
    if (!column) w.u32(static_cast<std::uint32_t>(e.value.cols()));
    for (Eigen::Index r = 0; r < e.value.rows(); ++r) {
      for (Eigen::Index c = 0; c < e.value.cols(); ++c) w.f64(e.value(r, c));
    }
  }
  io::write_atomic(path, w.buffer());
}

ParamSet load_params(const std::filesystem::path& path) {
  io::ByteReader r(io::read_file(path), path);
  r.expect_magic("SDFW");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw IoError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint32_t count = r.u32();
  ParamSet out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint16_t len = r.u16();
    std::string name = r.string(len);
    const std::uint8_t rank = r.u8();
    if (rank > 2) throw IoError(path.string() + ": rank " + std::to_string(rank) + " not supported");
    Eigen::Index rows = 1;
    Eigen::Index cols = 1;
    if (rank >= 1) rows = r.u32();
    if (rank == 2) cols = r.u32();
    Matrix m(rows, cols);
    for (Eigen::Index a = 0; a < rows; ++a) {
      for (Eigen::Index b = 0; b < cols; ++b) m(a, b) = r.f64();
    }
    out.add(std::move(name), std::move(m));
  }
  r.expect_end();
  return out;
}

double grad_check(const GraphFn& f, const ParamSet& params, double h) {
  if (!(h > 0)) throw std::invalid_argument("grad_check: step must be positive");
  std::vector<Matrix> analytic;
  {
    Tape tape;
    auto bound = bind(tape, params);
    Var root = f(tape, bound);
    analytic = backward_grad(root, bound);
  }

  ParamSet probe = params;
  auto eval = [&]() {
    Tape tape;
    auto bound = bind(tape, probe);
    return f(tape, bound).scalar();
  };

  double worst = 0.0;
  for (std::size_t p = 0; p < probe.size(); ++p) {
    Matrix& m = probe[p].value;
    for (Eigen::Index k = 0; k < m.size(); ++k) {
      const double orig = m.data()[k];
      m.data()[k] = orig + h;
      const double fp = eval();
      m.data()[k] = orig - h;
      const double fm = eval();
      m.data()[k] = orig;
      const double central = (fp - fm) / (2.0 * h);
      const double a = analytic[p].data()[k];
      const double err = std::abs(a - central) / (std::abs(a) + std::abs(central) + 1e-12);
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace semflow
