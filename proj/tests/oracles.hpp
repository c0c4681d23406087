// SPDX-License-Identifier: Apache-2.0
//
// Test-only reference implementations. These deliberately avoid the library's
// tape and batching code paths.

#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "semflow/dynamics.hpp"

namespace semflow::oracle {

inline Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

/// Scalar-loop evaluation of a dense layer stack: tanh on every layer but the last.
inline std::vector<double> mlp_loops(const std::vector<Matrix>& weights, const std::vector<Matrix>& biases,
                                     std::vector<double> x) {
  for (std::size_t l = 0; l < weights.size(); ++l) {
    const Matrix& w = weights[l];
    std::vector<double> y(static_cast<std::size_t>(w.rows()), 0.0);
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      double acc = biases[l](r, 0);
      for (Eigen::Index c = 0; c < w.cols(); ++c) acc += w(r, c) * x[static_cast<std::size_t>(c)];
      y[static_cast<std::size_t>(r)] = (l + 1 < weights.size()) ? std::tanh(acc) : acc;
    }
    x = std::move(y);
  }
  return x;
}

/// phi(z, s, t) for one sample through scalar loops.
inline std::vector<double> phi_loops(const DynamicsNet& net, const std::vector<double>& z,
                                     const std::vector<double>& s, double t) {
  std::vector<Matrix> ws;
  std::vector<Matrix> bs;
  for (std::size_t i = 0; i < net.params.size(); i += 2) {
    ws.push_back(net.params[i].value);
    bs.push_back(net.params[i + 1].value);
  }
  std::vector<double> x = z;
  x.insert(x.end(), s.begin(), s.end());
  x.push_back(t);
  return mlp_loops(ws, bs, x);
}

/// Central finite-difference Jacobian diagonal sum of phi w.r.t. z.
inline double trace_fd(const DynamicsNet& net, std::vector<double> z, const std::vector<double>& s,
                       double t, double h = 1e-5) {
  double tr = 0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double orig = z[i];
    z[i] = orig + h;
    const double fp = phi_loops(net, z, s, t)[i];
    z[i] = orig - h;
    const double fm = phi_loops(net, z, s, t)[i];
    z[i] = orig;
    tr += (fp - fm) / (2 * h);
  }
  return tr;
}

inline std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace semflow::oracle
