// SPDX-License-Identifier: Apache-2.0
//
// Tape-based reverse-mode differentiation over dense Eigen matrices.
//
// Every value on the tape is a rank-0..2 dense matrix (scalars are 1x1,
// vectors are n x 1). Nodes are appended in evaluation order, so the node
// index is already a topological order and the backward sweep is a single
// reverse pass over the tape.

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace semflow::ad {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Raised when operand shapes do not conform. The message names both shapes.
class ShapeError : public std::invalid_argument {
 public:
  ShapeError(const std::string& op, Eigen::Index ar, Eigen::Index ac, Eigen::Index br,
             Eigen::Index bc)
      : std::invalid_argument(format(op, ar, ac, br, bc)) {}

  explicit ShapeError(const std::string& what) : std::invalid_argument(what) {}

 private:
  static std::string format(const std::string& op, Eigen::Index ar, Eigen::Index ac,
                            Eigen::Index br, Eigen::Index bc) {
    std::ostringstream os;
    os << op << ": shape mismatch (" << ar << "x" << ac << ") vs (" << br << "x" << bc << ")";
    return os.str();
  }
};

template <typename Scalar>
class Tape;

/// Handle to a node on a tape. Cheap to copy; valid until the tape is cleared.
template <typename Scalar>
class Var {
 public:
  using Matrix = MatrixX<Scalar>;

  Var() = default;
  Var(Tape<Scalar>* tape, std::size_t id) : tape_(tape), id_(id) {}

  [[nodiscard]] const Matrix& value() const { return tape_->value(id_); }
  [[nodiscard]] const Matrix& grad() const { return tape_->grad(id_); }
  [[nodiscard]] Eigen::Index rows() const { return value().rows(); }
  [[nodiscard]] Eigen::Index cols() const { return value().cols(); }
  [[nodiscard]] Scalar scalar() const { return value()(0, 0); }
  [[nodiscard]] bool requires_grad() const { return tape_->requires_grad(id_); }

  [[nodiscard]] Tape<Scalar>* tape() const { return tape_; }
  [[nodiscard]] std::size_t id() const { return id_; }
  [[nodiscard]] bool valid() const { return tape_ != nullptr; }

 private:
  Tape<Scalar>* tape_ = nullptr;
  std::size_t id_ = 0;
};

template <typename Scalar>
class Tape {
 public:
  using Matrix = MatrixX<Scalar>;
  // Receives the node's own id and upstream gradient; pushes contributions to parents.
  using Backward = std::function<void(Tape&, std::size_t self, const Matrix& upstream)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that receives a gradient.
  Var<Scalar> variable(Matrix value) { return push(std::move(value), true, {}); }

  /// Leaf that never receives a gradient.
  Var<Scalar> constant(Matrix value) { return push(std::move(value), false, {}); }

  Var<Scalar> constant(Scalar value) {
    Matrix m(1, 1);
    m(0, 0) = value;
    return constant(std::move(m));
  }

  /// Records an interior node. `backward` is dropped when no input needs a gradient.
  Var<Scalar> record(Matrix value, bool requires_grad, Backward backward) {
    return push(std::move(value), requires_grad, requires_grad ? std::move(backward) : Backward{});
  }

  [[nodiscard]] const Matrix& value(std::size_t id) const { return nodes_[id].value; }

  [[nodiscard]] const Matrix& grad(std::size_t id) const {
    const Node& n = nodes_[id];
    if (n.grad.size() == 0 && n.value.size() != 0) {
      // Lazily materialise zero gradients so grad() always matches value() shape.
      auto& mut = const_cast<Node&>(n);
      mut.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    }
    return n.grad;
  }

  [[nodiscard]] bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  [[nodiscard]] std::size_t size() const { return nodes_.size(); }

  /// Adds `g` to the gradient of node `id` (no-op for constants).
  void accumulate(std::size_t id, const Matrix& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  /// Reverse sweep from a 1x1 root. Gradients from earlier sweeps are discarded.
  void backward(const Var<Scalar>& root) {
    if (root.tape() != this) throw std::invalid_argument("backward: root belongs to another tape");
    const Matrix& rv = value(root.id());
    if (rv.rows() != 1 || rv.cols() != 1) {
      throw ShapeError("backward: root must be scalar (1x1)", rv.rows(), rv.cols(), 1, 1);
    }
    for (Node& n : nodes_) n.grad.resize(0, 0);
    if (!nodes_[root.id()].requires_grad) return;
    nodes_[root.id()].grad = Matrix::Ones(1, 1);
    for (std::size_t i = root.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.backward || n.grad.size() == 0) continue;
      Matrix upstream = std::move(n.grad);
      n.backward(*this, i, upstream);
      nodes_[i].grad = std::move(upstream);
    }
  }

  void clear() { nodes_.clear(); }

  void reserve(std::size_t n) { nodes_.reserve(n); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    Backward backward;
  };

  Var<Scalar> push(Matrix value, bool requires_grad, Backward backward) {
    nodes_.push_back(Node{std::move(value), Matrix{}, requires_grad, std::move(backward)});
    return Var<Scalar>(this, nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
};

namespace detail {

template <typename Scalar>
Tape<Scalar>& same_tape(const Var<Scalar>& a, const Var<Scalar>& b) {
  if (a.tape() != b.tape()) throw std::invalid_argument("operands live on different tapes");
  return *a.tape();
}

template <typename Scalar>
bool is_scalar(const MatrixX<Scalar>& m) {
  return m.rows() == 1 && m.cols() == 1;
}

// Elementwise binary ops allow equal shapes, or a 1x1 operand on either side.
template <typename Scalar>
void check_elementwise(const char* op, const MatrixX<Scalar>& a, const MatrixX<Scalar>& b) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return;
  if (is_scalar(a) || is_scalar(b)) return;
  throw ShapeError(op, a.rows(), a.cols(), b.rows(), b.cols());
}

// Reduces a gradient back to the operand's shape (sums over a broadcast scalar).
template <typename Scalar>
MatrixX<Scalar> reduce_to(const MatrixX<Scalar>& g, const MatrixX<Scalar>& like) {
  if (g.rows() == like.rows() && g.cols() == like.cols()) return g;
  MatrixX<Scalar> out(1, 1);
  out(0, 0) = g.sum();
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

template <typename Scalar>
Var<Scalar> matmul(const Var<Scalar>& a, const Var<Scalar>& b) {
  Tape<Scalar>& tape = detail::same_tape(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.cols() != bv.rows()) throw ShapeError("matmul", av.rows(), av.cols(), bv.rows(), bv.cols());
  MatrixX<Scalar> out(av.rows(), bv.cols());
  out.noalias() = av * bv;
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  const bool ra = a.requires_grad();
  const bool rb = b.requires_grad();
  return tape.record(std::move(out), ra || rb,
                     [ia, ib, ra, rb](Tape<Scalar>& t, std::size_t, const MatrixX<Scalar>& g) {
                       if (ra) {
                         MatrixX<Scalar> ga(g.rows(), t.value(ib).rows());
                         ga.noalias() = g * t.value(ib).transpose();
                         t.accumulate(ia, ga);
                       }
                       if (rb) {
                         MatrixX<Scalar> gb(t.value(ia).cols(), g.cols());
                         gb.noalias() = t.value(ia).transpose() * g;
                         t.accumulate(ib, gb);
                       }
                     });
}

// ---------------------------------------------------------------------------
// Elementwise arithmetic (scalar <-> tensor broadcasting only)
// ---------------------------------------------------------------------------

namespace detail {

enum class Binary { Add, Sub, Mul };

template <typename Scalar>
MatrixX<Scalar> apply(Binary op, const MatrixX<Scalar>& a, const MatrixX<Scalar>& b) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) {
    switch (op) {
      case Binary::Add: return a + b;
      case Binary::Sub: return a - b;
      case Binary::Mul: return a.cwiseProduct(b);
    }
  }
  if (is_scalar(b)) {
    const Scalar k = b(0, 0);
    switch (op) {
      case Binary::Add: return (a.array() + k).matrix();
      case Binary::Sub: return (a.array() - k).matrix();
      case Binary::Mul: return a * k;
    }
  }
  const Scalar k = a(0, 0);
  switch (op) {
    case Binary::Add: return (k + b.array()).matrix();
    case Binary::Sub: return (k - b.array()).matrix();
    case Binary::Mul: return k * b;
  }
  return {};
}

// Gradient of an elementwise op w.r.t. one operand, reduced to that operand's shape.
// `other` is the opposite operand (only read for Mul).
template <typename Scalar>
MatrixX<Scalar> operand_grad(Binary op, bool second, const MatrixX<Scalar>& g,
                             const MatrixX<Scalar>& self, const MatrixX<Scalar>& other) {
  MatrixX<Scalar> full;
  if (op == Binary::Mul) {
    full = is_scalar(other) && !(other.rows() == g.rows() && other.cols() == g.cols())
               ? MatrixX<Scalar>(g * other(0, 0))
               : MatrixX<Scalar>(g.cwiseProduct(other));
  } else {
    full = (op == Binary::Sub && second) ? MatrixX<Scalar>(-g) : g;
  }
  return reduce_to<Scalar>(full, self);
}

template <typename Scalar>
Var<Scalar> binary(Binary op, const char* name, const Var<Scalar>& a, const Var<Scalar>& b) {
  Tape<Scalar>& tape = same_tape(a, b);
  check_elementwise<Scalar>(name, a.value(), b.value());
  MatrixX<Scalar> out = apply<Scalar>(op, a.value(), b.value());
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  return tape.record(std::move(out), a.requires_grad() || b.requires_grad(),
                     [op, ia, ib](Tape<Scalar>& t, std::size_t, const MatrixX<Scalar>& g) {
                       const auto& av = t.value(ia);
                       const auto& bv = t.value(ib);
                       if (t.requires_grad(ia)) t.accumulate(ia, operand_grad<Scalar>(op, false, g, av, bv));
                       if (t.requires_grad(ib)) t.accumulate(ib, operand_grad<Scalar>(op, true, g, bv, av));
                     });
}

}  // namespace detail

template <typename Scalar>
Var<Scalar> operator+(const Var<Scalar>& a, const Var<Scalar>& b) {
  return detail::binary(detail::Binary::Add, "add", a, b);
}

template <typename Scalar>
Var<Scalar> operator-(const Var<Scalar>& a, const Var<Scalar>& b) {
  return detail::binary(detail::Binary::Sub, "sub", a, b);
}

/// Elementwise (Hadamard) product.
template <typename Scalar>
Var<Scalar> operator*(const Var<Scalar>& a, const Var<Scalar>& b) {
  return detail::binary(detail::Binary::Mul, "mul", a, b);
}

/// Multiplies by a constant.
template <typename Scalar>
Var<Scalar> scale(const Var<Scalar>& a, Scalar k) {
  const std::size_t ia = a.id();
  return a.tape()->record(a.value() * k, a.requires_grad(),
                          [ia, k](Tape<Scalar>& t, std::size_t, const MatrixX<Scalar>& g) {
                            t.accumulate(ia, g * k);
                          });
}

template <typename Scalar>
Var<Scalar> operator*(const Var<Scalar>& a, Scalar k) {
  return scale(a, k);
}

template <typename Scalar>
Var<Scalar> operator*(Scalar k, const Var<Scalar>& a) {
  return scale(a, k);
}

template <typename Scalar>
Var<Scalar> operator-(const Var<Scalar>& a) {
  return scale(a, Scalar(-1));
}

template <typename Scalar>
Var<Scalar> operator+(const Var<Scalar>& a, Scalar k) {
  return a + a.tape()->constant(k);
}

template <typename Scalar>
Var<Scalar> operator-(Scalar k, const Var<Scalar>& a) {
  return a.tape()->constant(k) - a;
}

// ---------------------------------------------------------------------------
// Pointwise nonlinearities
// ---------------------------------------------------------------------------

template <typename Scalar>
Var<Scalar> tanh(const Var<Scalar>& a) {
  MatrixX<Scalar> out = a.value().array().tanh().matrix();
  const std::size_t ia = a.id();
  return a.tape()->record(std::move(out), a.requires_grad(),
                          [ia](Tape<Scalar>& t, std::size_t self, const MatrixX<Scalar>& g) {
                            const auto y = t.value(self).array();
                            MatrixX<Scalar> ga = (g.array() * (Scalar(1) - y * y)).matrix();
                            t.accumulate(ia, ga);
                          });
}

template <typename Scalar>
Var<Scalar> sigmoid(const Var<Scalar>& a) {
  MatrixX<Scalar> out =
      a.value().unaryExpr([](Scalar x) {
        if (x >= 0) return Scalar(1) / (Scalar(1) + std::exp(-x));
        const Scalar e = std::exp(x);
        return e / (Scalar(1) + e);
      });
  const std::size_t ia = a.id();
  return a.tape()->record(std::move(out), a.requires_grad(),
                          [ia](Tape<Scalar>& t, std::size_t self, const MatrixX<Scalar>& g) {
                            const auto y = t.value(self).array();
                            MatrixX<Scalar> ga = (g.array() * y * (Scalar(1) - y)).matrix();
                            t.accumulate(ia, ga);
                          });
}

/// log(1 + exp(x)), evaluated without overflow.
template <typename Scalar>
Var<Scalar> softplus(const Var<Scalar>& a) {
  MatrixX<Scalar> out = a.value().unaryExpr([](Scalar x) {
    return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  });
  const std::size_t ia = a.id();
  return a.tape()->record(std::move(out), a.requires_grad(),
                          [ia](Tape<Scalar>& t, std::size_t, const MatrixX<Scalar>& g) {
                            MatrixX<Scalar> s = t.value(ia).unaryExpr([](Scalar x) {
                              if (x >= 0) return Scalar(1) / (Scalar(1) + std::exp(-x));
                              const Scalar e = std::exp(x);
                              return e / (Scalar(1) + e);
                            });
                            MatrixX<Scalar> ga = g.cwiseProduct(s);
                            t.accumulate(ia, ga);
                          });
}

template <typename Scalar>
Var<Scalar> square(const Var<Scalar>& a) {
  MatrixX<Scalar> out = a.value().array().square().matrix();
  const std::size_t ia = a.id();
  return a.tape()->record(std::move(out), a.requires_grad(),
                          [ia](Tape<Scalar>& t, std::size_t, const MatrixX<Scalar>& g) {
                            MatrixX<Scalar> ga = Scalar(2) * g.cwiseProduct(t.value(ia));
                            t.accumulate(ia, ga);
                          });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& a) {
  MatrixX<Scalar> out(1, 1);
  out(0, 0) = a.value().sum();
  const std::size_t ia = a.id();
  return a.tape()->record(std::move(out), a.requires_grad(),
                          [ia](Tape<Scalar>& t, std::size_t, const MatrixX<Scalar>& g) {
                            const auto& v = t.value(ia);
                            t.accumulate(ia, MatrixX<Scalar>::Constant(v.rows(), v.cols(), g(0, 0)));
                          });
}

template <typename Scalar>
Var<Scalar> mean(const Var<Scalar>& a) {
  const auto n = static_cast<Scalar>(a.value().size());
  if (n == 0) throw ShapeError("mean: empty operand");
  return scale(sum(a), Scalar(1) / n);
}

// ---------------------------------------------------------------------------
// Structural ops
// ---------------------------------------------------------------------------

enum class Axis { Rows, Cols };

/// Stacks operands along `axis` (Rows: vertically, Cols: horizontally).
template <typename Scalar>
Var<Scalar> concat(const std::vector<Var<Scalar>>& parts, Axis axis) {
  if (parts.empty()) throw ShapeError("concat: no operands");
  Tape<Scalar>& tape = *parts.front().tape();
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  bool any_grad = false;
  for (const auto& p : parts) {
    if (p.tape() != &tape) throw std::invalid_argument("concat: operands live on different tapes");
    const auto& v = p.value();
    const auto& f = parts.front().value();
    if (axis == Axis::Rows) {
      if (v.cols() != f.cols()) throw ShapeError("concat(rows)", f.rows(), f.cols(), v.rows(), v.cols());
      rows += v.rows();
      cols = v.cols();
    } else {
      if (v.rows() != f.rows()) throw ShapeError("concat(cols)", f.rows(), f.cols(), v.rows(), v.cols());
      cols += v.cols();
      rows = v.rows();
    }
    any_grad = any_grad || p.requires_grad();
  }
  MatrixX<Scalar> out(rows, cols);
  std::vector<std::size_t> ids;
  ids.reserve(parts.size());
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    const auto& v = p.value();
    if (axis == Axis::Rows) {
      out.middleRows(off, v.rows()) = v;
      off += v.rows();
    } else {
      out.middleCols(off, v.cols()) = v;
      off += v.cols();
    }
    ids.push_back(p.id());
  }
  return tape.record(std::move(out), any_grad,
                     [ids = std::move(ids), axis](Tape<Scalar>& t, std::size_t, const MatrixX<Scalar>& g) {
                       Eigen::Index o = 0;
                       for (std::size_t id : ids) {
                         const auto& v = t.value(id);
                         if (axis == Axis::Rows) {
                           if (t.requires_grad(id)) t.accumulate(id, g.middleRows(o, v.rows()));
                           o += v.rows();
                         } else {
                           if (t.requires_grad(id)) t.accumulate(id, g.middleCols(o, v.cols()));
                           o += v.cols();
                         }
                       }
                     });
}

/// Rectangular sub-block starting at (row, col).
template <typename Scalar>
Var<Scalar> slice(const Var<Scalar>& a, Eigen::Index row, Eigen::Index col, Eigen::Index rows,
                  Eigen::Index cols) {
  const auto& v = a.value();
  if (row < 0 || col < 0 || rows < 0 || cols < 0 || row + rows > v.rows() || col + cols > v.cols()) {
    std::ostringstream os;
    os << "slice: block (" << row << "," << col << ")+(" << rows << "x" << cols
       << ") out of range for (" << v.rows() << "x" << v.cols() << ")";
    throw ShapeError(os.str());
  }
  MatrixX<Scalar> out = v.block(row, col, rows, cols);
  const std::size_t ia = a.id();
  return a.tape()->record(std::move(out), a.requires_grad(),
                          [ia, row, col](Tape<Scalar>& t, std::size_t, const MatrixX<Scalar>& g) {
                            const auto& v = t.value(ia);
                            MatrixX<Scalar> ga = MatrixX<Scalar>::Zero(v.rows(), v.cols());
                            ga.block(row, col, g.rows(), g.cols()) = g;
                            t.accumulate(ia, ga);
                          });
}

}  // namespace semflow::ad
