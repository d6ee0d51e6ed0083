#pragma once

// Tape-based reverse-mode differentiation over dense double tensors.
//
// A Tape owns every node created while building an expression. Nodes are
// appended in evaluation order, so the tape is already a topological order
// and backward() is a single reverse sweep. Broadcasting is limited to
// scalar-vs-tensor; the row-wise bias add is a dedicated op.

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "sirenpose/errors.hpp"
#include "sirenpose/tensor.hpp"

namespace sirenpose::ad {

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  const Tensor& grad() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Receives the output gradient and one slot per parent; a slot is null when
// that parent does not need a gradient. Implementations accumulate (+=).
using BackwardFn =
    std::function<void(const Tensor& out_grad, std::span<Tensor* const> parent_grads)>;

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Differentiable input (a parameter or anything we want d/d of).
  Var leaf(Tensor value) { return push(std::move(value), {}, {}, true); }

  /// Input that never receives a gradient.
  Var constant(Tensor value) { return push(std::move(value), {}, {}, false); }

  /// Appends the result of an operation. The node needs a gradient iff any
  /// parent does; otherwise the backward rule is dropped.
  Var record(Tensor value, std::vector<std::size_t> parents, BackwardFn fn) {
    bool needs = false;
    for (auto p : parents) needs = needs || nodes_.at(p).needs_grad;
    if (!needs) fn = nullptr;
    return push(std::move(value), std::move(parents), std::move(fn), needs);
  }

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }

  const Tensor& grad(std::size_t id) const {
    const Node& n = nodes_.at(id);
    if (!n.grad_ready) {
      throw ValidationError("gradient requested for node " + std::to_string(id) +
                            " before backward()");
    }
    return n.grad;
  }

  bool needs_grad(std::size_t id) const { return nodes_.at(id).needs_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Clears all gradients; backward() also starts from zero.
  void zero_grad() {
    for (auto& n : nodes_) {
      n.grad = Tensor();
      n.grad_ready = false;
    }
  }

  /// Reverse sweep from a scalar root (shape [] or [1]).
  void backward(const Var& root) {
    const Tensor& rv = value(root.id());
    const bool scalar_shape =
        rv.rank() == 0 || (rv.rank() == 1 && rv.shape()[0] == 1);
    if (!scalar_shape) {
      throw ValidationError("backward() needs a scalar root, got shape " +
                            shape_string(rv.shape()));
    }
    zero_grad();
    for (std::size_t i = 0; i <= root.id(); ++i) {
      Node& n = nodes_[i];
      if (n.needs_grad) {
        n.grad = Tensor(n.value.shape(), 0.0);
        n.grad_ready = true;
      }
    }
    if (!nodes_[root.id()].needs_grad) return;
    nodes_[root.id()].grad.fill(1.0);

    std::vector<Tensor*> slots;
    for (std::size_t i = root.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.needs_grad || !n.backward) continue;
      slots.clear();
      for (auto p : n.parents) {
        slots.push_back(nodes_[p].needs_grad ? &nodes_[p].grad : nullptr);
      }
      n.backward(n.grad, slots);
    }
  }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    bool needs_grad = false;
    bool grad_ready = false;
  };

  Var push(Tensor value, std::vector<std::size_t> parents, BackwardFn fn,
           bool needs) {
    nodes_.push_back(Node{std::move(value), Tensor(), std::move(parents),
                          std::move(fn), needs, false});
    return Var(this, nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }
inline const Tensor& Var::grad() const { return tape_->grad(id_); }

namespace detail {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Eigen::Map<RowMatrix> as_matrix(Tensor& t, std::size_t r, std::size_t c) {
  return {t.values().data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)};
}
inline Eigen::Map<const RowMatrix> as_matrix(const Tensor& t, std::size_t r, std::size_t c) {
  return {t.values().data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)};
}

inline void require_same_tape(const Var& a, const Var& b) {
  if (&a.tape() != &b.tape()) {
    throw ValidationError("operands belong to different tapes");
  }
}

inline ValidationError shape_error(const char* op, const Shape& a, const Shape& b) {
  return ValidationError(std::string(op) + ": shape mismatch " + shape_string(a) +
                         " vs " + shape_string(b));
}

enum class Broadcast { kNone, kLeftScalar, kRightScalar };

inline Broadcast elementwise_mode(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return Broadcast::kNone;
  if (a.is_scalar()) return Broadcast::kLeftScalar;
  if (b.is_scalar()) return Broadcast::kRightScalar;
  throw shape_error(op, a.shape(), b.shape());
}

inline double reduce_sum(const Tensor& t) {
  double s = 0.0;
  for (double v : t.values()) s += v;
  return s;
}

// Shared forward/backward for add, sub, mul; da/db are the local partials.
template <typename Fwd, typename DA, typename DB>
Var binary(const char* op, const Var& a, const Var& b, Fwd fwd, DA da, DB db) {
  require_same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Broadcast mode = elementwise_mode(op, av, bv);
  const Shape out_shape = mode == Broadcast::kLeftScalar ? bv.shape() : av.shape();
  Tensor out(out_shape);
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double x = mode == Broadcast::kLeftScalar ? av[0] : av[i];
    const double y = mode == Broadcast::kRightScalar ? bv[0] : bv[i];
    out[i] = fwd(x, y);
  }
  Tape& tape = a.tape();
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  return tape.record(
      std::move(out), {ia, ib},
      [&tape, ia, ib, mode, da, db](const Tensor& g, std::span<Tensor* const> pg) {
        const Tensor& av = tape.value(ia);
        const Tensor& bv = tape.value(ib);
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double x = mode == Broadcast::kLeftScalar ? av[0] : av[i];
          const double y = mode == Broadcast::kRightScalar ? bv[0] : bv[i];
          if (pg[0]) (*pg[0])[mode == Broadcast::kLeftScalar ? 0 : i] += g[i] * da(x, y);
          if (pg[1]) (*pg[1])[mode == Broadcast::kRightScalar ? 0 : i] += g[i] * db(x, y);
        }
      });
}

template <typename Fwd, typename D>
Var unary(const Var& a, Fwd fwd, D deriv) {
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  Tape& tape = a.tape();
  const std::size_t ia = a.id();
  return tape.record(std::move(out), {ia},
                     [&tape, ia, deriv](const Tensor& g, std::span<Tensor* const> pg) {
                       const Tensor& av = tape.value(ia);
                       Tensor& ga = *pg[0];
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         ga[i] += g[i] * deriv(av[i]);
                       }
                     });
}

}  // namespace detail

inline Var add(const Var& a, const Var& b) {
  return detail::binary(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

inline Var sub(const Var& a, const Var& b) {
  return detail::binary(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

inline Var mul(const Var& a, const Var& b) {
  return detail::binary(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

/// a * s for a fixed real s.
inline Var scale(const Var& a, double s) {
  return detail::unary(
      a, [s](double x) { return s * x; }, [s](double) { return s; });
}

inline Var add_scalar(const Var& a, double s) {
  return detail::unary(
      a, [s](double x) { return x + s; }, [](double) { return 1.0; });
}

inline Var square(const Var& a) {
  return detail::unary(
      a, [](double x) { return x * x; }, [](double x) { return 2.0 * x; });
}

inline Var sin(const Var& a) {
  return detail::unary(
      a, [](double x) { return std::sin(x); }, [](double x) { return std::cos(x); });
}

inline Var sum(const Var& a) {
  Tape& tape = a.tape();
  const std::size_t ia = a.id();
  return tape.record(Tensor::scalar(detail::reduce_sum(a.value())), {ia},
                     [](const Tensor& g, std::span<Tensor* const> pg) {
                       for (double& v : pg[0]->values()) v += g[0];
                     });
}

inline Var mean(const Var& a) {
  const double n = static_cast<double>(a.value().size());
  Tape& tape = a.tape();
  const std::size_t ia = a.id();
  return tape.record(Tensor::scalar(detail::reduce_sum(a.value()) / n), {ia},
                     [n](const Tensor& g, std::span<Tensor* const> pg) {
                       for (double& v : pg[0]->values()) v += g[0] / n;
                     });
}

/// [m x k] * [k x n] -> [m x n]; rank-1 operands are not promoted.
inline Var matmul(const Var& a, const Var& b) {
  detail::require_same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2 || av.shape()[1] != bv.shape()[0]) {
    throw detail::shape_error("matmul", av.shape(), bv.shape());
  }
  const std::size_t m = av.shape()[0], k = av.shape()[1], n = bv.shape()[1];
  Tensor out({m, n});
  detail::as_matrix(out, m, n).noalias() = detail::as_matrix(av, m, k) * detail::as_matrix(bv, k, n);
  Tape& tape = a.tape();
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(
      std::move(out), {ia, ib},
      [&tape, ia, ib, m, k, n](const Tensor& g, std::span<Tensor* const> pg) {
        const auto gm = detail::as_matrix(g, m, n);
        if (pg[0]) {  // dA = G * B^T
          detail::as_matrix(*pg[0], m, k).noalias() += gm * detail::as_matrix(tape.value(ib), k, n).transpose();
        }
        if (pg[1]) {  // dB = A^T * G
          detail::as_matrix(*pg[1], k, n).noalias() += detail::as_matrix(tape.value(ia), m, k).transpose() * gm;
        }
      });
}

/// x [m x n] plus bias [n] added to every row.
inline Var add_bias(const Var& x, const Var& bias) {
  detail::require_same_tape(x, bias);
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  if (xv.rank() != 2 || bv.rank() != 1 || bv.shape()[0] != xv.shape()[1]) {
    throw detail::shape_error("add_bias", xv.shape(), bv.shape());
  }
  const std::size_t m = xv.shape()[0], n = xv.shape()[1];
  Tensor out = xv;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bv[j];
  }
  return x.tape().record(std::move(out), {x.id(), bias.id()},
                         [m, n](const Tensor& g, std::span<Tensor* const> pg) {
                           if (pg[0]) {
                             for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i];
                           }
                           if (pg[1]) {
                             for (std::size_t i = 0; i < m; ++i) {
                               for (std::size_t j = 0; j < n; ++j) {
                                 (*pg[1])[j] += g[i * n + j];
                               }
                             }
                           }
                         });
}

/// Columns [begin, begin + count) of a rank-2 tensor.
inline Var columns(const Var& x, std::size_t begin, std::size_t count) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2 || begin + count > xv.shape()[1]) {
    throw ValidationError("columns: range [" + std::to_string(begin) + ", " +
                          std::to_string(begin + count) + ") outside " +
                          shape_string(xv.shape()));
  }
  const std::size_t m = xv.shape()[0], n = xv.shape()[1];
  Tensor out({m, count});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < count; ++j) out[i * count + j] = xv[i * n + begin + j];
  }
  return x.tape().record(std::move(out), {x.id()},
                         [m, n, begin, count](const Tensor& g,
                                              std::span<Tensor* const> pg) {
                           Tensor& gx = *pg[0];
                           for (std::size_t i = 0; i < m; ++i) {
                             for (std::size_t j = 0; j < count; ++j) {
                               gx[i * n + begin + j] += g[i * count + j];
                             }
                           }
                         });
}

inline Var transpose(const Var& x) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2) {
    throw ValidationError("transpose: expected rank 2, got " + shape_string(xv.shape()));
  }
  const std::size_t m = xv.shape()[0], n = xv.shape()[1];
  Tensor out({n, m});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = xv[i * n + j];
  }
  return x.tape().record(std::move(out), {x.id()},
                         [m, n](const Tensor& g, std::span<Tensor* const> pg) {
                           Tensor& gx = *pg[0];
                           for (std::size_t i = 0; i < m; ++i) {
                             for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += g[j * m + i];
                           }
                         });
}

inline Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return x.tape().record(std::move(out), {x.id()},
                         [](const Tensor& g, std::span<Tensor* const> pg) {
                           for (std::size_t i = 0; i < g.size(); ++i) (*pg[0])[i] += g[i];
                         });
}

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator*(double s, const Var& a) { return scale(a, s); }

}  // namespace sirenpose::ad
