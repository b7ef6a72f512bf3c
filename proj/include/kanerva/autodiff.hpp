#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "kanerva/linalg.hpp"

namespace kanerva::ad {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  const Matrix& grad() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
  bool needs_grad() const;

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode tape over dense matrices. Nodes are appended in evaluation
/// order, so a single reverse sweep visits them topologically.
class Tape {
 public:
  Tape() { nodes_.reserve(1024); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var variable(Matrix value);

  /// Seeds d(root)/d(root) = 1 for a 1 × 1 root and sweeps backwards.
  void backward(Var root);

  std::size_t size() const { return nodes_.size(); }

  // Used by operators.
  using Backward = std::function<void(Tape&, std::size_t self)>;
  Var push(Matrix value, bool needs_grad, Backward backward);
  void accumulate(std::size_t id, const Matrix& g);
  template <class Expr>
  void accumulate_expr(std::size_t id, const Expr& g) {
    Node& n = nodes_[id];
    if (!n.needs_grad) return;
    if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    n.grad += g;
  }
  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  const Matrix& grad(std::size_t id) const;
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool needs_grad = false;
    Backward backward;
  };
  std::vector<Node> nodes_;
  Matrix empty_;
};

// Linear algebra.
Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
Var scale(Var a, double c);
Var add_const(Var a, double c);
/// a (n × m) + row (1 × m) broadcast over rows.
Var add_row(Var a, Var row);
/// a / s for a 1 × 1 node s.
Var div_scalar(Var a, Var s);

// Elementwise.
Var relu(Var a);
Var exp(Var a);
Var log(Var a);

// Shape.
Var sum(Var a);
Var row_sum(Var a);
Var rows(Var a, Index start, Index count);
Var cols(Var a, Index start, Index count);
Var concat_cols(Var a, Var b);
/// T × 1 column repeated to T × n.
Var repeat_cols(Var a, Index n);
Var symmetrize(Var a);
Var diag_part(Var a);
Var stop_gradient(Var a);

// Fused likelihood and divergence terms, each returning a 1 × 1 node.
/// Σ x·l − softplus(l) over all entries; x is data (no gradient).
Var bernoulli_loglik(Var logits, const Matrix& x);
/// Σ log N(x | mean, exp(log_var)).
Var gaussian_loglik(Var mean, Var log_var, const Matrix& x);
/// Σ KL(N(mq, e^lq) || N(mp, e^lp)) over all entries.
Var kl_diag(Var mq, Var lq, Var mp, Var lp);

}  // namespace kanerva::ad
