#include "kanerva/autodiff.hpp"

#include <cmath>
#include <numbers>

#include "kanerva/errors.hpp"

namespace kanerva::ad {

const Matrix& Var::value() const { return tape_->value(id_); }
const Matrix& Var::grad() const { return tape_->grad(id_); }
bool Var::needs_grad() const { return tape_->needs_grad(id_); }

Var Tape::constant(Matrix value) { return push(std::move(value), false, nullptr); }

Var Tape::variable(Matrix value) { return push(std::move(value), true, nullptr); }

Var Tape::push(Matrix value, bool needs_grad, Backward backward) {
  nodes_.push_back(Node{std::move(value), Matrix(), needs_grad, needs_grad ? std::move(backward) : nullptr});
  return Var(this, nodes_.size() - 1);
}

void Tape::accumulate(std::size_t id, const Matrix& g) { accumulate_expr(id, g); }

const Matrix& Tape::grad(std::size_t id) const {
  const Node& n = nodes_[id];
  if (n.grad.size() == 0 && n.value.size() != 0) {
    // Untouched nodes report a zero gradient of the right shape.
    auto& self = const_cast<Node&>(n);
    self.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  }
  return n.grad;
}

void Tape::backward(Var root) {
  if (root.tape() != this) throw ConfigError("backward: variable belongs to another tape");
  if (root.rows() != 1 || root.cols() != 1) throw DimensionMismatch("backward: root must be 1 x 1");
  accumulate(root.id(), Matrix::Ones(1, 1));
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.backward && n.grad.size() != 0) n.backward(*this, i);
  }
}

namespace {

Tape& tape_of(Var a) { return *a.tape(); }

Tape& tape_of(Var a, Var b) {
  if (a.tape() != b.tape()) throw ConfigError("autodiff: operands from different tapes");
  return *a.tape();
}

void require_same_shape(Var a, Var b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw DimensionMismatch(std::string(op) + ": operand shapes differ");
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  if (a.cols() != b.rows()) throw DimensionMismatch("matmul: inner dimensions differ");
  const std::size_t ia = a.id(), ib = b.id();
  return t.push(a.value() * b.value(), a.needs_grad() || b.needs_grad(), [ia, ib](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    if (tp.needs_grad(ia)) tp.accumulate_expr(ia, g * tp.value(ib).transpose());
    if (tp.needs_grad(ib)) tp.accumulate_expr(ib, tp.value(ia).transpose() * g);
  });
}

Var transpose(Var a) {
  const std::size_t ia = a.id();
  return tape_of(a).push(a.value().transpose(), a.needs_grad(), [ia](Tape& tp, std::size_t self) {
    tp.accumulate_expr(ia, tp.grad(self).transpose());
  });
}

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a, b, "add");
  const std::size_t ia = a.id(), ib = b.id();
  return t.push(a.value() + b.value(), a.needs_grad() || b.needs_grad(), [ia, ib](Tape& tp, std::size_t self) {
    tp.accumulate(ia, tp.grad(self));
    tp.accumulate(ib, tp.grad(self));
  });
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a, b, "sub");
  const std::size_t ia = a.id(), ib = b.id();
  return t.push(a.value() - b.value(), a.needs_grad() || b.needs_grad(), [ia, ib](Tape& tp, std::size_t self) {
    tp.accumulate(ia, tp.grad(self));
    tp.accumulate_expr(ib, -tp.grad(self));
  });
}

Var hadamard(Var a, Var b) {
  Tape& t = tape_of(a, b);
  require_same_shape(a, b, "hadamard");
  const std::size_t ia = a.id(), ib = b.id();
  return t.push(a.value().cwiseProduct(b.value()), a.needs_grad() || b.needs_grad(),
                [ia, ib](Tape& tp, std::size_t self) {
                  const Matrix& g = tp.grad(self);
                  if (tp.needs_grad(ia)) tp.accumulate_expr(ia, g.cwiseProduct(tp.value(ib)));
                  if (tp.needs_grad(ib)) tp.accumulate_expr(ib, g.cwiseProduct(tp.value(ia)));
                });
}

Var scale(Var a, double c) {
  const std::size_t ia = a.id();
  return tape_of(a).push(c * a.value(), a.needs_grad(),
                         [ia, c](Tape& tp, std::size_t self) { tp.accumulate_expr(ia, c * tp.grad(self)); });
}

Var add_const(Var a, double c) {
  const std::size_t ia = a.id();
  return tape_of(a).push(a.value().array() + c, a.needs_grad(),
                         [ia](Tape& tp, std::size_t self) { tp.accumulate(ia, tp.grad(self)); });
}

Var add_row(Var a, Var row) {
  Tape& t = tape_of(a, row);
  if (row.rows() != 1 || row.cols() != a.cols()) throw DimensionMismatch("add_row: bias must be 1 x cols");
  const std::size_t ia = a.id(), ir = row.id();
  Matrix v = a.value();
  v.rowwise() += row.value().row(0);
  return t.push(std::move(v), a.needs_grad() || row.needs_grad(), [ia, ir](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    tp.accumulate(ia, g);
    if (tp.needs_grad(ir)) tp.accumulate_expr(ir, g.colwise().sum());
  });
}

Var div_scalar(Var a, Var s) {
  Tape& t = tape_of(a, s);
  if (s.rows() != 1 || s.cols() != 1) throw DimensionMismatch("div_scalar: divisor must be 1 x 1");
  const std::size_t ia = a.id(), is = s.id();
  const double d = s.scalar();
  return t.push(a.value() / d, a.needs_grad() || s.needs_grad(), [ia, is, d](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    tp.accumulate_expr(ia, g / d);
    if (tp.needs_grad(is))
      tp.accumulate_expr(is, Matrix::Constant(1, 1, -g.cwiseProduct(tp.value(ia)).sum() / (d * d)));
  });
}

Var relu(Var a) {
  const std::size_t ia = a.id();
  return tape_of(a).push(a.value().cwiseMax(0.0), a.needs_grad(), [ia](Tape& tp, std::size_t self) {
    tp.accumulate_expr(ia, (tp.value(ia).array() > 0.0).select(tp.grad(self), 0.0));
  });
}

Var exp(Var a) {
  const std::size_t ia = a.id();
  return tape_of(a).push(a.value().array().exp().matrix(), a.needs_grad(), [ia](Tape& tp, std::size_t self) {
    tp.accumulate_expr(ia, tp.grad(self).cwiseProduct(tp.value(self)));
  });
}

Var log(Var a) {
  const std::size_t ia = a.id();
  return tape_of(a).push(a.value().array().log().matrix(), a.needs_grad(), [ia](Tape& tp, std::size_t self) {
    tp.accumulate_expr(ia, tp.grad(self).cwiseQuotient(tp.value(ia)));
  });
}

Var sum(Var a) {
  const std::size_t ia = a.id();
  return tape_of(a).push(Matrix::Constant(1, 1, a.value().sum()), a.needs_grad(), [ia](Tape& tp, std::size_t self) {
    const Matrix& v = tp.value(ia);
    tp.accumulate_expr(ia, Matrix::Constant(v.rows(), v.cols(), tp.grad(self)(0, 0)));
  });
}

Var row_sum(Var a) {
  const std::size_t ia = a.id();
  return tape_of(a).push(a.value().rowwise().sum(), a.needs_grad(), [ia](Tape& tp, std::size_t self) {
    tp.accumulate_expr(ia, tp.grad(self).replicate(1, tp.value(ia).cols()));
  });
}

Var rows(Var a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) throw DimensionMismatch("rows: slice out of range");
  const std::size_t ia = a.id();
  return tape_of(a).push(a.value().middleRows(start, count), a.needs_grad(),
                         [ia, start, count](Tape& tp, std::size_t self) {
                           const Matrix& v = tp.value(ia);
                           Matrix g = Matrix::Zero(v.rows(), v.cols());
                           g.middleRows(start, count) = tp.grad(self);
                           tp.accumulate(ia, g);
                         });
}

Var cols(Var a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw DimensionMismatch("cols: slice out of range");
  const std::size_t ia = a.id();
  return tape_of(a).push(a.value().middleCols(start, count), a.needs_grad(),
                         [ia, start, count](Tape& tp, std::size_t self) {
                           const Matrix& v = tp.value(ia);
                           Matrix g = Matrix::Zero(v.rows(), v.cols());
                           g.middleCols(start, count) = tp.grad(self);
                           tp.accumulate(ia, g);
                         });
}

Var concat_cols(Var a, Var b) {
  Tape& t = tape_of(a, b);
  if (a.rows() != b.rows()) throw DimensionMismatch("concat_cols: row counts differ");
  Matrix v(a.rows(), a.cols() + b.cols());
  v << a.value(), b.value();
  const std::size_t ia = a.id(), ib = b.id();
  const Index na = a.cols(), nb = b.cols();
  return t.push(std::move(v), a.needs_grad() || b.needs_grad(), [ia, ib, na, nb](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    if (tp.needs_grad(ia)) tp.accumulate_expr(ia, g.leftCols(na));
    if (tp.needs_grad(ib)) tp.accumulate_expr(ib, g.rightCols(nb));
  });
}

Var repeat_cols(Var a, Index n) {
  if (a.cols() != 1) throw DimensionMismatch("repeat_cols: operand must be a column");
  const std::size_t ia = a.id();
  return tape_of(a).push(a.value().replicate(1, n), a.needs_grad(), [ia](Tape& tp, std::size_t self) {
    tp.accumulate_expr(ia, tp.grad(self).rowwise().sum());
  });
}

Var symmetrize(Var a) {
  if (a.rows() != a.cols()) throw DimensionMismatch("symmetrize: matrix must be square");
  const std::size_t ia = a.id();
  return tape_of(a).push(0.5 * (a.value() + a.value().transpose()), a.needs_grad(),
                         [ia](Tape& tp, std::size_t self) {
                           const Matrix& g = tp.grad(self);
                           tp.accumulate_expr(ia, 0.5 * (g + g.transpose()));
                         });
}

Var diag_part(Var a) {
  if (a.rows() != a.cols()) throw DimensionMismatch("diag_part: matrix must be square");
  const std::size_t ia = a.id();
  return tape_of(a).push(Matrix(a.value().diagonal().asDiagonal()), a.needs_grad(), [ia](Tape& tp, std::size_t self) {
    tp.accumulate_expr(ia, Matrix(tp.grad(self).diagonal().asDiagonal()));
  });
}

Var stop_gradient(Var a) { return tape_of(a).constant(a.value()); }

Var bernoulli_loglik(Var logits, const Matrix& x) {
  if (logits.rows() != x.rows() || logits.cols() != x.cols())
    throw DimensionMismatch("bernoulli_loglik: data shape differs from logits");
  const Matrix& l = logits.value();
  double total = 0.0;
  for (Index i = 0; i < l.size(); ++i) total += x.data()[i] * l.data()[i] - softplus(l.data()[i]);
  const std::size_t il = logits.id();
  return tape_of(logits).push(Matrix::Constant(1, 1, total), logits.needs_grad(),
                              [il, x](Tape& tp, std::size_t self) {
                                const Matrix& lv = tp.value(il);
                                const double g = tp.grad(self)(0, 0);
                                Matrix d(lv.rows(), lv.cols());
                                for (Index i = 0; i < lv.size(); ++i) d.data()[i] = g * (x.data()[i] - sigmoid(lv.data()[i]));
                                tp.accumulate(il, d);
                              });
}

Var gaussian_loglik(Var mean, Var log_var, const Matrix& x) {
  Tape& t = tape_of(mean, log_var);
  require_same_shape(mean, log_var, "gaussian_loglik");
  if (mean.rows() != x.rows() || mean.cols() != x.cols()) throw DimensionMismatch("gaussian_loglik: data shape");
  const auto lv = log_var.value().array();
  const auto d = x.array() - mean.value().array();
  const double total = -0.5 * (std::log(2.0 * std::numbers::pi) + lv + d.square() * (-lv).exp()).sum();
  const std::size_t im = mean.id(), il = log_var.id();
  return t.push(Matrix::Constant(1, 1, total), mean.needs_grad() || log_var.needs_grad(),
                [im, il, x](Tape& tp, std::size_t self) {
                  const double g = tp.grad(self)(0, 0);
                  const auto inv_var = (-tp.value(il).array()).exp();
                  const auto diff = x.array() - tp.value(im).array();
                  if (tp.needs_grad(im)) tp.accumulate_expr(im, (g * diff * inv_var).matrix());
                  if (tp.needs_grad(il)) tp.accumulate_expr(il, (g * 0.5 * (diff.square() * inv_var - 1.0)).matrix());
                });
}

Var kl_diag(Var mq, Var lq, Var mp, Var lp) {
  Tape& t = tape_of(mq, lq);
  tape_of(mp, lp);
  tape_of(mq, mp);
  require_same_shape(mq, lq, "kl_diag");
  require_same_shape(mq, mp, "kl_diag");
  require_same_shape(mq, lp, "kl_diag");
  const auto d = mq.value().array() - mp.value().array();
  const auto vq = lq.value().array().exp();
  const auto inv_vp = (-lp.value().array()).exp();
  const double total = 0.5 * ((vq + d.square()) * inv_vp - 1.0 + lp.value().array() - lq.value().array()).sum();
  const bool needs = mq.needs_grad() || lq.needs_grad() || mp.needs_grad() || lp.needs_grad();
  const std::size_t imq = mq.id(), ilq = lq.id(), imp = mp.id(), ilp = lp.id();
  return t.push(Matrix::Constant(1, 1, total), needs, [imq, ilq, imp, ilp](Tape& tp, std::size_t self) {
    const double g = tp.grad(self)(0, 0);
    const auto diff = tp.value(imq).array() - tp.value(imp).array();
    const auto var_q = tp.value(ilq).array().exp();
    const auto inv_var_p = (-tp.value(ilp).array()).exp();
    if (tp.needs_grad(imq)) tp.accumulate_expr(imq, (g * diff * inv_var_p).matrix());
    if (tp.needs_grad(imp)) tp.accumulate_expr(imp, (-g * diff * inv_var_p).matrix());
    if (tp.needs_grad(ilq)) tp.accumulate_expr(ilq, (g * 0.5 * (var_q * inv_var_p - 1.0)).matrix());
    if (tp.needs_grad(ilp))
      tp.accumulate_expr(ilp, (g * 0.5 * (1.0 - (var_q + diff.square()) * inv_var_p)).matrix());
  });
}

}  // namespace kanerva::ad
