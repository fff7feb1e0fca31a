#include "sboed/autodiff.hpp"

#include <cmath>

namespace sboed::ad {

const Matrix& Var::value() const { return tape->value(*this); }

Var Tape::constant(Matrix value) {
  nodes_.push_back({Op::leaf, -1, -1, 0.0, 0, false, std::move(value)});
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::parameter(Matrix value) {
  nodes_.push_back({Op::leaf, -1, -1, 0.0, 0, true, std::move(value)});
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::push(Op op, Matrix value, int a, int b, double scalar, Index count) {
  const bool tracked = nodes_[a].tracked || (b >= 0 && nodes_[b].tracked);
  nodes_.push_back({op, a, b, scalar, count, tracked, std::move(value)});
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Matrix Tape::grad(Var v) const {
  const auto& n = nodes_[v.id];
  if (static_cast<std::size_t>(v.id) >= grads_.size() || grads_[v.id].size() == 0)
    return Matrix::Zero(n.value.rows(), n.value.cols());
  return grads_[v.id];
}

namespace {

void accumulate(Matrix& g, const Matrix& contribution) {
  if (g.size() == 0)
    g = contribution;
  else
    g += contribution;
}

}  // namespace

void Tape::backward(Var output) {
  if (nodes_[output.id].value.size() != 1) throw UsageError("backward needs a scalar output");
  grads_.assign(nodes_.size(), Matrix());
  grads_[output.id] = Matrix::Ones(1, 1);

  for (int i = output.id; i >= 0; --i) {
    const Node& n = nodes_[i];
    if (n.op == Op::leaf || !n.tracked || grads_[i].size() == 0) continue;
    const Matrix& g = grads_[i];
    const bool ta = nodes_[n.a].tracked;
    const bool tb = n.b >= 0 && nodes_[n.b].tracked;
    const Matrix& a = nodes_[n.a].value;
    static const Matrix none;
    const Matrix& b = n.b >= 0 ? nodes_[n.b].value : none;
    Matrix& ga = grads_[n.a];

    switch (n.op) {
      case Op::leaf:
        break;
      case Op::matmul:
        if (ta) accumulate(ga, g * b.transpose());
        if (tb) accumulate(grads_[n.b], a.transpose() * g);
        break;
      case Op::matmul_tn:
        if (ta) accumulate(ga, b * g.transpose());
        if (tb) accumulate(grads_[n.b], a * g);
        break;
      case Op::add:
        if (ta) accumulate(ga, g);
        if (tb) accumulate(grads_[n.b], g);
        break;
      case Op::sub:
        if (ta) accumulate(ga, g);
        if (tb) accumulate(grads_[n.b], -g);
        break;
      case Op::add_col:
        if (ta) accumulate(ga, g);
        if (tb) accumulate(grads_[n.b], g.rowwise().sum());
        break;
      case Op::add_row:
        if (ta) accumulate(ga, g);
        if (tb) accumulate(grads_[n.b], g.colwise().sum());
        break;
      case Op::mul_col:
        if (ta) accumulate(ga, g.array().colwise() * b.col(0).array());
        if (tb) accumulate(grads_[n.b], g.cwiseProduct(a).rowwise().sum());
        break;
      case Op::mul_row:
        if (ta) accumulate(ga, g.array().rowwise() * b.row(0).array());
        if (tb) accumulate(grads_[n.b], g.cwiseProduct(a).colwise().sum());
        break;
      case Op::hadamard:
        if (ta) accumulate(ga, g.cwiseProduct(b));
        if (tb) accumulate(grads_[n.b], g.cwiseProduct(a));
        break;
      case Op::scale:
        accumulate(ga, n.scalar * g);
        break;
      case Op::tanh:
        accumulate(ga, g.array() * (1.0 - n.value.array().square()));
        break;
      case Op::elu:
        accumulate(ga, g.array() * (a.array() > 0.0).select(1.0, n.value.array() + 1.0));
        break;
      case Op::elu_prime:
        accumulate(ga, g.array() * (a.array() > 0.0).select(0.0, n.value.array()));
        break;
      case Op::exp:
        accumulate(ga, g.cwiseProduct(n.value));
        break;
      case Op::rsqrt:
        accumulate(ga, -0.5 * g.array() * n.value.array().cube());
        break;
      case Op::recip:
        accumulate(ga, -g.array() * n.value.array().square());
        break;
      case Op::col_sum:
        accumulate(ga, g.replicate(a.rows(), 1));
        break;
      case Op::repeat_cols: {
        Matrix s(a.rows(), a.cols());
        for (Index j = 0; j < a.cols(); ++j) s.col(j) = g.middleCols(j * n.count, n.count).rowwise().sum();
        accumulate(ga, s);
        break;
      }
      case Op::tile_cols: {
        Matrix s = Matrix::Zero(a.rows(), a.cols());
        for (Index t = 0; t < n.count; ++t) s += g.middleCols(t * a.cols(), a.cols());
        accumulate(ga, s);
        break;
      }
      case Op::vstack:
        if (ta) accumulate(ga, g.topRows(a.rows()));
        if (tb) accumulate(grads_[n.b], g.bottomRows(b.rows()));
        break;
      case Op::column: {
        if (ga.size() == 0) ga = Matrix::Zero(a.rows(), a.cols());
        ga.col(n.count) += g.col(0);
        break;
      }
      case Op::sum:
        accumulate(ga, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
        break;
      case Op::sum_sq:
        accumulate(ga, 2.0 * g(0, 0) * a);
        break;
    }
  }
}

namespace {

void same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw UsageError(std::string("shape mismatch in ") + op);
}

}  // namespace

Var operator+(Var a, Var b) {
  same_shape(a.value(), b.value(), "add");
  return a.tape->push(Tape::Op::add, a.value() + b.value(), a.id, b.id);
}

Var operator-(Var a, Var b) {
  same_shape(a.value(), b.value(), "sub");
  return a.tape->push(Tape::Op::sub, a.value() - b.value(), a.id, b.id);
}

Var operator*(double c, Var a) { return a.tape->push(Tape::Op::scale, c * a.value(), a.id, -1, c); }

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) throw UsageError("shape mismatch in matmul");
  return a.tape->push(Tape::Op::matmul, a.value() * b.value(), a.id, b.id);
}

Var matmul_tn(Var a, Var b) {
  if (a.rows() != b.rows()) throw UsageError("shape mismatch in matmul_tn");
  return a.tape->push(Tape::Op::matmul_tn, a.value().transpose() * b.value(), a.id, b.id);
}

Var add_col(Var a, Var col) {
  if (col.cols() != 1 || col.rows() != a.rows()) throw UsageError("shape mismatch in add_col");
  return a.tape->push(Tape::Op::add_col, a.value().colwise() + col.value().col(0), a.id, col.id);
}

Var add_row(Var a, Var row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw UsageError("shape mismatch in add_row");
  return a.tape->push(Tape::Op::add_row, a.value().rowwise() + row.value().row(0), a.id, row.id);
}

Var mul_col(Var a, Var col) {
  if (col.cols() != 1 || col.rows() != a.rows()) throw UsageError("shape mismatch in mul_col");
  return a.tape->push(Tape::Op::mul_col, a.value().array().colwise() * col.value().col(0).array(), a.id, col.id);
}

Var mul_row(Var a, Var row) {
  if (row.rows() != 1 || row.cols() != a.cols()) throw UsageError("shape mismatch in mul_row");
  return a.tape->push(Tape::Op::mul_row, a.value().array().rowwise() * row.value().row(0).array(), a.id, row.id);
}

Var hadamard(Var a, Var b) {
  same_shape(a.value(), b.value(), "hadamard");
  return a.tape->push(Tape::Op::hadamard, a.value().cwiseProduct(b.value()), a.id, b.id);
}

Var tanh(Var a) { return a.tape->push(Tape::Op::tanh, a.value().array().tanh(), a.id); }

Var elu(Var a) {
  const auto x = a.value().array();
  return a.tape->push(Tape::Op::elu, (x > 0.0).select(x, x.exp() - 1.0), a.id);
}

Var elu_prime(Var a) {
  const auto x = a.value().array();
  return a.tape->push(Tape::Op::elu_prime, (x > 0.0).select(Matrix::Ones(a.rows(), a.cols()).array(), x.exp()), a.id);
}

Var exp(Var a) { return a.tape->push(Tape::Op::exp, a.value().array().exp(), a.id); }

Var rsqrt(Var a) { return a.tape->push(Tape::Op::rsqrt, a.value().array().rsqrt(), a.id); }

Var recip(Var a) { return a.tape->push(Tape::Op::recip, a.value().array().inverse(), a.id); }

Var col_sum(Var a) { return a.tape->push(Tape::Op::col_sum, a.value().colwise().sum(), a.id); }

Var repeat_cols(Var a, Index count) {
  const Matrix& v = a.value();
  Matrix out(v.rows(), v.cols() * count);
  for (Index j = 0; j < v.cols(); ++j) out.middleCols(j * count, count) = v.col(j).replicate(1, count);
  return a.tape->push(Tape::Op::repeat_cols, std::move(out), a.id, -1, 0.0, count);
}

Var tile_cols(Var a, Index count) {
  return a.tape->push(Tape::Op::tile_cols, a.value().replicate(1, count), a.id, -1, 0.0, count);
}

Var vstack(Var top, Var bottom) {
  if (top.cols() != bottom.cols()) throw UsageError("shape mismatch in vstack");
  Matrix out(top.rows() + bottom.rows(), top.cols());
  out << top.value(), bottom.value();
  return top.tape->push(Tape::Op::vstack, std::move(out), top.id, bottom.id);
}

Var column(Var a, Index j) {
  if (j < 0 || j >= a.cols()) throw UsageError("column index out of range");
  return a.tape->push(Tape::Op::column, a.value().col(j), a.id, -1, 0.0, j);
}

Var sum(Var a) { return a.tape->push(Tape::Op::sum, Matrix::Constant(1, 1, a.value().sum()), a.id); }

Var sum_sq(Var a) { return a.tape->push(Tape::Op::sum_sq, Matrix::Constant(1, 1, a.value().squaredNorm()), a.id); }

}  // namespace sboed::ad
