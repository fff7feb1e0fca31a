#pragma once

#include "sboed/common.hpp"

#include <vector>

/// Reverse-mode differentiation over dense matrix operations. Forward-mode
/// tangents are written with the same operations, so reverse sweeps through
/// a tangent computation give second-order terms (used by Jacobian losses).
namespace sboed::ad {

class Tape;

struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
};

class Tape {
 public:
  Tape() { nodes_.reserve(1024); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var parameter(Matrix value);  // gradient is tracked
  Var zeros(Index rows, Index cols) { return constant(Matrix::Zero(rows, cols)); }

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  /// Gradient after backward(); zero matrix when v did not influence the output.
  Matrix grad(Var v) const;

  /// Accumulates d(output)/d(node) for every node; output must be 1 x 1.
  void backward(Var output);
  std::size_t size() const { return nodes_.size(); }

  enum class Op {
    leaf,
    matmul,     // a b
    matmul_tn,  // a^T b
    add,
    sub,
    add_col,    // a + b 1^T, b a column
    add_row,    // a + 1 b, b a row
    mul_col,    // a .* (b 1^T)
    mul_row,    // a .* (1 b)
    hadamard,
    scale,
    tanh,
    elu,
    elu_prime,
    exp,
    rsqrt,
    recip,
    col_sum,
    repeat_cols,  // each column repeated `count` times, adjacent
    tile_cols,    // whole matrix repeated `count` times
    vstack,
    column,       // column `count` of a
    sum,
    sum_sq,
  };

  Var push(Op op, Matrix value, int a, int b = -1, double scalar = 0.0, Index count = 0);

 private:
  struct Node {
    Op op;
    int a, b;
    double scalar;
    Index count;
    bool tracked;
    Matrix value;
  };
  std::vector<Node> nodes_;
  std::vector<Matrix> grads_;
};

Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(double c, Var a);
Var matmul(Var a, Var b);
Var matmul_tn(Var a, Var b);
Var add_col(Var a, Var col);
Var add_row(Var a, Var row);
Var mul_col(Var a, Var col);
Var mul_row(Var a, Var row);
Var hadamard(Var a, Var b);
Var tanh(Var a);
Var elu(Var a);
Var elu_prime(Var a);
Var exp(Var a);
Var rsqrt(Var a);
Var recip(Var a);
Var col_sum(Var a);
Var repeat_cols(Var a, Index count);
Var tile_cols(Var a, Index count);
Var vstack(Var top, Var bottom);
Var column(Var a, Index j);
Var sum(Var a);
Var sum_sq(Var a);

}  // namespace sboed::ad
