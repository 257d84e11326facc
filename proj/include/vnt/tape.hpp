#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "vnt/common.hpp"

namespace vnt::ad {

// Reverse-mode autodiff over dense Eigen matrices. Eager forward evaluation;
// each node that needs a gradient stores a backward closure that scatters its
// output gradient into its parents. One tape per training step; nodes are
// append-only and backward walks them in reverse creation order.
struct Var {
  int i = -1;
  bool valid() const { return i >= 0; }
};

class Tape {
 public:
  Var constant(Matrix v);
  Var param(Matrix v);  // leaf that accumulates gradient

  const Matrix& val(Var v) const { return nodes_[v.i].val; }
  const Matrix& grad(Var v) const;
  bool needs_grad(Var v) const { return nodes_[v.i].tracked; }
  size_t size() const { return nodes_.size(); }

  // --- elementwise / scalar ---
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);  // Hadamard
  Var scale(Var a, Scalar s);
  Var gelu(Var x);     // tanh approximation (smooth everywhere)
  Var sigmoid(Var x);

  // --- linear algebra ---
  Var matmul(Var a, Var b);     // a * b
  Var matmul_nt(Var a, Var b);  // a * b^T
  Var add_row_broadcast(Var x, Var b);  // b is 1 x cols
  Var linear(Var x, Var w, Var b) { return add_row_broadcast(matmul(x, w), b); }

  // --- structure ---
  Var slice_rows(Var x, int start, int count);
  Var slice_cols(Var x, int start, int count);
  Var concat_rows(Var a, Var b);
  Var concat_cols(Var a, Var b);
  Var gather_rows(Var x, std::vector<int> idx);
  Var stack_row(const std::vector<Var>& scalars);  // m scalars -> 1 x m

  // --- reductions / row ops ---
  Var softmax_rows(Var x);
  Var layer_norm_rows(Var x, Var gamma, Var beta, Scalar eps = 1e-5);
  Var mean_all(Var x);
  Var sum_all(Var x);
  Var mean_rows(Var x);  // column means: 1 x cols
  Var row_sums(Var x);   // n x 1
  Var scale_by(Var s, Var x);  // s is 1x1 variable

  // Cosine similarity of two row vectors -> 1x1. Zero norm on either side
  // yields exactly 0 with zero gradient.
  Var cosine_rows(Var a, Var b);

  // Mean softmax cross-entropy of logits (n x C) against integer labels.
  Var softmax_xent_mean(Var logits, std::vector<int> labels);

  void backward(Var loss);

 private:
  struct Node {
    Matrix val;
    Matrix grad;
    bool tracked = false;
    std::function<void(Tape&, int)> back;
  };
  std::vector<Node> nodes_;

  Var make(Matrix val, std::initializer_list<Var> parents,
           std::function<void(Tape&, int)> back);
  Matrix& g(Var v) { return nodes_[v.i].grad; }
  const Matrix& v(Var x) const { return nodes_[x.i].val; }
  bool req(Var x) const { return nodes_[x.i].tracked; }
};

// Numerics shared by the tape ops and the allocation-light inference path in
// the encoder; keeping one definition guarantees bit-identical results.
Matrix softmax_rows_plain(const Matrix& x);
Matrix layer_norm_rows_plain(const Matrix& x, const Matrix& gamma,
                             const Matrix& beta, Scalar eps = 1e-5);
Matrix gelu_plain(const Matrix& x);

}  // namespace vnt::ad
