#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "testutil.hpp"
#include "vnt/tape.hpp"

using namespace vnt;
using ad::Tape;
using ad::Var;
using testutil::fd_grad;
using testutil::grad_agreement;
using testutil::random_matrix;

namespace {

// Gradient-check harness: builds the op's scalar loss as sum of elementwise
// products with a fixed weighting (so every output coordinate participates),
// then compares the tape gradient of `which` against finite differences.
void check_op(
    const std::function<Var(Tape&, const std::vector<Var>&)>& build,
    std::vector<Matrix> inputs, size_t which, double tol = 1e-6) {
  Matrix weights;
  Tape t;
  std::vector<Var> vars;
  for (const auto& m : inputs) vars.push_back(t.param(m));
  Var out = build(t, vars);
  weights = random_matrix(t.val(out).rows(), t.val(out).cols(), 99);
  Var loss = t.sum_all(t.mul(out, t.constant(weights)));
  t.backward(loss);
  Matrix analytic = t.grad(vars[which]);

  auto f = [&](const Matrix& x) {
    std::vector<Matrix> ins = inputs;
    ins[which] = x;
    Tape t2;
    std::vector<Var> vs;
    for (const auto& m : ins) vs.push_back(t2.param(m));
    Var o = build(t2, vs);
    Var l = t2.sum_all(t2.mul(o, t2.constant(weights)));
    return t2.val(l)(0, 0);
  };
  Matrix numeric = fd_grad(f, inputs[which]);
  double max_err = 0.0;
  const double frac = grad_agreement(analytic, numeric, tol, &max_err);
  INFO("max relative error " << max_err);
  CHECK(frac == 1.0);
}

}  // namespace

TEST_CASE("tape: forward values of basic ops") {
  Tape t;
  Matrix a(2, 2), b(2, 2);
  a << 1, 2, 3, 4;
  b << 5, 6, 7, 8;
  CHECK(t.val(t.add(t.constant(a), t.constant(b)))(1, 1) == 12.0);
  CHECK(t.val(t.matmul(t.constant(a), t.constant(b)))(0, 0) == 19.0);
  CHECK(t.val(t.mean_all(t.constant(a)))(0, 0) == doctest::Approx(2.5));
  Matrix s = t.val(t.softmax_rows(t.constant(a)));
  CHECK(s.row(0).sum() == doctest::Approx(1.0));
  CHECK(s.row(1).sum() == doctest::Approx(1.0));
}

TEST_CASE("tape: gradients match finite differences per op") {
  SUBCASE("add") {
    check_op([](Tape& t, const std::vector<Var>& v) { return t.add(v[0], v[1]); },
             {random_matrix(3, 4, 1), random_matrix(3, 4, 2)}, 0);
  }
  SUBCASE("sub") {
    check_op([](Tape& t, const std::vector<Var>& v) { return t.sub(v[0], v[1]); },
             {random_matrix(3, 4, 1), random_matrix(3, 4, 2)}, 1);
  }
  SUBCASE("mul") {
    check_op([](Tape& t, const std::vector<Var>& v) { return t.mul(v[0], v[1]); },
             {random_matrix(3, 4, 3), random_matrix(3, 4, 4)}, 0);
  }
  SUBCASE("matmul a") {
    check_op(
        [](Tape& t, const std::vector<Var>& v) { return t.matmul(v[0], v[1]); },
        {random_matrix(3, 5, 5), random_matrix(5, 2, 6)}, 0);
  }
  SUBCASE("matmul b") {
    check_op(
        [](Tape& t, const std::vector<Var>& v) { return t.matmul(v[0], v[1]); },
        {random_matrix(3, 5, 5), random_matrix(5, 2, 6)}, 1);
  }
  SUBCASE("matmul_nt") {
    check_op(
        [](Tape& t, const std::vector<Var>& v) { return t.matmul_nt(v[0], v[1]); },
        {random_matrix(3, 5, 7), random_matrix(4, 5, 8)}, 1);
  }
  SUBCASE("add_row_broadcast") {
    check_op(
        [](Tape& t, const std::vector<Var>& v) {
          return t.add_row_broadcast(v[0], v[1]);
        },
        {random_matrix(4, 3, 9), random_matrix(1, 3, 10)}, 1);
  }
  SUBCASE("slice and concat") {
    check_op(
        [](Tape& t, const std::vector<Var>& v) {
          Var rows = t.concat_rows(t.slice_rows(v[0], 0, 2),
                                   t.slice_rows(v[0], 2, 2));
          Var cols = t.concat_cols(t.slice_cols(v[0], 0, 2),
                                   t.slice_cols(v[0], 2, 2));
          return t.concat_cols(t.add(rows, cols), v[1]);
        },
        {random_matrix(4, 4, 11), random_matrix(4, 1, 12)}, 0);
  }
  SUBCASE("gather_rows") {
    check_op(
        [](Tape& t, const std::vector<Var>& v) {
          return t.gather_rows(v[0], {2, 0, 2, 1});  // repeated index
        },
        {random_matrix(3, 4, 13)}, 0);
  }
  SUBCASE("softmax_rows") {
    check_op(
        [](Tape& t, const std::vector<Var>& v) { return t.softmax_rows(v[0]); },
        {random_matrix(3, 5, 14)}, 0, 1e-5);
  }
  SUBCASE("layer_norm x") {
    check_op(
        [](Tape& t, const std::vector<Var>& v) {
          return t.layer_norm_rows(v[0], v[1], v[2]);
        },
        {random_matrix(4, 6, 15), random_matrix(1, 6, 16),
         random_matrix(1, 6, 17)},
        0, 1e-5);
  }
  SUBCASE("layer_norm gamma") {
    check_op(
        [](Tape& t, const std::vector<Var>& v) {
          return t.layer_norm_rows(v[0], v[1], v[2]);
        },
        {random_matrix(4, 6, 15), random_matrix(1, 6, 16),
         random_matrix(1, 6, 17)},
        1, 1e-5);
  }
  SUBCASE("gelu") {
    check_op([](Tape& t, const std::vector<Var>& v) { return t.gelu(v[0]); },
             {random_matrix(4, 4, 18)}, 0, 1e-5);
  }
  SUBCASE("sigmoid") {
    check_op([](Tape& t, const std::vector<Var>& v) { return t.sigmoid(v[0]); },
             {random_matrix(4, 4, 19)}, 0, 1e-5);
  }
  SUBCASE("reductions") {
    check_op(
        [](Tape& t, const std::vector<Var>& v) {
          Var m = t.mean_rows(v[0]);
          Var s = t.row_sums(v[0]);
          return t.concat_cols(m, t.concat_cols(t.mean_all(v[0]),
                                                t.sum_all(s)));
        },
        {random_matrix(3, 4, 20)}, 0, 1e-5);
  }
  SUBCASE("scale_by") {
    check_op(
        [](Tape& t, const std::vector<Var>& v) {
          Var s = t.mean_all(v[0]);
          return t.scale_by(s, v[1]);
        },
        {random_matrix(2, 2, 21), random_matrix(3, 3, 22)}, 0, 1e-5);
  }
  SUBCASE("cosine_rows") {
    check_op(
        [](Tape& t, const std::vector<Var>& v) {
          return t.cosine_rows(v[0], v[1]);
        },
        {random_matrix(1, 6, 23), random_matrix(1, 6, 24)}, 0, 1e-5);
  }
  SUBCASE("stack_row") {
    check_op(
        [](Tape& t, const std::vector<Var>& v) {
          std::vector<Var> scalars{t.mean_all(v[0]), t.sum_all(v[0]),
                                   t.mean_all(t.mul(v[0], v[0]))};
          return t.softmax_rows(t.stack_row(scalars));
        },
        {random_matrix(2, 3, 25)}, 0, 1e-5);
  }
}

TEST_CASE("tape: cross-entropy value and gradient") {
  Matrix logits(2, 3);
  logits << 1.0, 2.0, 0.5, -1.0, 0.0, 3.0;
  std::vector<int> labels{1, 2};
  Tape t;
  Var z = t.param(logits);
  Var loss = t.softmax_xent_mean(z, labels);
  // manual: mean over rows of (logsumexp - z[label])
  double expect = 0.0;
  for (int r = 0; r < 2; ++r) {
    double lse = std::log(std::exp(logits(r, 0)) + std::exp(logits(r, 1)) +
                          std::exp(logits(r, 2)));
    expect += lse - logits(r, labels[static_cast<size_t>(r)]);
  }
  expect /= 2.0;
  CHECK(t.val(loss)(0, 0) == doctest::Approx(expect).epsilon(1e-12));

  t.backward(loss);
  Matrix analytic = t.grad(z);
  auto f = [&](const Matrix& x) {
    Tape t2;
    Var z2 = t2.param(x);
    return t2.val(t2.softmax_xent_mean(z2, labels))(0, 0);
  };
  Matrix numeric = fd_grad(f, logits);
  double max_err = 0;
  CHECK(grad_agreement(analytic, numeric, 1e-6, &max_err) == 1.0);
}

TEST_CASE("tape: cosine of zero vector is exactly zero with zero gradient") {
  Tape t;
  Var a = t.param(Matrix::Zero(1, 4));
  Var b = t.param(random_matrix(1, 4, 30));
  Var c = t.cosine_rows(a, b);
  CHECK(t.val(c)(0, 0) == 0.0);
  Var loss = t.sum_all(c);
  t.backward(loss);
  CHECK(t.grad(a).norm() == 0.0);
  CHECK(t.grad(b).norm() == 0.0);
}

TEST_CASE("tape: gradients flow through but not into constants") {
  Tape t;
  Matrix w0 = random_matrix(3, 3, 31);
  Var w = t.constant(w0);
  Var x = t.param(random_matrix(2, 3, 32));
  Var y = t.matmul(x, w);
  Var loss = t.mean_all(y);
  t.backward(loss);
  CHECK(t.grad(x).norm() > 0.0);
  CHECK_THROWS_AS(t.grad(w), contract_error);
}

TEST_CASE("tape: backward on a loss independent of parameters is a no-op") {
  Tape t;
  Var c = t.constant(random_matrix(2, 2, 33));
  Var loss = t.mean_all(c);
  t.backward(loss);  // must not crash
  CHECK(t.val(loss).size() == 1);
}

TEST_CASE("tape: composed expression matches finite differences") {
  // small end-to-end network: linear -> gelu -> layernorm -> softmax-CE
  Matrix x = random_matrix(5, 4, 40);
  Matrix w1 = random_matrix(4, 6, 41), b1 = random_matrix(1, 6, 42);
  Matrix gm = random_matrix(1, 6, 43), bt = random_matrix(1, 6, 44);
  Matrix w2 = random_matrix(6, 3, 45), b2 = random_matrix(1, 3, 46);
  std::vector<int> labels{0, 2, 1, 1, 0};
  auto loss_fn = [&](const Matrix& w1v) {
    Tape t;
    Var xv = t.constant(x);
    Var h = t.gelu(t.linear(xv, t.param(w1v), t.constant(b1)));
    Var n = t.layer_norm_rows(h, t.constant(gm), t.constant(bt));
    Var z = t.linear(n, t.constant(w2), t.constant(b2));
    return t.val(t.softmax_xent_mean(z, labels))(0, 0);
  };
  Tape t;
  Var w1v = t.param(w1);
  Var h = t.gelu(t.linear(t.constant(x), w1v, t.constant(b1)));
  Var n = t.layer_norm_rows(h, t.constant(gm), t.constant(bt));
  Var z = t.linear(n, t.constant(w2), t.constant(b2));
  Var loss = t.softmax_xent_mean(z, labels);
  t.backward(loss);
  Matrix numeric = fd_grad(loss_fn, w1);
  double max_err = 0;
  const double frac = grad_agreement(t.grad(w1v), numeric, 1e-5, &max_err);
  INFO("max relative error " << max_err);
  CHECK(frac == 1.0);
}

TEST_CASE("tape: shape violations throw") {
  Tape t;
  Var a = t.constant(Matrix::Zero(2, 3));
  Var b = t.constant(Matrix::Zero(3, 2));
  CHECK_THROWS_AS(t.add(a, b), shape_error);
  CHECK_THROWS_AS(t.matmul(a, a), shape_error);
  CHECK_THROWS_AS(t.backward(a), shape_error);
  CHECK_THROWS_AS(t.softmax_xent_mean(a, {0}), shape_error);      // label count
  CHECK_THROWS_AS(t.softmax_xent_mean(a, {0, 5}), shape_error);   // label range
}
