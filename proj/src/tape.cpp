#include "vnt/tape.hpp"

#include <cmath>
#include <utility>

namespace vnt::ad {

namespace {
constexpr Scalar kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr Scalar kGeluA = 0.044715;
}  // namespace

Matrix softmax_rows_plain(const Matrix& x) {
  Matrix y(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const Scalar m = x.row(r).maxCoeff();
    RowVector e = (x.row(r).array() - m).exp();
    y.row(r) = e / e.sum();
  }
  return y;
}

// Shared with the tape op below: identical expressions keep the inference
// path bit-identical to the training path.
Matrix layer_norm_xhat(const Matrix& x, Scalar eps, Vector* inv_std_out) {
  const Scalar n = static_cast<Scalar>(x.cols());
  Matrix xhat(x.rows(), x.cols());
  Vector inv_std(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const Scalar mu = x.row(r).mean();
    const RowVector c = x.row(r).array() - mu;
    const Scalar var = c.squaredNorm() / n;
    const Scalar inv = Scalar(1) / std::sqrt(var + eps);
    xhat.row(r) = c * inv;
    inv_std(r) = inv;
  }
  if (inv_std_out) *inv_std_out = std::move(inv_std);
  return xhat;
}

Matrix layer_norm_rows_plain(const Matrix& x, const Matrix& gamma,
                             const Matrix& beta, Scalar eps) {
  Matrix xhat = layer_norm_xhat(x, eps, nullptr);
  Matrix y = (xhat.array().rowwise() * gamma.row(0).array()).matrix();
  y.rowwise() += beta.row(0);
  return y;
}

Matrix gelu_plain(const Matrix& x) {
  return x.unaryExpr([](Scalar v) {
    const Scalar u = kGeluC * (v + kGeluA * v * v * v);
    return Scalar(0.5) * v * (Scalar(1) + std::tanh(u));
  });
}

Var Tape::make(Matrix val, std::initializer_list<Var> parents,
               std::function<void(Tape&, int)> back) {
  Node n;
  n.val = std::move(val);
  for (Var p : parents)
    if (p.valid() && nodes_[p.i].tracked) n.tracked = true;
  if (n.tracked) {
    n.grad = Matrix::Zero(n.val.rows(), n.val.cols());
    n.back = std::move(back);
  }
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::constant(Matrix v) { return make(std::move(v), {}, nullptr); }

Var Tape::param(Matrix v) {
  Node n;
  n.val = std::move(v);
  n.tracked = true;
  n.grad = Matrix::Zero(n.val.rows(), n.val.cols());
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

const Matrix& Tape::grad(Var v) const {
  if (!nodes_[v.i].tracked)
    throw contract_error("gradient requested for a node that does not track one");
  return nodes_[v.i].grad;
}

void Tape::backward(Var loss) {
  if (v(loss).rows() != 1 || v(loss).cols() != 1)
    throw shape_error("backward requires a scalar (1x1) loss");
  if (!req(loss)) return;  // loss does not depend on any parameter
  g(loss)(0, 0) = 1.0;
  for (int i = loss.i; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.tracked && n.back) n.back(*this, i);
  }
}

Var Tape::add(Var a, Var b) {
  if (v(a).rows() != v(b).rows() || v(a).cols() != v(b).cols())
    throw shape_error("add: operand shapes differ");
  return make(v(a) + v(b), {a, b}, [a, b](Tape& t, int self) {
    const Matrix& gr = t.g(Var{self});
    if (t.req(a)) t.g(a) += gr;
    if (t.req(b)) t.g(b) += gr;
  });
}

Var Tape::sub(Var a, Var b) {
  if (v(a).rows() != v(b).rows() || v(a).cols() != v(b).cols())
    throw shape_error("sub: operand shapes differ");
  return make(v(a) - v(b), {a, b}, [a, b](Tape& t, int self) {
    const Matrix& gr = t.g(Var{self});
    if (t.req(a)) t.g(a) += gr;
    if (t.req(b)) t.g(b) -= gr;
  });
}

Var Tape::mul(Var a, Var b) {
  if (v(a).rows() != v(b).rows() || v(a).cols() != v(b).cols())
    throw shape_error("mul: operand shapes differ");
  return make(v(a).cwiseProduct(v(b)), {a, b}, [a, b](Tape& t, int self) {
    const Matrix& gr = t.g(Var{self});
    if (t.req(a)) t.g(a) += gr.cwiseProduct(t.v(b));
    if (t.req(b)) t.g(b) += gr.cwiseProduct(t.v(a));
  });
}

Var Tape::scale(Var a, Scalar s) {
  return make(v(a) * s, {a}, [a, s](Tape& t, int self) {
    if (t.req(a)) t.g(a) += t.g(Var{self}) * s;
  });
}

Var Tape::gelu(Var x) {
  return make(gelu_plain(v(x)), {x}, [x](Tape& t, int self) {
    if (!t.req(x)) return;
    const Matrix& xin = t.v(x);
    const Matrix& gr = t.g(Var{self});
    Matrix d = xin.unaryExpr([](Scalar vv) {
      const Scalar u = kGeluC * (vv + kGeluA * vv * vv * vv);
      const Scalar th = std::tanh(u);
      const Scalar du = kGeluC * (Scalar(1) + Scalar(3) * kGeluA * vv * vv);
      return Scalar(0.5) * (Scalar(1) + th) +
             Scalar(0.5) * vv * (Scalar(1) - th * th) * du;
    });
    t.g(x) += gr.cwiseProduct(d);
  });
}

Var Tape::sigmoid(Var x) {
  Matrix y = v(x).unaryExpr(
      [](Scalar vv) { return Scalar(1) / (Scalar(1) + std::exp(-vv)); });
  return make(std::move(y), {x}, [x](Tape& t, int self) {
    if (!t.req(x)) return;
    const Matrix& yv = t.v(Var{self});
    t.g(x) += t.g(Var{self})
                  .cwiseProduct(yv.cwiseProduct((1.0 - yv.array()).matrix()));
  });
}

Var Tape::matmul(Var a, Var b) {
  if (v(a).cols() != v(b).rows()) throw shape_error("matmul: inner dims differ");
  return make(v(a) * v(b), {a, b}, [a, b](Tape& t, int self) {
    const Matrix& gr = t.g(Var{self});
    if (t.req(a)) t.g(a).noalias() += gr * t.v(b).transpose();
    if (t.req(b)) t.g(b).noalias() += t.v(a).transpose() * gr;
  });
}

Var Tape::matmul_nt(Var a, Var b) {
  if (v(a).cols() != v(b).cols())
    throw shape_error("matmul_nt: inner dims differ");
  return make(v(a) * v(b).transpose(), {a, b}, [a, b](Tape& t, int self) {
    const Matrix& gr = t.g(Var{self});
    if (t.req(a)) t.g(a).noalias() += gr * t.v(b);
    if (t.req(b)) t.g(b).noalias() += gr.transpose() * t.v(a);
  });
}

Var Tape::add_row_broadcast(Var x, Var b) {
  if (v(b).rows() != 1 || v(b).cols() != v(x).cols())
    throw shape_error("add_row_broadcast: bias must be 1 x cols");
  Matrix y = v(x);
  y.rowwise() += v(b).row(0);
  return make(std::move(y), {x, b}, [x, b](Tape& t, int self) {
    const Matrix& gr = t.g(Var{self});
    if (t.req(x)) t.g(x) += gr;
    if (t.req(b)) t.g(b) += gr.colwise().sum();
  });
}

Var Tape::slice_rows(Var x, int start, int count) {
  if (start < 0 || count < 0 || start + count > v(x).rows())
    throw shape_error("slice_rows: range out of bounds");
  return make(v(x).middleRows(start, count), {x},
              [x, start, count](Tape& t, int self) {
                if (t.req(x))
                  t.g(x).middleRows(start, count) += t.g(Var{self});
              });
}

Var Tape::slice_cols(Var x, int start, int count) {
  if (start < 0 || count < 0 || start + count > v(x).cols())
    throw shape_error("slice_cols: range out of bounds");
  return make(v(x).middleCols(start, count), {x},
              [x, start, count](Tape& t, int self) {
                if (t.req(x))
                  t.g(x).middleCols(start, count) += t.g(Var{self});
              });
}

Var Tape::concat_rows(Var a, Var b) {
  if (v(a).cols() != v(b).cols()) throw shape_error("concat_rows: cols differ");
  Matrix y(v(a).rows() + v(b).rows(), v(a).cols());
  y.topRows(v(a).rows()) = v(a);
  y.bottomRows(v(b).rows()) = v(b);
  const int na = static_cast<int>(v(a).rows());
  const int nb = static_cast<int>(v(b).rows());
  return make(std::move(y), {a, b}, [a, b, na, nb](Tape& t, int self) {
    const Matrix& gr = t.g(Var{self});
    if (t.req(a)) t.g(a) += gr.topRows(na);
    if (t.req(b)) t.g(b) += gr.bottomRows(nb);
  });
}

Var Tape::concat_cols(Var a, Var b) {
  if (v(a).rows() != v(b).rows()) throw shape_error("concat_cols: rows differ");
  Matrix y(v(a).rows(), v(a).cols() + v(b).cols());
  y.leftCols(v(a).cols()) = v(a);
  y.rightCols(v(b).cols()) = v(b);
  const int ca = static_cast<int>(v(a).cols());
  const int cb = static_cast<int>(v(b).cols());
  return make(std::move(y), {a, b}, [a, b, ca, cb](Tape& t, int self) {
    const Matrix& gr = t.g(Var{self});
    if (t.req(a)) t.g(a) += gr.leftCols(ca);
    if (t.req(b)) t.g(b) += gr.rightCols(cb);
  });
}

Var Tape::gather_rows(Var x, std::vector<int> idx) {
  Matrix y(static_cast<Eigen::Index>(idx.size()), v(x).cols());
  for (size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0 || idx[r] >= v(x).rows())
      throw shape_error("gather_rows: index out of range");
    y.row(static_cast<Eigen::Index>(r)) = v(x).row(idx[r]);
  }
  return make(std::move(y), {x}, [x, idx = std::move(idx)](Tape& t, int self) {
    if (!t.req(x)) return;
    const Matrix& gr = t.g(Var{self});
    for (size_t r = 0; r < idx.size(); ++r)
      t.g(x).row(idx[r]) += gr.row(static_cast<Eigen::Index>(r));
  });
}

Var Tape::stack_row(const std::vector<Var>& scalars) {
  Matrix y(1, static_cast<Eigen::Index>(scalars.size()));
  bool any = false;
  for (size_t k = 0; k < scalars.size(); ++k) {
    const Matrix& s = v(scalars[k]);
    if (s.rows() != 1 || s.cols() != 1)
      throw shape_error("stack_row: operands must be 1x1");
    y(0, static_cast<Eigen::Index>(k)) = s(0, 0);
    any = any || req(scalars[k]);
  }
  Node n;
  n.val = std::move(y);
  n.tracked = any;
  if (any) {
    n.grad = Matrix::Zero(1, static_cast<Eigen::Index>(scalars.size()));
    n.back = [scalars](Tape& t, int self) {
      const Matrix& gr = t.g(Var{self});
      for (size_t k = 0; k < scalars.size(); ++k)
        if (t.req(scalars[k]))
          t.g(scalars[k])(0, 0) += gr(0, static_cast<Eigen::Index>(k));
    };
  }
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::softmax_rows(Var x) {
  return make(softmax_rows_plain(v(x)), {x}, [x](Tape& t, int self) {
    if (!t.req(x)) return;
    const Matrix& y = t.v(Var{self});
    const Matrix& gr = t.g(Var{self});
    // dx_r = y_r .* (g_r - <g_r, y_r>)
    Vector dots = (gr.cwiseProduct(y)).rowwise().sum();
    Matrix centered = gr;
    centered.colwise() -= dots;
    t.g(x) += y.cwiseProduct(centered);
  });
}

Var Tape::layer_norm_rows(Var x, Var gamma, Var beta, Scalar eps) {
  if (v(gamma).rows() != 1 || v(beta).rows() != 1 ||
      v(gamma).cols() != v(x).cols() || v(beta).cols() != v(x).cols())
    throw shape_error("layer_norm_rows: gamma/beta must be 1 x cols");
  Vector inv_std;
  Matrix xhat = layer_norm_xhat(v(x), eps, &inv_std);
  Matrix y = (xhat.array().rowwise() * v(gamma).row(0).array()).matrix();
  y.rowwise() += v(beta).row(0);
  return make(std::move(y), {x, gamma, beta},
              [x, gamma, beta, xhat, inv_std](Tape& t, int self) {
                const Matrix& gr = t.g(Var{self});
                if (t.req(gamma))
                  t.g(gamma) += (gr.cwiseProduct(xhat)).colwise().sum();
                if (t.req(beta)) t.g(beta) += gr.colwise().sum();
                if (!t.req(x)) return;
                // dxhat = g .* gamma ; dx = inv_std * (dxhat - mean(dxhat)
                //         - xhat * mean(dxhat .* xhat)) per row
                Matrix dxhat =
                    (gr.array().rowwise() * t.v(gamma).row(0).array()).matrix();
                Vector m1 = dxhat.rowwise().mean();
                Vector m2 = (dxhat.cwiseProduct(xhat)).rowwise().mean();
                Matrix dx = dxhat;
                dx.colwise() -= m1;
                dx -= (xhat.array().colwise() * m2.array()).matrix();
                dx.array().colwise() *= inv_std.array();
                t.g(x) += dx;
              });
}

Var Tape::mean_all(Var x) {
  Matrix y(1, 1);
  y(0, 0) = v(x).mean();
  const Scalar inv = Scalar(1) / static_cast<Scalar>(v(x).size());
  return make(std::move(y), {x}, [x, inv](Tape& t, int self) {
    if (t.req(x))
      t.g(x).array() += t.g(Var{self})(0, 0) * inv;
  });
}

Var Tape::sum_all(Var x) {
  Matrix y(1, 1);
  y(0, 0) = v(x).sum();
  return make(std::move(y), {x}, [x](Tape& t, int self) {
    if (t.req(x)) t.g(x).array() += t.g(Var{self})(0, 0);
  });
}

Var Tape::mean_rows(Var x) {
  Matrix y = v(x).colwise().mean();
  const Scalar inv = Scalar(1) / static_cast<Scalar>(v(x).rows());
  return make(std::move(y), {x}, [x, inv](Tape& t, int self) {
    if (!t.req(x)) return;
    const Matrix& gr = t.g(Var{self});
    t.g(x).rowwise() += (gr.row(0) * inv);
  });
}

Var Tape::row_sums(Var x) {
  Matrix y = v(x).rowwise().sum();
  return make(std::move(y), {x}, [x](Tape& t, int self) {
    if (!t.req(x)) return;
    const Matrix& gr = t.g(Var{self});
    t.g(x).colwise() += gr.col(0);
  });
}

Var Tape::scale_by(Var s, Var x) {
  if (v(s).rows() != 1 || v(s).cols() != 1)
    throw shape_error("scale_by: scale must be 1x1");
  return make(v(x) * v(s)(0, 0), {s, x}, [s, x](Tape& t, int self) {
    const Matrix& gr = t.g(Var{self});
    if (t.req(s)) t.g(s)(0, 0) += (gr.cwiseProduct(t.v(x))).sum();
    if (t.req(x)) t.g(x) += gr * t.v(s)(0, 0);
  });
}

Var Tape::cosine_rows(Var a, Var b) {
  if (v(a).rows() != 1 || v(b).rows() != 1 || v(a).cols() != v(b).cols())
    throw shape_error("cosine_rows: operands must be equal-length row vectors");
  const Scalar na = v(a).row(0).norm();
  const Scalar nb = v(b).row(0).norm();
  Matrix y(1, 1);
  if (na <= 0.0 || nb <= 0.0) {
    y(0, 0) = 0.0;
    return make(std::move(y), {a, b}, [](Tape&, int) {});  // zero gradient
  }
  const Scalar c = v(a).row(0).dot(v(b).row(0)) / (na * nb);
  y(0, 0) = c;
  return make(std::move(y), {a, b}, [a, b, na, nb, c](Tape& t, int self) {
    const Scalar gg = t.g(Var{self})(0, 0);
    if (t.req(a))
      t.g(a) += gg * (t.v(b) / (na * nb) - (c / (na * na)) * t.v(a));
    if (t.req(b))
      t.g(b) += gg * (t.v(a) / (na * nb) - (c / (nb * nb)) * t.v(b));
  });
}

Var Tape::softmax_xent_mean(Var logits, std::vector<int> labels) {
  const Matrix& z = v(logits);
  if (static_cast<Eigen::Index>(labels.size()) != z.rows())
    throw shape_error("softmax_xent_mean: one label per logits row required");
  for (int lab : labels)
    if (lab < 0 || lab >= z.cols())
      throw shape_error("softmax_xent_mean: label out of range");
  Matrix probs = softmax_rows_plain(z);
  Scalar total = 0.0;
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const Scalar m = z.row(r).maxCoeff();
    const Scalar lse = m + std::log((z.row(r).array() - m).exp().sum());
    total += lse - z(r, labels[static_cast<size_t>(r)]);
  }
  Matrix y(1, 1);
  y(0, 0) = total / static_cast<Scalar>(z.rows());
  const Scalar inv_n = Scalar(1) / static_cast<Scalar>(z.rows());
  return make(std::move(y), {logits},
              [logits, labels = std::move(labels), probs = std::move(probs),
               inv_n](Tape& t, int self) {
                if (!t.req(logits)) return;
                const Scalar gg = t.g(Var{self})(0, 0);
                Matrix d = probs;
                for (Eigen::Index r = 0; r < d.rows(); ++r)
                  d(r, labels[static_cast<size_t>(r)]) -= 1.0;
                t.g(logits) += (gg * inv_n) * d;
              });
}

}  // namespace vnt::ad
