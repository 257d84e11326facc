#include "vnt/tuner.hpp"

#include <cmath>
#include <map>

#include "vnt/optim.hpp"
#include "vnt/rng.hpp"

namespace vnt {

namespace {

std::vector<int> context_nodes(const FewShotTask& task, bool transductive) {
  std::vector<int> ids = task.support_nodes();
  if (transductive) {
    std::vector<int> q = task.query_nodes();
    ids.insert(ids.end(), q.begin(), q.end());
  }
  return ids;
}

void check_frozen(const GTModel& m) {
  if (!m.frozen)
    throw contract_error(
        "prompt tuning requires a frozen encoder; freeze it after "
        "pretraining");
}

}  // namespace

int prompt_rows(double alpha, int n_way, int k_shot) {
  require(alpha >= 0.0, "prompt size factor must be non-negative");
  require(n_way >= 1 && k_shot >= 1, "task shape must be positive");
  const long r = std::lround(alpha * n_way * k_shot);
  require(r >= 1, "prompt must have at least one row; increase alpha");
  return static_cast<int>(r);
}

Matrix init_prompt(const GTModel& m, const Graph& g, const Matrix& pe,
                   const FewShotTask& task, PromptInit kind, int rows,
                   uint64_t seed) {
  require(rows >= 1, "prompt must have at least one row");
  const int f = m.cfg.embed_dim;
  if (kind == PromptInit::random) {
    Rng rng(mix_seed(seed, 0x70726f6d7074ULL));
    Matrix p(rows, f);
    for (Eigen::Index i = 0; i < p.rows(); ++i)
      for (Eigen::Index j = 0; j < p.cols(); ++j)
        p(i, j) = 0.02 * rng.normal();
    return p;
  }
  // prototype: class means of a prompt-free support-only forward pass
  std::vector<int> sup = task.support_nodes();
  auto [emb, ignored] = embed_nodes(m, g, pe, sup, nullptr);
  const int n = task.n_way();
  Matrix means = Matrix::Zero(n, f);
  Vector counts = Vector::Zero(n);
  for (size_t i = 0; i < task.support.size(); ++i) {
    means.row(task.support[i].second) += emb.row(static_cast<Eigen::Index>(i));
    counts(task.support[i].second) += 1.0;
  }
  for (int c = 0; c < n; ++c) {
    require(counts(c) > 0.0, "every class needs support nodes");
    means.row(c) /= counts(c);
  }
  Matrix p(rows, f);
  int r = 0;
  const int base = rows / n, extra = rows % n;
  for (int c = 0; c < n; ++c)
    for (int k = 0; k < base + (c < extra ? 1 : 0); ++k) p.row(r++) = means.row(c);
  return p;
}

std::pair<Matrix, Matrix> embed_nodes(const GTModel& m, const Graph& g,
                                      const Matrix& pe,
                                      const std::vector<int>& node_ids,
                                      const Matrix* prompt) {
  Matrix e0 = gt_embed_plain(m, g, pe, node_ids);
  return gt_forward_plain(m, e0, prompt);
}

namespace {

TuneOutput tune_impl(const GTModel& m, const Graph& g, const Matrix& pe,
                     const FewShotTask& task, Matrix prompt,
                     const TuneConfig& cfg) {
  check_frozen(m);
  require(cfg.steps >= 1, "tuning needs at least one step");
  require(prompt.cols() == m.cfg.embed_dim,
          "prompt width must match the encoder working width");

  const int n = task.n_way();
  const int s = static_cast<int>(task.support.size());
  std::vector<int> ctx = context_nodes(task, cfg.transductive);
  Matrix e0 = gt_embed_plain(m, g, pe, ctx);

  std::vector<int> sup_labels(task.support.size());
  for (size_t i = 0; i < task.support.size(); ++i)
    sup_labels[i] = task.support[i].second;

  TuneOutput out;
  out.prompt = std::move(prompt);
  out.cls_w = Matrix::Zero(m.cfg.embed_dim, n);
  out.cls_b = Matrix::Zero(1, n);

  Adam opt_prompt(cfg.lr_prompt);
  Adam opt_cls(cfg.lr_classifier);

  for (int step = 0; step < cfg.steps; ++step) {
    ad::Tape t;
    GTVars vars = bind_gt(t, m, /*trainable=*/false);
    ad::Var p = t.param(out.prompt);
    ad::Var w = t.param(out.cls_w);
    ad::Var b = t.param(out.cls_b);
    GTForwardOut fwd = gt_forward(t, m.cfg, vars, t.constant(e0), p);
    ad::Var sup_emb = t.slice_rows(fwd.nodes, 0, s);
    ad::Var logits = t.linear(sup_emb, w, b);
    ad::Var loss = t.softmax_xent_mean(logits, sup_labels);
    if (cfg.weight_decay > 0.0) {
      ad::Var penalty = t.scale(t.sum_all(t.mul(w, w)), cfg.weight_decay);
      loss = t.add(loss, penalty);
    }
    out.loss_history.push_back(t.val(loss)(0, 0));
    if (!std::isfinite(out.loss_history.back()))
      throw numerical_error("prompt tuning diverged at step " +
                            std::to_string(step));
    t.backward(loss);
    opt_prompt.step({&out.prompt}, {&t.grad(p)});
    opt_cls.step({&out.cls_w, &out.cls_b}, {&t.grad(w), &t.grad(b)});
  }
  return out;
}

}  // namespace

TuneOutput tune_prompt(const GTModel& m, const Graph& g, const Matrix& pe,
                       const FewShotTask& task, const TuneConfig& cfg) {
  const int rows = prompt_rows(cfg.alpha, task.n_way(), task.k_shot());
  Matrix p0 = init_prompt(m, g, pe, task, cfg.init, rows, cfg.seed);
  return tune_impl(m, g, pe, task, std::move(p0), cfg);
}

TuneOutput tune_prompt_from(const GTModel& m, const Graph& g, const Matrix& pe,
                            const FewShotTask& task, const Matrix& prompt0,
                            const TuneConfig& cfg) {
  return tune_impl(m, g, pe, task, prompt0, cfg);
}

Prediction predict_queries(const GTModel& m, const Graph& g, const Matrix& pe,
                           const FewShotTask& task, const Matrix& prompt,
                           const Matrix& cls_w, const Matrix& cls_b) {
  std::vector<int> ctx = context_nodes(task, /*transductive=*/true);
  auto [emb, pr] = embed_nodes(m, g, pe, ctx, prompt.rows() ? &prompt : nullptr);
  const int s = static_cast<int>(task.support.size());
  const int q = static_cast<int>(task.query.size());
  Matrix logits = (emb.middleRows(s, q) * cls_w).rowwise() + cls_b.row(0);
  Matrix probs = ad::softmax_rows_plain(logits);
  Prediction out;
  out.probs = probs;
  out.labels.resize(static_cast<size_t>(q));
  for (int i = 0; i < q; ++i) {
    Eigen::Index best = 0;
    probs.row(i).maxCoeff(&best);
    out.labels[static_cast<size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

double accuracy(const std::vector<int>& predicted,
                const std::vector<int>& truth) {
  require(predicted.size() == truth.size() && !truth.empty(),
          "prediction/truth arrays must align and be non-empty");
  size_t hits = 0;
  for (size_t i = 0; i < truth.size(); ++i)
    if (predicted[i] == truth[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

EnsembleOutput ensemble_predict(const GTModel& m, const Graph& g,
                                const Matrix& pe, const FewShotTask& task,
                                const TuneConfig& cfg, int members,
                                double noise_scale) {
  require(members >= 1, "ensemble needs at least one member");
  require(cfg.init == PromptInit::prototype,
          "ensemble members perturb a prototype prompt");
  const int rows = prompt_rows(cfg.alpha, task.n_way(), task.k_shot());
  Matrix base =
      init_prompt(m, g, pe, task, PromptInit::prototype, rows, cfg.seed);
  const std::vector<int> truth_labels = [&] {
    std::vector<int> v(task.query.size());
    for (size_t i = 0; i < task.query.size(); ++i) v[i] = task.query[i].second;
    return v;
  }();

  EnsembleOutput out;
  std::vector<std::vector<int>> member_labels;
  for (int mem = 0; mem < members; ++mem) {
    Matrix p0 = base;
    Rng rng(mix_seed(cfg.seed, 1000 + static_cast<uint64_t>(mem)));
    for (Eigen::Index i = 0; i < p0.rows(); ++i)
      for (Eigen::Index j = 0; j < p0.cols(); ++j)
        p0(i, j) += noise_scale * rng.normal();
    TuneOutput tuned = tune_prompt_from(m, g, pe, task, p0, cfg);
    Prediction pred =
        predict_queries(m, g, pe, task, tuned.prompt, tuned.cls_w, tuned.cls_b);
    out.member_accuracy.push_back(accuracy(pred.labels, truth_labels));
    member_labels.push_back(std::move(pred.labels));
  }
  out.labels = majority_vote(member_labels, task.n_way());
  out.vote_accuracy = accuracy(out.labels, truth_labels);
  return out;
}

std::vector<int> majority_vote(const std::vector<std::vector<int>>& members,
                               int n_way) {
  require(!members.empty(), "vote needs at least one member");
  require(n_way >= 1, "vote needs at least one class");
  const size_t q = members.front().size();
  for (const auto& v : members)
    require(v.size() == q, "all members must label the same queries");
  std::vector<int> out(q);
  std::vector<int> counts(static_cast<size_t>(n_way));
  for (size_t i = 0; i < q; ++i) {
    std::fill(counts.begin(), counts.end(), 0);
    for (const auto& v : members) {
      require(v[i] >= 0 && v[i] < n_way, "vote label out of range");
      ++counts[static_cast<size_t>(v[i])];
    }
    int best = 0;
    for (int c = 1; c < n_way; ++c)
      if (counts[static_cast<size_t>(c)] > counts[static_cast<size_t>(best)])
        best = c;  // strict: ties keep the lowest class
    out[i] = best;
  }
  return out;
}

ClassifierFit fit_classifier(const Matrix& emb, const std::vector<int>& labels,
                             int n_way, int steps, double lr,
                             double weight_decay) {
  require(n_way >= 2, "classification needs at least two classes");
  require(static_cast<Eigen::Index>(labels.size()) == emb.rows(),
          "one label per embedding row");
  require(steps >= 1, "classifier fitting needs at least one step");
  ClassifierFit fit;
  fit.w = Matrix::Zero(emb.cols(), n_way);
  fit.b = Matrix::Zero(1, n_way);
  Adam opt(lr);
  for (int step = 0; step < steps; ++step) {
    ad::Tape t;
    ad::Var w = t.param(fit.w);
    ad::Var b = t.param(fit.b);
    ad::Var logits = t.linear(t.constant(emb), w, b);
    ad::Var loss = t.softmax_xent_mean(logits, labels);
    if (weight_decay > 0.0)
      loss = t.add(loss, t.scale(t.sum_all(t.mul(w, w)), weight_decay));
    fit.loss_history.push_back(t.val(loss)(0, 0));
    t.backward(loss);
    opt.step({&fit.w, &fit.b}, {&t.grad(w), &t.grad(b)});
  }
  return fit;
}

std::vector<int> classify(const Matrix& emb, const Matrix& w, const Matrix& b) {
  Matrix logits = (emb * w).rowwise() + b.row(0);
  std::vector<int> out(static_cast<size_t>(logits.rows()));
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    int best = 0;
    for (Eigen::Index c = 1; c < logits.cols(); ++c)
      if (logits(i, c) > logits(i, best)) best = static_cast<int>(c);
    out[static_cast<size_t>(i)] = best;
  }
  return out;
}

}  // namespace vnt
