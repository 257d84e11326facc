#include "vnt/pretrain.hpp"

#include <cmath>
#include <set>
#include <string>
#include <utility>

#include "vnt/optim.hpp"
#include "vnt/ppr.hpp"

namespace vnt {

ad::Var attribute_reconstruction_loss(ad::Tape& t, ad::Var emb, ad::Var dec_w,
                                      ad::Var dec_b, const Matrix& x_target) {
  ad::Var xhat = t.linear(emb, dec_w, dec_b);
  require(t.val(xhat).rows() == x_target.rows() &&
              t.val(xhat).cols() == x_target.cols(),
          "reconstruction target shape does not match decoder output");
  ad::Var diff = t.sub(xhat, t.constant(x_target));
  return t.mean_all(t.mul(diff, diff));
}

ad::Var structure_recovery_loss(ad::Tape& t, ad::Var emb, ad::Var bilinear,
                                const std::vector<int>& us,
                                const std::vector<int>& vs,
                                const std::vector<double>& labels) {
  require(us.size() == vs.size() && us.size() == labels.size(),
          "pair index/label arrays must align");
  require(!us.empty(), "structure loss needs at least one pair");
  ad::Var eu = t.gather_rows(emb, us);
  ad::Var ev = t.gather_rows(emb, vs);
  // Bilinear pair scores e_u^T B e_v, scaled by 1/sqrt(F) so normalized
  // embeddings land the sigmoid in its responsive range at any width.
  const double inv_sqrt_f =
      1.0 / std::sqrt(static_cast<double>(t.val(emb).cols()));
  ad::Var scores =
      t.scale(t.row_sums(t.mul(t.matmul(eu, bilinear), ev)), inv_sqrt_f);
  ad::Var probs = t.sigmoid(scores);
  Matrix y(static_cast<Eigen::Index>(labels.size()), 1);
  for (size_t i = 0; i < labels.size(); ++i)
    y(static_cast<Eigen::Index>(i), 0) = labels[i];
  ad::Var diff = t.sub(probs, t.constant(y));
  return t.mean_all(t.mul(diff, diff));
}

StructurePairs sample_structure_pairs(const Graph& g,
                                      const std::vector<int>& batch_ids,
                                      double negative_ratio, Rng& rng) {
  require(negative_ratio >= 0.0, "negative_ratio must be non-negative");
  const int n = static_cast<int>(batch_ids.size());
  StructurePairs out;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (g.has_edge(batch_ids[static_cast<size_t>(i)],
                     batch_ids[static_cast<size_t>(j)])) {
        out.us.push_back(i);
        out.vs.push_back(j);
        out.labels.push_back(1.0);
      }
  out.num_positive = static_cast<int>(out.labels.size());

  const long want =
      std::lround(negative_ratio * static_cast<double>(out.num_positive));
  std::set<std::pair<int, int>> used;
  long tries = 0;
  const long max_tries = 50 * want + 100;
  while (static_cast<long>(used.size()) < want && tries < max_tries) {
    ++tries;
    int i = static_cast<int>(rng.below(static_cast<uint64_t>(n)));
    int j = static_cast<int>(rng.below(static_cast<uint64_t>(n)));
    if (i == j) continue;
    if (i > j) std::swap(i, j);
    if (g.has_edge(batch_ids[static_cast<size_t>(i)],
                   batch_ids[static_cast<size_t>(j)]))
      continue;
    used.emplace(i, j);
  }
  for (const auto& [i, j] : used) {
    out.us.push_back(i);
    out.vs.push_back(j);
    out.labels.push_back(0.0);
  }
  return out;
}

Vector structure_scores(const Matrix& emb, const Matrix& bilinear,
                        const std::vector<int>& us,
                        const std::vector<int>& vs) {
  require(us.size() == vs.size(), "pair index arrays must align");
  const double inv_sqrt_f = 1.0 / std::sqrt(static_cast<double>(emb.cols()));
  Vector s(static_cast<Eigen::Index>(us.size()));
  for (size_t p = 0; p < us.size(); ++p) {
    const double raw =
        inv_sqrt_f *
        (emb.row(us[p]) * bilinear * emb.row(vs[p]).transpose()).value();
    s(static_cast<Eigen::Index>(p)) = 1.0 / (1.0 + std::exp(-raw));
  }
  return s;
}

PretrainResult pretrain(GTModel& m, const Graph& g, const PretrainConfig& cfg) {
  if (m.frozen) throw contract_error("cannot pretrain a frozen encoder");
  require(cfg.epochs >= 1 && cfg.batches_per_epoch >= 1,
          "pretraining needs a positive step budget");
  require(cfg.max_batch >= 2, "batches need at least two nodes");
  require(static_cast<int>(g.features.cols()) == m.cfg.input_dim,
          "graph feature width does not match the encoder input width");

  const int f = m.cfg.embed_dim;
  const int fin = m.cfg.input_dim;
  PretrainResult res;
  {
    Rng init(mix_seed(cfg.seed, 0x9e3779b97f4a7c15ULL));
    const double bound_w = 1.0 / std::sqrt(static_cast<double>(f));
    auto fill = [&](Matrix& dst) {
      for (Eigen::Index i = 0; i < dst.rows(); ++i)
        for (Eigen::Index j = 0; j < dst.cols(); ++j)
          dst(i, j) = init.uniform(-bound_w, bound_w);
    };
    res.decoder_w.resize(f, fin);
    fill(res.decoder_w);
    res.decoder_b = Matrix::Zero(1, fin);
    res.bilinear.resize(f, f);
    fill(res.bilinear);
  }

  Matrix pe = positional_encoding(g, m.cfg.pe_dim);
  Adam opt(cfg.lr);
  Rng rng(cfg.seed);
  const int total_steps = cfg.epochs * cfg.batches_per_epoch;

  PPRConfig walk;
  walk.restart = cfg.restart;

  for (int step = 0; step < total_steps; ++step) {
    // draw a batch that contains at least one edge; give up after 16 seeds
    std::vector<int> batch;
    StructurePairs pairs;
    for (int attempt = 0; attempt < 16; ++attempt) {
      int seed_node =
          static_cast<int>(rng.below(static_cast<uint64_t>(g.num_nodes())));
      batch = ppr_subgraph(g, seed_node, cfg.max_batch, walk);
      pairs = sample_structure_pairs(g, batch, cfg.negative_ratio, rng);
      if (pairs.num_positive > 0) break;
    }
    const bool has_structure = pairs.num_positive > 0;
    if (!has_structure) ++res.steps_without_structure;

    Matrix x_rows(static_cast<Eigen::Index>(batch.size()), fin);
    for (size_t i = 0; i < batch.size(); ++i)
      x_rows.row(static_cast<Eigen::Index>(i)) = g.features.row(batch[i]);

    ad::Tape t;
    GTVars vars = bind_gt(t, m, /*trainable=*/true);
    ad::Var dec_w = t.param(res.decoder_w);
    ad::Var dec_b = t.param(res.decoder_b);
    ad::Var bil = t.param(res.bilinear);

    Matrix pe_rows(static_cast<Eigen::Index>(batch.size()), pe.cols());
    for (size_t i = 0; i < batch.size(); ++i)
      pe_rows.row(static_cast<Eigen::Index>(i)) = pe.row(batch[i]);
    ad::Var e0v = gt_embed(t, vars, t.constant(x_rows), t.constant(pe_rows));
    GTForwardOut fwd = gt_forward(t, m.cfg, vars, e0v, std::nullopt);

    ad::Var l_attr =
        attribute_reconstruction_loss(t, fwd.nodes, dec_w, dec_b, x_rows);
    ad::Var loss = l_attr;
    double struct_val = 0.0;
    if (has_structure) {
      ad::Var l_struct = structure_recovery_loss(t, fwd.nodes, bil, pairs.us,
                                                 pairs.vs, pairs.labels);
      struct_val = t.val(l_struct)(0, 0);
      loss = t.add(l_attr, l_struct);
    }

    const double loss_val = t.val(loss)(0, 0);
    if (!std::isfinite(loss_val))
      throw numerical_error("pretraining diverged at step " +
                            std::to_string(step));
    res.loss_history.push_back(loss_val);
    res.attr_history.push_back(t.val(l_attr)(0, 0));
    res.struct_history.push_back(struct_val);

    t.backward(loss);

    std::vector<Matrix*> params;
    std::vector<const Matrix*> grads;
    for (auto& [name, var] : vars.named) {
      params.push_back(&m.params.at(name));
      grads.push_back(&t.grad(var));
    }
    params.push_back(&res.decoder_w);
    grads.push_back(&t.grad(dec_w));
    params.push_back(&res.decoder_b);
    grads.push_back(&t.grad(dec_b));
    params.push_back(&res.bilinear);
    grads.push_back(&t.grad(bil));
    opt.step(params, grads);
  }
  return res;
}

}  // namespace vnt
