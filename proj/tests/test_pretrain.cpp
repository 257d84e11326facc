#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "testutil.hpp"
#include "vnt/pretrain.hpp"

using namespace vnt;

namespace {

// Two 10-cliques joined by one bridge edge; features carry the block id.
Graph block_graph() {
  const int n = 20;
  Matrix f = 0.05 * testutil::random_matrix(n, 6, 77);
  std::vector<int> labels(n, 0);
  std::vector<std::pair<int, int>> edges;
  for (int b = 0; b < 2; ++b)
    for (int i = 0; i < 10; ++i) {
      f(b * 10 + i, b) += 1.0;
      labels[static_cast<size_t>(b * 10 + i)] = b;
      for (int j = i + 1; j < 10; ++j)
        edges.emplace_back(b * 10 + i, b * 10 + j);
    }
  edges.emplace_back(0, 10);
  return make_graph(f, labels, edges);
}

GTConfig small_cfg(int fin) {
  GTConfig c;
  c.input_dim = fin;
  c.embed_dim = 8;
  c.depth = 1;
  c.heads = 2;
  c.pe_dim = 2;
  c.seed = 5;
  return c;
}

// Mann-Whitney AUC with midranks.
double auc(const std::vector<double>& pos, const std::vector<double>& neg) {
  std::vector<std::pair<double, int>> all;
  for (double s : pos) all.emplace_back(s, 1);
  for (double s : neg) all.emplace_back(s, 0);
  std::sort(all.begin(), all.end());
  double rank_sum = 0.0;
  size_t i = 0;
  while (i < all.size()) {
    size_t j = i;
    while (j < all.size() && all[j].first == all[i].first) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // 1-based
    for (size_t k = i; k < j; ++k)
      if (all[k].second == 1) rank_sum += midrank;
    i = j;
  }
  const double np = static_cast<double>(pos.size());
  const double nn = static_cast<double>(neg.size());
  return (rank_sum - np * (np + 1) / 2.0) / (np * nn);
}

}  // namespace

TEST_CASE("reconstruction loss: pinned value and oracle") {
  ad::Tape t;
  // identity decoder reproduces the embedding; target zero gives mean square
  ad::Var emb = t.constant(Matrix::Identity(2, 2));
  ad::Var w = t.constant(Matrix::Identity(2, 2));
  ad::Var b = t.constant(Matrix::Zero(1, 2));
  ad::Var l = attribute_reconstruction_loss(t, emb, w, b, Matrix::Zero(2, 2));
  CHECK(t.val(l)(0, 0) == doctest::Approx(0.5));  // (1+0+0+1)/4

  Matrix e = testutil::random_matrix(3, 4, 1);
  Matrix wm = testutil::random_matrix(4, 5, 2);
  Matrix bm = testutil::random_matrix(1, 5, 3);
  Matrix x = testutil::random_matrix(3, 5, 4);
  ad::Var l2 = attribute_reconstruction_loss(
      t, t.constant(e), t.constant(wm), t.constant(bm), x);
  Matrix err = ((e * wm).rowwise() + bm.row(0)) - x;
  CHECK(t.val(l2)(0, 0) ==
        doctest::Approx(err.squaredNorm() / 15.0).epsilon(1e-12));

  CHECK_THROWS_AS(attribute_reconstruction_loss(t, t.constant(e),
                                                t.constant(wm), t.constant(bm),
                                                Matrix::Zero(3, 4)),
                  config_error);
}

TEST_CASE("edge-recovery loss: pinned value at the sigmoid midpoint") {
  ad::Tape t;
  ad::Var emb = t.constant(Matrix::Identity(2, 2));
  ad::Var bil = t.constant(Matrix::Zero(2, 2));
  // both pairs score sigmoid(0)=0.5; labels 1 and 0 each miss by 0.5
  ad::Var l = structure_recovery_loss(t, emb, bil, {0, 0}, {1, 1}, {1.0, 0.0});
  CHECK(t.val(l)(0, 0) == doctest::Approx(0.25));

  // strongly positive score drives the label-1 error toward zero
  ad::Var hot = t.constant(50.0 * Matrix::Identity(2, 2));
  ad::Var l1 = structure_recovery_loss(t, emb, hot, {0}, {0}, {1.0});
  CHECK(t.val(l1)(0, 0) < 1e-8);

  CHECK_THROWS_AS(structure_recovery_loss(t, emb, bil, {0}, {1, 0}, {1.0}),
                  config_error);
  CHECK_THROWS_AS(structure_recovery_loss(t, emb, bil, {}, {}, {}),
                  config_error);
}

TEST_CASE("losses: gradients match finite differences") {
  Matrix e0 = testutil::random_matrix(4, 3, 10);
  Matrix w0 = testutil::random_matrix(3, 2, 11);
  Matrix b0 = testutil::random_matrix(1, 2, 12);
  Matrix x = testutil::random_matrix(4, 2, 13);
  Matrix bil0 = 0.5 * testutil::random_matrix(3, 3, 14);
  const std::vector<int> us{0, 1, 2}, vs{1, 2, 3};
  const std::vector<double> ys{1.0, 0.0, 1.0};

  SUBCASE("reconstruction wrt embedding and decoder") {
    ad::Tape t;
    ad::Var e = t.param(e0), w = t.param(w0), b = t.param(b0);
    t.backward(attribute_reconstruction_loss(t, e, w, b, x));
    const std::vector<std::pair<ad::Var, const Matrix*>> cases{
        {e, &e0}, {w, &w0}, {b, &b0}};
    for (auto [var, base] : cases) {
      Matrix fd = testutil::fd_grad(
          [&](const Matrix& p) {
            Matrix ev = (base == &e0) ? p : e0;
            Matrix wv = (base == &w0) ? p : w0;
            Matrix bv = (base == &b0) ? p : b0;
            ad::Tape s;
            ad::Var l = attribute_reconstruction_loss(
                s, s.constant(ev), s.constant(wv), s.constant(bv), x);
            return s.val(l)(0, 0);
          },
          *base);
      double worst = 0.0;
      CHECK(testutil::grad_agreement(t.grad(var), fd, 1e-6, &worst) == 1.0);
    }
  }

  SUBCASE("edge recovery wrt embedding and bilinear form") {
    ad::Tape t;
    ad::Var e = t.param(e0), bl = t.param(bil0);
    t.backward(structure_recovery_loss(t, e, bl, us, vs, ys));
    const std::vector<std::pair<ad::Var, const Matrix*>> cases{{e, &e0},
                                                               {bl, &bil0}};
    for (auto [var, base] : cases) {
      Matrix fd = testutil::fd_grad(
          [&](const Matrix& p) {
            Matrix ev = (base == &e0) ? p : e0;
            Matrix bv = (base == &bil0) ? p : bil0;
            ad::Tape s;
            ad::Var l = structure_recovery_loss(s, s.constant(ev),
                                                s.constant(bv), us, vs, ys);
            return s.val(l)(0, 0);
          },
          *base);
      double worst = 0.0;
      CHECK(testutil::grad_agreement(t.grad(var), fd, 1e-6, &worst) == 1.0);
    }
  }
}

TEST_CASE("pair sampler: positives exact, negatives clean and capped") {
  Graph g = testutil::two_clique_graph();
  std::vector<int> batch(8);
  std::iota(batch.begin(), batch.end(), 0);

  Rng rng(3);
  StructurePairs p = sample_structure_pairs(g, batch, 1.0, rng);
  CHECK(p.num_positive == 13);  // 6 + 6 clique edges + 1 bridge
  CHECK(p.labels.size() == 26);
  std::set<std::pair<int, int>> seen;
  for (size_t i = 0; i < p.us.size(); ++i) {
    const int u = p.us[i], v = p.vs[i];
    REQUIRE(u >= 0);
    REQUIRE(v < 8);
    REQUIRE(u < v);
    const bool edge = g.has_edge(batch[static_cast<size_t>(u)],
                                 batch[static_cast<size_t>(v)]);
    CHECK(edge == (p.labels[i] == 1.0));
    if (p.labels[i] == 0.0) CHECK(seen.emplace(u, v).second);  // no repeats
  }

  // only 15 non-edges exist among 8 nodes; a 2x request saturates
  Rng rng2(3);
  StructurePairs big = sample_structure_pairs(g, batch, 2.0, rng2);
  CHECK(big.labels.size() == 13 + 15);

  Rng rng3(3);
  StructurePairs none = sample_structure_pairs(g, batch, 0.0, rng3);
  CHECK(none.labels.size() == 13);

  // determinism
  Rng a(9), b(9);
  StructurePairs pa = sample_structure_pairs(g, batch, 1.0, a);
  StructurePairs pb = sample_structure_pairs(g, batch, 1.0, b);
  CHECK(pa.us == pb.us);
  CHECK(pa.vs == pb.vs);
}

TEST_CASE("pretraining: loss falls, state advances deterministically") {
  Graph g = block_graph();
  GTModel m = make_gt(small_cfg(6));
  const std::string before = param_digest(m);

  PretrainConfig pc;
  pc.epochs = 40;
  pc.batches_per_epoch = 2;
  pc.max_batch = 14;
  pc.seed = 1;
  PretrainResult r = pretrain(m, g, pc);

  REQUIRE(r.loss_history.size() == 80);
  REQUIRE(r.attr_history.size() == 80);
  REQUIRE(r.struct_history.size() == 80);
  const double head = std::accumulate(r.loss_history.begin(),
                                      r.loss_history.begin() + 10, 0.0) / 10.0;
  const double tail = std::accumulate(r.loss_history.end() - 10,
                                      r.loss_history.end(), 0.0) / 10.0;
  CHECK(tail < head);
  CHECK(param_digest(m) != before);
  CHECK(r.decoder_w.rows() == 8);
  CHECK(r.decoder_w.cols() == 6);
  CHECK(r.bilinear.rows() == 8);
  CHECK(r.steps_without_structure == 0);  // cliques always supply edges

  // same seed reproduces the trajectory exactly
  GTModel m2 = make_gt(small_cfg(6));
  PretrainResult r2 = pretrain(m2, g, pc);
  CHECK(r2.loss_history == r.loss_history);
  CHECK(param_digest(m2) == param_digest(m));

  // a different seed takes a different path
  GTModel m3 = make_gt(small_cfg(6));
  PretrainConfig pc3 = pc;
  pc3.seed = 2;
  PretrainResult r3 = pretrain(m3, g, pc3);
  CHECK(r3.loss_history != r.loss_history);
}

TEST_CASE("pretraining: edge scores separate edges from non-edges") {
  Graph g = block_graph();
  GTModel m = make_gt(small_cfg(6));
  PretrainConfig pc;
  pc.epochs = 80;
  pc.batches_per_epoch = 2;
  pc.max_batch = 14;
  pc.seed = 4;
  PretrainResult r = pretrain(m, g, pc);

  std::vector<int> all(static_cast<size_t>(g.num_nodes()));
  std::iota(all.begin(), all.end(), 0);
  Matrix pe = positional_encoding(g, m.cfg.pe_dim);
  auto [emb, unused] = gt_forward_plain(m, gt_embed_plain(m, g, pe, all),
                                        nullptr);
  std::vector<double> pos, neg;
  for (int u = 0; u < g.num_nodes(); ++u)
    for (int v = u + 1; v < g.num_nodes(); ++v) {
      const double s = structure_scores(emb, r.bilinear, {u}, {v})(0);
      (g.has_edge(u, v) ? pos : neg).push_back(s);
    }
  CHECK(pos.size() == 91);
  CHECK(neg.size() == 99);
  CHECK(auc(pos, neg) > 0.75);
}

TEST_CASE("pretraining: contract and divergence failures are loud") {
  Graph g = block_graph();
  GTModel m = make_gt(small_cfg(6));
  m.frozen = true;
  PretrainConfig pc;
  CHECK_THROWS_AS(pretrain(m, g, pc), contract_error);

  GTModel m2 = make_gt(small_cfg(6));
  PretrainConfig wild;
  wild.epochs = 3;
  wild.batches_per_epoch = 2;
  wild.max_batch = 10;
  // layer norm keeps re-normalizing the stream, so a merely huge step stays
  // finite in double precision; this one overflows the attention scores
  wild.lr = 1e200;
  CHECK_THROWS_AS(pretrain(m2, g, wild), numerical_error);

  GTModel m3 = make_gt(small_cfg(4));  // wrong feature width
  PretrainConfig ok;
  CHECK_THROWS_AS(pretrain(m3, g, ok), config_error);
}
