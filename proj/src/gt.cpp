#include "vnt/gt.hpp"

#include <algorithm>
#include <cmath>

#include "vnt/digest.hpp"
#include "vnt/rng.hpp"
#include "vnt/tensor_io.hpp"

namespace vnt {

Matrix& ParamStore::add(const std::string& name, Matrix m) {
  if (tensors.count(name))
    throw config_error("duplicate parameter name: " + name);
  order.push_back(name);
  return tensors[name] = std::move(m);
}

Matrix& ParamStore::at(const std::string& name) {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw config_error("no parameter named " + name);
  return it->second;
}

const Matrix& ParamStore::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw config_error("no parameter named " + name);
  return it->second;
}

std::string ParamStore::digest() const {
  std::vector<std::pair<std::string, const Matrix*>> named;
  named.reserve(tensors.size());
  for (const auto& [n, m] : tensors) named.emplace_back(n, &m);
  return digest_named_matrices(std::move(named));
}

namespace {

// Uniform(-s, s) with s = 1/sqrt(fan_in), drawn in storage order so the
// result depends only on the seed and the creation sequence.
void init_fanin(Matrix& m, Eigen::Index fan_in, Rng& rng) {
  const double s = 1.0 / std::sqrt(static_cast<double>(std::max<Eigen::Index>(1, fan_in)));
  for (Eigen::Index i = 0; i < m.size(); ++i)
    m.data()[i] = rng.uniform(-s, s);
}

std::string lname(int layer, const char* suffix) {
  return "layer" + std::to_string(layer) + "." + suffix;
}

}  // namespace

GTModel make_gt(const GTConfig& cfg) {
  require(cfg.input_dim >= 1, "input_dim must be positive");
  require(cfg.embed_dim >= 1, "embed_dim must be positive");
  require(cfg.depth >= 1, "depth must be positive");
  require(cfg.heads >= 1, "heads must be positive");
  require(cfg.embed_dim % cfg.heads == 0, "heads must divide embed_dim");
  require(cfg.pe_dim >= 0, "pe_dim must be non-negative");

  GTModel m;
  m.cfg = cfg;
  Rng rng(cfg.seed);
  const int F = cfg.embed_dim;

  auto weight = [&](const std::string& name, Eigen::Index rows,
                    Eigen::Index cols) {
    Matrix w(rows, cols);
    init_fanin(w, rows, rng);
    m.params.add(name, std::move(w));
  };
  auto zeros = [&](const std::string& name, Eigen::Index cols) {
    m.params.add(name, Matrix::Zero(1, cols));
  };
  auto ones = [&](const std::string& name, Eigen::Index cols) {
    m.params.add(name, Matrix::Ones(1, cols));
  };

  weight("attr_proj.w", cfg.input_dim, F);
  zeros("attr_proj.b", F);
  weight("pos_proj.w", cfg.pe_dim, F);
  zeros("pos_proj.b", F);
  for (int d = 0; d < cfg.depth; ++d) {
    ones(lname(d, "ln1.g"), F);
    zeros(lname(d, "ln1.b"), F);
    weight(lname(d, "wq"), F, F);
    zeros(lname(d, "bq"), F);
    weight(lname(d, "wk"), F, F);
    zeros(lname(d, "bk"), F);
    weight(lname(d, "wv"), F, F);
    zeros(lname(d, "bv"), F);
    weight(lname(d, "wo"), F, F);
    zeros(lname(d, "bo"), F);
    ones(lname(d, "ln2.g"), F);
    zeros(lname(d, "ln2.b"), F);
    weight(lname(d, "ffn.w1"), F, 4 * F);
    zeros(lname(d, "ffn.b1"), 4 * F);
    weight(lname(d, "ffn.w2"), 4 * F, F);
    zeros(lname(d, "ffn.b2"), F);
  }
  return m;
}

std::string param_digest(const GTModel& m) { return m.params.digest(); }

Matrix positional_encoding(const Graph& g, int k) {
  require(k >= 0, "pe dimension must be non-negative");
  const int n = g.num_nodes();
  Matrix pe = Matrix::Zero(n, k);
  if (k == 0 || n == 0) return pe;

  // Symmetric normalized Laplacian; rows/cols of isolated nodes stay zero.
  Vector deg = Vector::Zero(n);
  for (const auto& [u, v] : g.edges) {
    deg(u) += 1.0;
    if (u != v) deg(v) += 1.0;
  }
  Vector dinv = deg.unaryExpr(
      [](double d) { return d > 0.0 ? 1.0 / std::sqrt(d) : 0.0; });
  Matrix lap = Matrix::Zero(n, n);
  for (int u = 0; u < n; ++u)
    if (deg(u) > 0.0) lap(u, u) = 1.0;
  for (const auto& [u, v] : g.edges) {
    if (u == v) continue;
    const double w = dinv(u) * dinv(v);
    lap(u, v) -= w;
    lap(v, u) -= w;
  }

  Eigen::SelfAdjointEigenSolver<Matrix> solver(lap);
  if (solver.info() != Eigen::Success)
    throw numerical_error("positional encoding eigensolver failed");
  const Vector& evals = solver.eigenvalues();  // ascending
  const Matrix& evecs = solver.eigenvectors();

  int col = 0;
  for (int i = 0; i < n && col < k; ++i) {
    if (evals(i) <= 1e-8) continue;  // skip zero modes
    Vector vec = evecs.col(i);
    for (int r = 0; r < n; ++r) {
      if (std::abs(vec(r)) > 1e-8) {
        if (vec(r) < 0.0) vec = -vec;
        break;
      }
    }
    pe.col(col++) = vec;
  }
  return pe;  // remaining columns stay zero-padded
}

ad::Var GTVars::at(const std::string& name) const {
  for (const auto& [n, v] : named)
    if (n == name) return v;
  throw config_error("no bound parameter named " + name);
}

GTVars bind_gt(ad::Tape& t, const GTModel& m, bool trainable) {
  GTVars vars;
  vars.named.reserve(m.params.order.size());
  for (const std::string& name : m.params.order) {
    const Matrix& val = m.params.at(name);
    vars.named.emplace_back(name,
                            trainable ? t.param(val) : t.constant(val));
  }
  return vars;
}

ad::Var gt_embed(ad::Tape& t, const GTVars& vars, ad::Var x_rows,
                 ad::Var pe_rows) {
  ad::Var a = t.linear(x_rows, vars.at("attr_proj.w"), vars.at("attr_proj.b"));
  ad::Var p = t.linear(pe_rows, vars.at("pos_proj.w"), vars.at("pos_proj.b"));
  return t.add(a, p);
}

namespace {

ad::Var transformer_layer(ad::Tape& t, const GTConfig& cfg, const GTVars& vars,
                          int layer, ad::Var x) {
  const int F = cfg.embed_dim;
  const int H = cfg.heads;
  const int dh = F / H;
  auto P = [&](const char* s) { return vars.at(lname(layer, s)); };

  ad::Var h = t.layer_norm_rows(x, P("ln1.g"), P("ln1.b"));
  ad::Var q = t.linear(h, P("wq"), P("bq"));
  ad::Var k = t.linear(h, P("wk"), P("bk"));
  ad::Var v = t.linear(h, P("wv"), P("bv"));
  ad::Var cat;
  for (int i = 0; i < H; ++i) {
    ad::Var qh = t.slice_cols(q, i * dh, dh);
    ad::Var kh = t.slice_cols(k, i * dh, dh);
    ad::Var vh = t.slice_cols(v, i * dh, dh);
    ad::Var s = t.scale(t.matmul_nt(qh, kh), 1.0 / std::sqrt(double(dh)));
    ad::Var a = t.softmax_rows(s);
    ad::Var oh = t.matmul(a, vh);
    cat = (i == 0) ? oh : t.concat_cols(cat, oh);
  }
  ad::Var attn = t.linear(cat, P("wo"), P("bo"));
  ad::Var x1 = t.add(x, attn);
  ad::Var h2 = t.layer_norm_rows(x1, P("ln2.g"), P("ln2.b"));
  ad::Var ff = t.linear(t.gelu(t.linear(h2, P("ffn.w1"), P("ffn.b1"))),
                        P("ffn.w2"), P("ffn.b2"));
  return t.add(x1, ff);
}

}  // namespace

GTForwardOut gt_forward(ad::Tape& t, const GTConfig& cfg, const GTVars& vars,
                        ad::Var e0_nodes, std::optional<ad::Var> prompt) {
  const int n_nodes = static_cast<int>(t.val(e0_nodes).rows());
  ad::Var x = prompt ? t.concat_rows(e0_nodes, *prompt) : e0_nodes;
  GTForwardOut out;
  for (int d = 0; d < cfg.depth; ++d) {
    x = transformer_layer(t, cfg, vars, d, x);
    if (!t.val(x).allFinite())
      throw numerical_error("non-finite activation in transformer layer " +
                            std::to_string(d));
    out.layer_rows.push_back(static_cast<int>(t.val(x).rows()));
  }
  if (prompt) {
    const int n_prompt = static_cast<int>(t.val(*prompt).rows());
    out.nodes = t.slice_rows(x, 0, n_nodes);
    out.prompt = t.slice_rows(x, n_nodes, n_prompt);
  } else {
    out.nodes = x;
    out.prompt = ad::Var{};
  }
  return out;
}

std::pair<Matrix, Matrix> gt_forward_plain(const GTModel& m,
                                           const Matrix& e0_nodes,
                                           const Matrix* prompt) {
  const GTConfig& cfg = m.cfg;
  const int F = cfg.embed_dim;
  const int H = cfg.heads;
  const int dh = F / H;
  const int n_nodes = static_cast<int>(e0_nodes.rows());
  const int n_prompt = prompt ? static_cast<int>(prompt->rows()) : 0;

  Matrix x(n_nodes + n_prompt, F);
  x.topRows(n_nodes) = e0_nodes;
  if (prompt) x.bottomRows(n_prompt) = *prompt;

  for (int d = 0; d < cfg.depth; ++d) {
    auto P = [&](const char* s) -> const Matrix& {
      return m.params.at(lname(d, s));
    };
    Matrix h = ad::layer_norm_rows_plain(x, P("ln1.g"), P("ln1.b"));
    Matrix q = h * P("wq");
    q.rowwise() += P("bq").row(0);
    Matrix k = h * P("wk");
    k.rowwise() += P("bk").row(0);
    Matrix v = h * P("wv");
    v.rowwise() += P("bv").row(0);
    Matrix cat(x.rows(), F);
    for (int i = 0; i < H; ++i) {
      // slices materialized so the expression sequence matches the tape ops
      Matrix qh = q.middleCols(i * dh, dh);
      Matrix kh = k.middleCols(i * dh, dh);
      Matrix vh = v.middleCols(i * dh, dh);
      Matrix s = qh * kh.transpose();
      s = s * (1.0 / std::sqrt(double(dh)));
      Matrix a = ad::softmax_rows_plain(s);
      Matrix oh = a * vh;
      cat.middleCols(i * dh, dh) = oh;
    }
    Matrix attn = cat * P("wo");
    attn.rowwise() += P("bo").row(0);
    Matrix x1 = x + attn;
    Matrix h2 = ad::layer_norm_rows_plain(x1, P("ln2.g"), P("ln2.b"));
    Matrix f1 = h2 * P("ffn.w1");
    f1.rowwise() += P("ffn.b1").row(0);
    Matrix ff = ad::gelu_plain(f1) * P("ffn.w2");
    ff.rowwise() += P("ffn.b2").row(0);
    x = x1 + ff;
    if (!x.allFinite())
      throw numerical_error("non-finite activation in transformer layer " +
                            std::to_string(d));
  }
  return {x.topRows(n_nodes), x.bottomRows(n_prompt)};
}

Matrix gt_embed_plain(const GTModel& m, const Graph& g, const Matrix& pe,
                      const std::vector<int>& node_ids) {
  if (pe.rows() != g.num_nodes() || pe.cols() != m.cfg.pe_dim)
    throw shape_error("positional encoding shape does not match graph/model");
  if (g.num_features() != m.cfg.input_dim)
    throw shape_error("graph feature width does not match model input_dim");
  const Eigen::Index n = static_cast<Eigen::Index>(node_ids.size());
  Matrix xr(n, g.num_features());
  Matrix pr(n, pe.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const int id = node_ids[static_cast<size_t>(i)];
    require(id >= 0 && id < g.num_nodes(), "node id out of range");
    xr.row(i) = g.features.row(id);
    pr.row(i) = pe.row(id);
  }
  Matrix e0 = xr * m.params.at("attr_proj.w");
  e0.rowwise() += m.params.at("attr_proj.b").row(0);
  Matrix pp = pr * m.params.at("pos_proj.w");
  pp.rowwise() += m.params.at("pos_proj.b").row(0);
  return e0 + pp;
}

void save_gt(const GTModel& m, const std::string& path,
             const nlohmann::json& extra_meta) {
  TensorArchive a;
  a.meta = extra_meta;
  a.meta["kind"] = "gt_checkpoint";
  a.meta["input_dim"] = m.cfg.input_dim;
  a.meta["embed_dim"] = m.cfg.embed_dim;
  a.meta["depth"] = m.cfg.depth;
  a.meta["heads"] = m.cfg.heads;
  a.meta["pe_dim"] = m.cfg.pe_dim;
  a.meta["seed"] = m.cfg.seed;
  a.meta["frozen"] = m.frozen;
  a.meta["param_digest"] = param_digest(m);
  for (const std::string& name : m.params.order)
    a.add(name, m.params.at(name));
  save_archive(a, path);
}

GTModel load_gt(const std::string& path, nlohmann::json* meta_out) {
  TensorArchive a = load_archive(path);
  if (a.meta.value("kind", "") != "gt_checkpoint")
    throw io_error(path + " is not an encoder checkpoint");
  GTConfig cfg;
  cfg.input_dim = a.meta.at("input_dim").get<int>();
  cfg.embed_dim = a.meta.at("embed_dim").get<int>();
  cfg.depth = a.meta.at("depth").get<int>();
  cfg.heads = a.meta.at("heads").get<int>();
  cfg.pe_dim = a.meta.at("pe_dim").get<int>();
  cfg.seed = a.meta.at("seed").get<uint64_t>();
  GTModel m = make_gt(cfg);
  for (auto& [name, tensor] : a.tensors) {
    Matrix& dst = m.params.at(name);
    if (dst.rows() != tensor.rows() || dst.cols() != tensor.cols())
      throw integrity_error("checkpoint tensor " + name + " has wrong shape");
    dst = tensor;
  }
  const std::string want = a.meta.at("param_digest").get<std::string>();
  if (param_digest(m) != want)
    throw integrity_error("checkpoint digest mismatch in " + path);
  m.frozen = a.meta.value("frozen", false);
  if (meta_out) *meta_out = a.meta;
  return m;
}

}  // namespace vnt
