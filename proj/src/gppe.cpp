#include "vnt/gppe.hpp"

#include <cmath>
#include <numeric>
#include <set>

#include "vnt/digest.hpp"
#include "vnt/optim.hpp"
#include "vnt/rng.hpp"
#include "vnt/tensor_io.hpp"

namespace vnt {

namespace {

void check_dict(const PromptDictionary& dict) {
  require(dict.tasks.size() == dict.prompts.size(),
          "dictionary tasks and prompts must align");
  require(!dict.tasks.empty(), "dictionary is empty");
  const int n = dict.tasks.front().n_way();
  for (const auto& t : dict.tasks)
    require(t.n_way() == n, "dictionary tasks must share the task shape");
  for (const auto& p : dict.prompts) {
    if (p.rows() != dict.prompts.front().rows() ||
        p.cols() != dict.prompts.front().cols())
      throw shape_error("dictionary prompts must share one shape");
  }
}

void check_trained(const GppeModel& gm, const PromptDictionary& dict) {
  if (!gm.trained)
    throw contract_error("evolution heads are untrained; train them first");
  if (gm.dict_digest != dict.digest)
    throw contract_error(
        "evolution heads were trained against a different dictionary");
}

// Tape-side relation MLP over a 1 x F row.
ad::Var theta_forward(ad::Tape& t, ad::Var x, ad::Var w1, ad::Var b1,
                      ad::Var w2, ad::Var b2) {
  return t.linear(t.gelu(t.linear(x, w1, b1)), w2, b2);
}

}  // namespace

std::string dictionary_digest(const PromptDictionary& dict) {
  Fnv1a h;
  h.update_u64(dict.tasks.size());
  for (size_t i = 0; i < dict.tasks.size(); ++i) {
    h.update(dict.tasks[i].task_id);
    h.update(dict.prompts[i]);
  }
  return h.hex();
}

PromptDictionary build_dictionary(const GTModel& m, const Graph& g,
                                  const Matrix& pe,
                                  const std::vector<FewShotTask>& source_tasks,
                                  const TuneConfig& tune_cfg) {
  require(!source_tasks.empty(), "need at least one source task");
  TuneConfig cfg = tune_cfg;
  cfg.transductive = false;  // source queries are reserved for training
  PromptDictionary dict;
  dict.tasks = source_tasks;
  for (const auto& task : source_tasks) {
    TuneOutput out = tune_prompt(m, g, pe, task, cfg);
    dict.prompts.push_back(std::move(out.prompt));
  }
  check_dict(dict);
  dict.digest = dictionary_digest(dict);
  return dict;
}

GppeModel init_gppe(int embed_dim, int n_way, uint64_t seed) {
  require(embed_dim >= 1 && n_way >= 2, "invalid evolution head dimensions");
  GppeModel gm;
  Rng rng(mix_seed(seed, 0x677070655f696e69ULL));
  const double bound = 1.0 / std::sqrt(static_cast<double>(embed_dim));
  auto fill = [&](Matrix& dst, int r, int c) {
    dst.resize(r, c);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) dst(i, j) = rng.uniform(-bound, bound);
  };
  fill(gm.theta_w1, embed_dim, embed_dim);
  gm.theta_b1 = Matrix::Zero(1, embed_dim);
  fill(gm.theta_w2, embed_dim, embed_dim);
  gm.theta_b2 = Matrix::Zero(1, embed_dim);
  gm.l_map = Matrix::Zero(embed_dim, embed_dim);  // refinement starts inert
  gm.psi_w = Matrix::Zero(embed_dim, n_way);
  gm.psi_b = Matrix::Zero(1, n_way);
  return gm;
}

RowVector relation_embedding(const GppeModel& gm, const Matrix& prompt) {
  require(prompt.rows() >= 1, "prompt has no rows");
  RowVector mean = prompt.colwise().mean();
  RowVector h =
      ad::gelu_plain((mean * gm.theta_w1).rowwise() + gm.theta_b1.row(0));
  return (h * gm.theta_w2).rowwise() + gm.theta_b2.row(0);
}

Vector relation_coefficients_with(
    const std::function<RowVector(const RowVector&)>& projector,
    const Matrix& prompt, const std::vector<Matrix>& dict_prompts) {
  require(!dict_prompts.empty(), "dictionary is empty");
  RowVector a = projector(prompt.colwise().mean());
  Vector out(static_cast<Eigen::Index>(dict_prompts.size()));
  const double na = a.norm();
  for (size_t k = 0; k < dict_prompts.size(); ++k) {
    RowVector b = projector(dict_prompts[k].colwise().mean());
    const double nb = b.norm();
    out(static_cast<Eigen::Index>(k)) =
        (na <= 0.0 || nb <= 0.0) ? 0.0 : a.dot(b) / (na * nb);
  }
  return out;
}

Vector relation_coefficients(const GppeModel& gm, const Matrix& prompt,
                             const std::vector<Matrix>& dict_prompts) {
  require(!dict_prompts.empty(), "dictionary is empty");
  RowVector a = relation_embedding(gm, prompt);
  Vector out(static_cast<Eigen::Index>(dict_prompts.size()));
  const double na = a.norm();
  for (size_t k = 0; k < dict_prompts.size(); ++k) {
    RowVector b = relation_embedding(gm, dict_prompts[k]);
    const double nb = b.norm();
    out(static_cast<Eigen::Index>(k)) =
        (na <= 0.0 || nb <= 0.0) ? 0.0 : a.dot(b) / (na * nb);
  }
  return out;
}

Vector attention_weights(const Vector& relations) {
  require(relations.size() >= 1, "need at least one relation coefficient");
  const double m = relations.maxCoeff();
  Vector e = (relations.array() - m).exp();
  return e / e.sum();
}

Matrix refine_prompt(const Matrix& prompt,
                     const std::vector<Matrix>& dict_prompts, const Vector& a,
                     const Matrix& l_map) {
  require(static_cast<size_t>(a.size()) == dict_prompts.size(),
          "one weight per dictionary entry");
  require(l_map.rows() == prompt.cols() && l_map.cols() == prompt.cols(),
          "evolution map must be square in the embedding width");
  Matrix out = prompt;
  for (size_t k = 0; k < dict_prompts.size(); ++k) {
    const Matrix& e = dict_prompts[k];
    if (e.rows() != prompt.rows() || e.cols() != prompt.cols())
      throw shape_error("dictionary entry shape differs from the prompt");
    out += a(static_cast<Eigen::Index>(k)) * (e * l_map.transpose());
  }
  return out;
}

EpisodeVars build_episode(ad::Tape& t, const GppeModel& gm, const GTModel& m,
                          const Graph& g, const Matrix& pe,
                          const PromptDictionary& dict, size_t target) {
  require(target < dict.prompts.size(), "episode target out of range");
  const FewShotTask& task = dict.tasks[target];
  const Matrix& base = dict.prompts[target];

  GTVars vars = bind_gt(t, m, /*trainable=*/false);
  EpisodeVars e;
  e.theta_w1 = t.param(gm.theta_w1);
  e.theta_b1 = t.param(gm.theta_b1);
  e.theta_w2 = t.param(gm.theta_w2);
  e.theta_b2 = t.param(gm.theta_b2);
  e.l_map = t.param(gm.l_map);
  e.psi_w = t.param(gm.psi_w);
  e.psi_b = t.param(gm.psi_b);

  ad::Var p_const = t.constant(base);
  ad::Var proj_t = theta_forward(t, t.mean_rows(p_const), e.theta_w1,
                                 e.theta_b1, e.theta_w2, e.theta_b2);

  std::vector<ad::Var> rels;
  std::vector<size_t> others;
  for (size_t k = 0; k < dict.prompts.size(); ++k) {
    if (k == target) continue;
    others.push_back(k);
    ad::Var proj_k =
        theta_forward(t, t.mean_rows(t.constant(dict.prompts[k])), e.theta_w1,
                      e.theta_b1, e.theta_w2, e.theta_b2);
    rels.push_back(t.cosine_rows(proj_t, proj_k));
  }
  ad::Var a = t.softmax_rows(t.stack_row(rels));

  ad::Var refined = p_const;
  for (size_t idx = 0; idx < others.size(); ++idx) {
    ad::Var term = t.matmul_nt(t.constant(dict.prompts[others[idx]]), e.l_map);
    refined = t.add(
        refined, t.scale_by(t.slice_cols(a, static_cast<int>(idx), 1), term));
  }

  std::vector<int> ctx = task.support_nodes();
  std::vector<int> qn = task.query_nodes();
  ctx.insert(ctx.end(), qn.begin(), qn.end());
  Matrix e0 = gt_embed_plain(m, g, pe, ctx);
  GTForwardOut fwd = gt_forward(t, m.cfg, vars, t.constant(e0), refined);
  ad::Var emb_q =
      t.slice_rows(fwd.nodes, static_cast<int>(task.support.size()),
                   static_cast<int>(task.query.size()));
  ad::Var logits = t.linear(emb_q, e.psi_w, e.psi_b);
  e.loss = t.softmax_xent_mean(logits, task.query_labels());
  return e;
}

GppeTrainResult train_gppe(GppeModel& gm, const GTModel& m, const Graph& g,
                           const Matrix& pe, const PromptDictionary& dict,
                           const GppeConfig& cfg) {
  check_dict(dict);
  const int mm = static_cast<int>(dict.tasks.size());
  require(mm >= 2, "leave-one-out episodes need at least two entries");
  require(cfg.episodes >= 1, "episode budget must be positive");
  if (!m.frozen) throw contract_error("evolution training needs a frozen encoder");
  const int n = dict.tasks.front().n_way();
  require(gm.psi_w.cols() == n,
          "episode classifier width does not match the task shape");
  require(gm.theta_w1.rows() == m.cfg.embed_dim,
          "relation head width does not match the encoder");

  GppeTrainResult res;
  Adam opt(cfg.lr);
  Rng rng(cfg.seed);
  std::vector<size_t> order(static_cast<size_t>(mm));
  std::iota(order.begin(), order.end(), 0);

  for (int ep = 0; ep < cfg.episodes; ++ep) {
    if (ep % mm == 0) rng.shuffle(order);
    const size_t target = order[static_cast<size_t>(ep % mm)];

    ad::Tape t;
    EpisodeVars e = build_episode(t, gm, m, g, pe, dict, target);

    const double lv = t.val(e.loss)(0, 0);
    if (!std::isfinite(lv))
      throw numerical_error("evolution training diverged at episode " +
                            std::to_string(ep));
    res.loss_history.push_back(lv);
    t.backward(e.loss);

    opt.step({&gm.theta_w1, &gm.theta_b1, &gm.theta_w2, &gm.theta_b2,
              &gm.l_map, &gm.psi_w, &gm.psi_b},
             {&t.grad(e.theta_w1), &t.grad(e.theta_b1), &t.grad(e.theta_w2),
              &t.grad(e.theta_b2), &t.grad(e.l_map), &t.grad(e.psi_w),
              &t.grad(e.psi_b)});
  }
  gm.trained = true;
  gm.dict_digest = dict.digest;
  return res;
}

DeployOutput deploy_gppe(const GppeModel& gm, const GTModel& m, const Graph& g,
                         const Matrix& pe, const PromptDictionary& dict,
                         const FewShotTask& task, const TuneConfig& tune_cfg) {
  check_dict(dict);
  check_trained(gm, dict);
  TuneConfig cfg = tune_cfg;
  cfg.transductive = true;

  DeployOutput out;
  TuneOutput tuned = tune_prompt(m, g, pe, task, cfg);
  out.base_prompt = tuned.prompt;

  Vector rel = relation_coefficients(gm, tuned.prompt, dict.prompts);
  out.weights = attention_weights(rel);
  out.refined_prompt =
      refine_prompt(tuned.prompt, dict.prompts, out.weights, gm.l_map);

  std::vector<int> ctx = task.support_nodes();
  std::vector<int> qn = task.query_nodes();
  ctx.insert(ctx.end(), qn.begin(), qn.end());
  auto [emb, ignored] = embed_nodes(m, g, pe, ctx, &out.refined_prompt);
  const int s = static_cast<int>(task.support.size());
  const int q = static_cast<int>(task.query.size());

  ClassifierFit fit =
      fit_classifier(emb.topRows(s), task.support_labels(), task.n_way(),
                     cfg.steps, cfg.lr_classifier, cfg.weight_decay);
  Matrix logits = (emb.middleRows(s, q) * fit.w).rowwise() + fit.b.row(0);
  out.prediction.probs = ad::softmax_rows_plain(logits);
  out.prediction.labels = classify(emb.middleRows(s, q), fit.w, fit.b);
  return out;
}

void save_gppe(const GppeModel& gm, const std::string& path) {
  TensorArchive a;
  a.meta = {{"kind", "gppe_checkpoint"},
            {"trained", gm.trained},
            {"dict_digest", gm.dict_digest}};
  a.add("theta_w1", gm.theta_w1);
  a.add("theta_b1", gm.theta_b1);
  a.add("theta_w2", gm.theta_w2);
  a.add("theta_b2", gm.theta_b2);
  a.add("l_map", gm.l_map);
  a.add("psi_w", gm.psi_w);
  a.add("psi_b", gm.psi_b);
  save_archive(a, path);
}

GppeModel load_gppe(const std::string& path) {
  TensorArchive a = load_archive(path);
  if (a.meta.value("kind", "") != "gppe_checkpoint")
    throw integrity_error("not an evolution-head checkpoint: " + path);
  GppeModel gm;
  gm.theta_w1 = a.at("theta_w1");
  gm.theta_b1 = a.at("theta_b1");
  gm.theta_w2 = a.at("theta_w2");
  gm.theta_b2 = a.at("theta_b2");
  gm.l_map = a.at("l_map");
  gm.psi_w = a.at("psi_w");
  gm.psi_b = a.at("psi_b");
  gm.trained = a.meta.value("trained", false);
  gm.dict_digest = a.meta.value("dict_digest", "");
  return gm;
}

void save_dictionary(const PromptDictionary& dict, const std::string& path) {
  check_dict(dict);
  TensorArchive a;
  nlohmann::json tasks = nlohmann::json::array();
  for (const auto& t : dict.tasks) {
    nlohmann::json jt;
    jt["task_id"] = t.task_id;
    jt["classes"] = t.classes;
    nlohmann::json sup = nlohmann::json::array();
    for (const auto& [node, cls] : t.support) sup.push_back({node, cls});
    nlohmann::json qry = nlohmann::json::array();
    for (const auto& [node, cls] : t.query) qry.push_back({node, cls});
    jt["support"] = sup;
    jt["query"] = qry;
    tasks.push_back(jt);
  }
  a.meta = {{"kind", "prompt_dictionary"},
            {"digest", dict.digest},
            {"tasks", tasks}};
  for (size_t i = 0; i < dict.prompts.size(); ++i)
    a.add("prompt" + std::to_string(i), dict.prompts[i]);
  save_archive(a, path);
}

PromptDictionary load_dictionary(const std::string& path) {
  TensorArchive a = load_archive(path);
  if (a.meta.value("kind", "") != "prompt_dictionary")
    throw integrity_error("not a prompt dictionary: " + path);
  PromptDictionary dict;
  for (const auto& jt : a.meta.at("tasks")) {
    FewShotTask t;
    t.task_id = jt.at("task_id").get<std::string>();
    t.classes = jt.at("classes").get<std::vector<int>>();
    for (const auto& pr : jt.at("support"))
      t.support.emplace_back(pr.at(0).get<int>(), pr.at(1).get<int>());
    for (const auto& pr : jt.at("query"))
      t.query.emplace_back(pr.at(0).get<int>(), pr.at(1).get<int>());
    dict.tasks.push_back(std::move(t));
  }
  for (size_t i = 0; i < dict.tasks.size(); ++i)
    dict.prompts.push_back(a.at("prompt" + std::to_string(i)));
  dict.digest = a.meta.value("digest", "");
  check_dict(dict);
  if (dict.digest != dictionary_digest(dict))
    throw integrity_error("dictionary content does not match its digest");
  return dict;
}

}  // namespace vnt
