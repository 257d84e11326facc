#include "vnt/eval.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>
#include <set>
#include <thread>
#include <utility>

#include "vnt/kmeans.hpp"
#include "vnt/optim.hpp"
#include "vnt/rng.hpp"

namespace vnt {

namespace {

std::vector<int> context_ids(const FewShotTask& task, bool transductive) {
  std::vector<int> ids = task.support_nodes();
  if (transductive) {
    const std::vector<int> q = task.query_nodes();
    ids.insert(ids.end(), q.begin(), q.end());
  }
  return ids;
}

// The probe classifies task nodes in the encoder's generic representation:
// one prompt-free forward pass over the whole graph, shared by every task,
// with only the logistic head fit per task.
double score_linear_probe(const Matrix& all_emb, const FewShotTask& task,
                          const EvalConfig& cfg) {
  const std::vector<int> s_ids = task.support_nodes();
  const std::vector<int> q_ids = task.query_nodes();
  Matrix s_emb(static_cast<Eigen::Index>(s_ids.size()), all_emb.cols());
  for (size_t i = 0; i < s_ids.size(); ++i)
    s_emb.row(static_cast<Eigen::Index>(i)) = all_emb.row(s_ids[i]);
  Matrix q_emb(static_cast<Eigen::Index>(q_ids.size()), all_emb.cols());
  for (size_t i = 0; i < q_ids.size(); ++i)
    q_emb.row(static_cast<Eigen::Index>(i)) = all_emb.row(q_ids[i]);
  const ClassifierFit fit = fit_classifier(
      s_emb, task.support_labels(), task.n_way(), cfg.tune.steps,
      cfg.tune.lr_classifier, cfg.tune.weight_decay);
  const std::vector<int> pred = classify(q_emb, fit.w, fit.b);
  return accuracy(pred, task.query_labels());
}

// Prompt-free embeddings of every node, computed in one forward pass.
Matrix whole_graph_embeddings(const GTModel& m, const Graph& g,
                              const Matrix& pe) {
  std::vector<int> ids(static_cast<size_t>(g.num_nodes()));
  for (int v = 0; v < g.num_nodes(); ++v) ids[static_cast<size_t>(v)] = v;
  return embed_nodes(m, g, pe, ids, nullptr).first;
}

double score_vnt(const GTModel& m, const Graph& g, const Matrix& pe,
                 const FewShotTask& task, const TuneConfig& tcfg) {
  const TuneOutput out = tune_prompt(m, g, pe, task, tcfg);
  const Prediction pred =
      predict_queries(m, g, pe, task, out.prompt, out.cls_w, out.cls_b);
  return accuracy(pred.labels, task.query_labels());
}

double score_vnt_gppe(const GppeModel& gm, const GTModel& m, const Graph& g,
                      const Matrix& pe, const PromptDictionary& dict,
                      const FewShotTask& task, const TuneConfig& tcfg) {
  const DeployOutput out = deploy_gppe(gm, m, g, pe, dict, task, tcfg);
  return accuracy(out.prediction.labels, task.query_labels());
}

// Ablation: unfreeze a copy of the encoder and adapt it jointly with a
// logistic head on the support set, then classify the queries.
double score_finetune(const GTModel& m, const Graph& g, const Matrix& pe,
                      const FewShotTask& task, const EvalConfig& cfg) {
  GTModel local = m;
  local.frozen = false;

  const std::vector<int> ctx = context_ids(task, cfg.tune.transductive);
  const int s = static_cast<int>(task.support.size());
  const std::vector<int> sup_labels = task.support_labels();

  Matrix x_rows(static_cast<Eigen::Index>(ctx.size()), g.features.cols());
  Matrix pe_rows(static_cast<Eigen::Index>(ctx.size()), pe.cols());
  for (size_t i = 0; i < ctx.size(); ++i) {
    x_rows.row(static_cast<Eigen::Index>(i)) = g.features.row(ctx[i]);
    pe_rows.row(static_cast<Eigen::Index>(i)) = pe.row(ctx[i]);
  }

  Matrix w = Matrix::Zero(local.cfg.embed_dim, task.n_way());
  Matrix b = Matrix::Zero(1, task.n_way());
  Adam opt_enc(cfg.finetune_lr);
  Adam opt_cls(cfg.tune.lr_classifier);

  for (int step = 0; step < cfg.tune.steps; ++step) {
    ad::Tape t;
    GTVars vars = bind_gt(t, local, /*trainable=*/true);
    ad::Var wv = t.param(w);
    ad::Var bv = t.param(b);
    ad::Var e0 = gt_embed(t, vars, t.constant(x_rows), t.constant(pe_rows));
    GTForwardOut fwd = gt_forward(t, local.cfg, vars, e0, std::nullopt);
    ad::Var logits = t.linear(t.slice_rows(fwd.nodes, 0, s), wv, bv);
    ad::Var ce = t.softmax_xent_mean(logits, sup_labels);
    ad::Var penalty =
        t.scale(t.sum_all(t.mul(wv, wv)), cfg.tune.weight_decay);
    ad::Var loss = t.add(ce, penalty);
    if (!std::isfinite(t.val(loss)(0, 0)))
      throw numerical_error("encoder adaptation diverged at step " +
                            std::to_string(step));
    t.backward(loss);

    std::vector<Matrix*> enc_params;
    std::vector<const Matrix*> enc_grads;
    for (auto& [name, var] : vars.named) {
      enc_params.push_back(&local.params.at(name));
      enc_grads.push_back(&t.grad(var));
    }
    opt_enc.step(enc_params, enc_grads);
    opt_cls.step({&w, &b}, {&t.grad(wv), &t.grad(bv)});
  }

  const Matrix e0 = gt_embed_plain(local, g, pe, ctx);
  const auto [emb, prompt_out] = gt_forward_plain(local, e0, nullptr);
  (void)prompt_out;
  const int n_ctx = static_cast<int>(ctx.size());
  const int n_query = static_cast<int>(task.query.size());
  Matrix query_emb;
  if (cfg.tune.transductive) {
    query_emb = emb.bottomRows(n_query);
  } else {
    // Inductive adaptation still classifies queries in their own context.
    const Matrix qe0 = gt_embed_plain(local, g, pe, task.query_nodes());
    query_emb = gt_forward_plain(local, qe0, nullptr).first;
  }
  (void)n_ctx;
  const std::vector<int> pred = classify(query_emb, w, b);
  return accuracy(pred, task.query_labels());
}

double score_task(const GTModel& m, const Graph& g, const Matrix& pe,
                  EvalMethod method, const EvalConfig& cfg,
                  const GppeModel* gppe, const PromptDictionary* dict,
                  const Matrix* all_emb, const FewShotTask& task,
                  uint64_t task_seed) {
  TuneConfig tcfg = cfg.tune;
  tcfg.seed = task_seed;
  switch (method) {
    case EvalMethod::linear_probe:
      return score_linear_probe(*all_emb, task, cfg);
    case EvalMethod::vnt:
      return score_vnt(m, g, pe, task, tcfg);
    case EvalMethod::vnt_gppe:
      return score_vnt_gppe(*gppe, m, g, pe, *dict, task, tcfg);
    case EvalMethod::finetune:
      return score_finetune(m, g, pe, task, cfg);
  }
  throw config_error("unknown evaluation method");
}

}  // namespace

std::string method_name(EvalMethod m) {
  switch (m) {
    case EvalMethod::linear_probe: return "linear_probe";
    case EvalMethod::vnt: return "vnt";
    case EvalMethod::vnt_gppe: return "vnt_gppe";
    case EvalMethod::finetune: return "finetune";
  }
  throw config_error("unknown evaluation method");
}

EvalMethod method_from_name(const std::string& name) {
  if (name == "linear_probe") return EvalMethod::linear_probe;
  if (name == "vnt") return EvalMethod::vnt;
  if (name == "vnt_gppe") return EvalMethod::vnt_gppe;
  if (name == "finetune") return EvalMethod::finetune;
  throw config_error("unknown evaluation method: " + name);
}

double report_mean(const std::vector<double>& per_task) {
  require(!per_task.empty(), "cannot average an empty accuracy list");
  double sum = 0.0;
  for (double a : per_task) sum += a;
  return sum / static_cast<double>(per_task.size());
}

double report_ci95(const std::vector<double>& per_task) {
  const size_t n = per_task.size();
  if (n < 2) return 0.0;
  const double mean = report_mean(per_task);
  double ss = 0.0;
  for (double a : per_task) ss += (a - mean) * (a - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  return 1.96 * sd / std::sqrt(static_cast<double>(n));
}

EvalReport evaluate(const GTModel& gt, const Graph& g, const Matrix& pe,
                    const ClassSplit& split, EvalMethod method,
                    const EvalConfig& cfg, const GppeModel* gppe,
                    const PromptDictionary* dict) {
  const auto t_start = std::chrono::steady_clock::now();
  require(cfg.n_way >= 2, "evaluation needs at least 2 classes per task");
  require(cfg.k_shot >= 1 && cfg.r_query >= 1,
          "evaluation needs positive support and query sizes");
  require(cfg.tasks_per_rep >= 1 && cfg.reps >= 1,
          "evaluation needs a positive task budget");
  require(cfg.workers >= 1, "worker count must be positive");
  if (method == EvalMethod::vnt_gppe) {
    if (gppe == nullptr || dict == nullptr)
      throw contract_error(
          "vnt_gppe evaluation needs a trained module and its dictionary");
  }

  // Sample and validate every task up front so an infeasible setting fails
  // before any model work is spent.
  const int total = cfg.tasks_per_rep * cfg.reps;
  std::vector<FewShotTask> tasks;
  std::vector<uint64_t> task_seeds;
  tasks.reserve(total);
  task_seeds.reserve(total);
  std::vector<uint64_t> rep_seeds;
  for (int r = 0; r < cfg.reps; ++r) {
    const uint64_t rs = mix_seed(cfg.seed, static_cast<uint64_t>(r));
    rep_seeds.push_back(rs);
    for (int ti = 0; ti < cfg.tasks_per_rep; ++ti) {
      const uint64_t ts = mix_seed(rs, static_cast<uint64_t>(ti));
      tasks.push_back(sample_task(g, split, cfg.part, cfg.n_way, cfg.k_shot,
                                  cfg.r_query, ts));
      task_seeds.push_back(ts);
    }
  }

  // The probe's representation is task-independent; compute it once and
  // share it read-only across workers.
  Matrix all_emb;
  if (method == EvalMethod::linear_probe)
    all_emb = whole_graph_embeddings(gt, g, pe);

  std::vector<double> per_task(total, 0.0);
  std::atomic<int> next{0};
  std::mutex err_mu;
  std::exception_ptr first_err;

  auto worker = [&]() {
    while (true) {
      const int i = next.fetch_add(1);
      if (i >= total) return;
      {
        std::lock_guard<std::mutex> lk(err_mu);
        if (first_err) return;
      }
      try {
        per_task[i] = score_task(gt, g, pe, method, cfg, gppe, dict, &all_emb,
                                 tasks[i], task_seeds[i]);
      } catch (...) {
        std::lock_guard<std::mutex> lk(err_mu);
        if (!first_err) first_err = std::current_exception();
        return;
      }
    }
  };

  const int n_threads = std::min(cfg.workers, total);
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (first_err) std::rethrow_exception(first_err);

  EvalReport rep;
  rep.method = method_name(method);
  rep.n_way = cfg.n_way;
  rep.k_shot = cfg.k_shot;
  rep.r_query = cfg.r_query;
  rep.m_sources =
      (method == EvalMethod::vnt_gppe && dict != nullptr)
          ? static_cast<int>(dict->prompts.size())
          : 0;
  rep.tasks_per_rep = cfg.tasks_per_rep;
  rep.reps = cfg.reps;
  rep.per_task_accuracy = per_task;
  for (int r = 0; r < cfg.reps; ++r) {
    const auto begin = per_task.begin() + r * cfg.tasks_per_rep;
    rep.per_rep_mean.push_back(
        report_mean(std::vector<double>(begin, begin + cfg.tasks_per_rep)));
  }
  rep.mean_accuracy = report_mean(per_task);
  rep.ci95 = report_ci95(per_task);
  rep.seeds = rep_seeds;
  rep.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();
  return rep;
}

nlohmann::json report_to_json(const EvalReport& r, bool include_wall_time) {
  nlohmann::json j;
  j["method"] = r.method;
  j["setting"] = {{"n_way", r.n_way},
                  {"k_shot", r.k_shot},
                  {"r_query", r.r_query},
                  {"m_sources", r.m_sources}};
  j["tasks_per_rep"] = r.tasks_per_rep;
  j["reps"] = r.reps;
  j["per_task_accuracy"] = r.per_task_accuracy;
  j["per_rep_mean"] = r.per_rep_mean;
  j["mean_accuracy"] = r.mean_accuracy;
  j["ci95"] = r.ci95;
  j["seeds"] = r.seeds;
  if (include_wall_time) j["wall_time"] = r.wall_time;
  return j;
}

EvalReport report_from_json(const nlohmann::json& j) {
  EvalReport r;
  r.method = j.at("method").get<std::string>();
  r.n_way = j.at("setting").at("n_way").get<int>();
  r.k_shot = j.at("setting").at("k_shot").get<int>();
  r.r_query = j.at("setting").at("r_query").get<int>();
  r.m_sources = j.at("setting").at("m_sources").get<int>();
  r.tasks_per_rep = j.at("tasks_per_rep").get<int>();
  r.reps = j.at("reps").get<int>();
  r.per_task_accuracy = j.at("per_task_accuracy").get<std::vector<double>>();
  r.per_rep_mean = j.at("per_rep_mean").get<std::vector<double>>();
  r.mean_accuracy = j.at("mean_accuracy").get<double>();
  r.ci95 = j.at("ci95").get<double>();
  r.seeds = j.at("seeds").get<std::vector<uint64_t>>();
  if (j.contains("wall_time")) r.wall_time = j.at("wall_time").get<double>();
  return r;
}

ClusterReport clustering_metrics(const Matrix& embeddings,
                                 const std::vector<int>& true_labels, int k,
                                 int restarts, uint64_t seed) {
  require(embeddings.rows() == static_cast<Eigen::Index>(true_labels.size()),
          "one label per embedding row required");
  require(!true_labels.empty(), "clustering needs at least one point");
  std::set<int> distinct(true_labels.begin(), true_labels.end());
  require(k == static_cast<int>(distinct.size()),
          "cluster count must equal the number of distinct labels");
  require(embeddings.rows() >= k, "fewer points than clusters");

  KMeansConfig kc;
  kc.restarts = restarts;
  kc.seed = seed;
  const KMeansResult km = kmeans(embeddings, k, kc);

  ClusterReport rep;
  rep.k = k;
  rep.restarts = restarts;
  rep.nmi = normalized_mutual_information(km.assignment, true_labels);
  rep.ari = adjusted_rand_index(km.assignment, true_labels);
  return rep;
}

SimilarityReport prompt_node_similarity(const GTModel& m, const Graph& g,
                                        const Matrix& pe,
                                        const FewShotTask& task,
                                        const Matrix& prompt,
                                        PromptInit init) {
  if (init != PromptInit::prototype)
    throw config_error(
        "unsupported input: similarity tables need prototype-structured "
        "prompts whose rows carry class attribution");
  const int n = task.n_way();
  const int rows = static_cast<int>(prompt.rows());
  require(rows >= n, "prompt has fewer rows than task classes");

  std::vector<int> ids = task.support_nodes();
  const std::vector<int> q = task.query_nodes();
  ids.insert(ids.end(), q.begin(), q.end());
  std::vector<int> labels = task.support_labels();
  const std::vector<int> ql = task.query_labels();
  labels.insert(labels.end(), ql.begin(), ql.end());

  const auto [node_emb, prompt_emb] = embed_nodes(m, g, pe, ids, &prompt);

  double max_dist = 0.0;
  for (Eigen::Index i = 0; i < node_emb.rows(); ++i)
    for (Eigen::Index j = i + 1; j < node_emb.rows(); ++j)
      max_dist = std::max(max_dist,
                          (node_emb.row(i) - node_emb.row(j)).norm());
  if (max_dist <= 0.0)
    throw numerical_error(
        "all node embeddings coincide; normalized distance is undefined");

  // Prototype block layout: floor(rows/n) rows per class, earlier classes
  // absorb the remainder (matching how the rows were initialized).
  const int base = rows / n;
  const int extra = rows % n;
  auto block_start = [&](int c) { return c * base + std::min(c, extra); };
  auto block_size = [&](int c) { return base + (c < extra ? 1 : 0); };

  SimilarityReport rep;
  rep.classes = task.classes;
  rep.l2 = Matrix::Zero(n, n);
  rep.cosine = Matrix::Zero(n, n);
  for (int cp = 0; cp < n; ++cp) {
    for (int cn = 0; cn < n; ++cn) {
      double sum_l2 = 0.0, sum_cos = 0.0;
      int count = 0;
      for (int r = block_start(cp); r < block_start(cp) + block_size(cp);
           ++r) {
        for (size_t i = 0; i < labels.size(); ++i) {
          if (labels[i] != cn) continue;
          const RowVector a = prompt_emb.row(r);
          const RowVector b = node_emb.row(static_cast<Eigen::Index>(i));
          sum_l2 += (a - b).norm() / max_dist;
          const double na = a.norm(), nb = b.norm();
          sum_cos += (na > 0.0 && nb > 0.0)
                         ? a.dot(b) / (na * nb)
                         : 0.0;
          ++count;
        }
      }
      require(count > 0, "every class needs prompt rows and nodes");
      rep.l2(cp, cn) = sum_l2 / count;
      rep.cosine(cp, cn) = sum_cos / count;
    }
  }
  return rep;
}

TransferMatrix prompt_transfer_matrix(const GTModel& m, const Graph& g,
                                      const Matrix& pe,
                                      const std::vector<FewShotTask>& sources,
                                      const std::vector<FewShotTask>& targets,
                                      TransferMode mode,
                                      const TuneConfig& tune_cfg) {
  require(!sources.empty() && !targets.empty(),
          "transfer needs at least one source and one target task");
  const int n = sources[0].n_way();
  const int k = sources[0].k_shot();
  const int r = sources[0].r_query();
  for (const auto& t : sources)
    require(t.n_way() == n && t.k_shot() == k && t.r_query() == r,
            "all tasks must share the same way/shot/query sizes");
  for (const auto& t : targets)
    require(t.n_way() == n && t.k_shot() == k && t.r_query() == r,
            "all tasks must share the same way/shot/query sizes");

  const int ns = static_cast<int>(sources.size());
  const int nt = static_cast<int>(targets.size());

  // Tuned prompt per source task.
  std::vector<Matrix> source_prompts;
  source_prompts.reserve(ns);
  for (int s = 0; s < ns; ++s) {
    TuneConfig scfg = tune_cfg;
    scfg.seed = mix_seed(tune_cfg.seed, 1000 + static_cast<uint64_t>(s));
    source_prompts.push_back(tune_prompt(m, g, pe, sources[s], scfg).prompt);
  }

  // Plain tuned baseline per target task.
  TransferMatrix out;
  out.baseline.resize(nt);
  std::vector<std::vector<int>> target_truth(nt);
  for (int t = 0; t < nt; ++t) {
    TuneConfig bcfg = tune_cfg;
    bcfg.seed = mix_seed(tune_cfg.seed, 2000 + static_cast<uint64_t>(t));
    const TuneOutput tuned = tune_prompt(m, g, pe, targets[t], bcfg);
    const Prediction pred = predict_queries(m, g, pe, targets[t], tuned.prompt,
                                            tuned.cls_w, tuned.cls_b);
    target_truth[t] = targets[t].query_labels();
    out.baseline[t] = accuracy(pred.labels, target_truth[t]);
  }

  out.ratio = Matrix::Zero(ns, nt);
  out.defined = Matrix::Ones(ns, nt);
  for (int s = 0; s < ns; ++s) {
    for (int t = 0; t < nt; ++t) {
      double acc;
      if (mode == TransferMode::reuse) {
        // Source prompt as-is; only a fresh classifier is fit on the target
        // support embeddings.
        std::vector<int> ids = targets[t].support_nodes();
        const std::vector<int> q = targets[t].query_nodes();
        ids.insert(ids.end(), q.begin(), q.end());
        const auto [emb, pout] =
            embed_nodes(m, g, pe, ids, &source_prompts[s]);
        (void)pout;
        const int sup = static_cast<int>(targets[t].support.size());
        const ClassifierFit fit = fit_classifier(
            emb.topRows(sup), targets[t].support_labels(), n, tune_cfg.steps,
            tune_cfg.lr_classifier, tune_cfg.weight_decay);
        const std::vector<int> pred =
            classify(emb.bottomRows(static_cast<int>(q.size())), fit.w, fit.b);
        acc = accuracy(pred, target_truth[t]);
      } else {
        TuneConfig icfg = tune_cfg;
        icfg.seed = mix_seed(tune_cfg.seed,
                             3000 + static_cast<uint64_t>(s) * 131 +
                                 static_cast<uint64_t>(t));
        const TuneOutput tuned = tune_prompt_from(m, g, pe, targets[t],
                                                  source_prompts[s], icfg);
        const Prediction pred = predict_queries(
            m, g, pe, targets[t], tuned.prompt, tuned.cls_w, tuned.cls_b);
        acc = accuracy(pred.labels, target_truth[t]);
      }
      if (out.baseline[t] == 0.0) {
        out.ratio(s, t) = std::numeric_limits<double>::quiet_NaN();
        out.defined(s, t) = 0.0;
      } else {
        out.ratio(s, t) = acc / out.baseline[t];
      }
    }
  }
  return out;
}

void write_embeddings_csv(const std::string& path,
                          const std::vector<int>& node_ids,
                          const std::vector<int>& labels, const Matrix& emb) {
  require(node_ids.size() == labels.size(), "one label per node id required");
  require(emb.rows() == static_cast<Eigen::Index>(node_ids.size()),
          "one embedding row per node id required");
  std::ofstream f(path);
  if (!f) throw io_error("cannot open for writing: " + path);
  f << "node_id,label";
  for (Eigen::Index c = 0; c < emb.cols(); ++c) f << ",e" << c;
  f << "\n";
  f.precision(17);
  for (Eigen::Index i = 0; i < emb.rows(); ++i) {
    f << node_ids[static_cast<size_t>(i)] << ','
      << labels[static_cast<size_t>(i)];
    for (Eigen::Index c = 0; c < emb.cols(); ++c) f << ',' << emb(i, c);
    f << "\n";
  }
  if (!f) throw io_error("write failed: " + path);
}

void write_matrix_csv(const std::string& path, const Matrix& m,
                      const std::vector<std::string>& row_names,
                      const std::vector<std::string>& col_names) {
  require(m.rows() == static_cast<Eigen::Index>(row_names.size()),
          "one name per matrix row required");
  require(m.cols() == static_cast<Eigen::Index>(col_names.size()),
          "one name per matrix column required");
  std::ofstream f(path);
  if (!f) throw io_error("cannot open for writing: " + path);
  f << "name";
  for (const auto& c : col_names) f << ',' << c;
  f << "\n";
  f.precision(17);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    f << row_names[static_cast<size_t>(i)];
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (std::isnan(m(i, j))) {
        f << ",undefined";
      } else {
        f << ',' << m(i, j);
      }
    }
    f << "\n";
  }
  if (!f) throw io_error("write failed: " + path);
}

}  // namespace vnt
