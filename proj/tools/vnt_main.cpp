// Command-line front end: dataset generation, encoder pretraining, prompt
// tuning, dictionary building, evolution-module training, evaluation,
// hyperparameter sweeps, and embedding export. Every command writes into a
// fresh timestamped run directory containing a resolved-config snapshot; all
// artifacts except run.log are byte-deterministic for a fixed config + seed.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "vnt/config.hpp"
#include "vnt/eval.hpp"
#include "vnt/gppe.hpp"
#include "vnt/graph.hpp"
#include "vnt/gt.hpp"
#include "vnt/pretrain.hpp"
#include "vnt/rng.hpp"
#include "vnt/synth.hpp"
#include "vnt/tasks.hpp"
#include "vnt/tensor_io.hpp"
#include "vnt/tuner.hpp"

namespace {

using namespace vnt;

struct CommonFlags {
  std::string config_path;
  uint64_t seed = 0;
  std::string out;
  int workers = 0;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* out_opt = nullptr;
  CLI::Option* workers_opt = nullptr;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "config JSON file");
  f.seed_opt = cmd->add_option("--seed", f.seed, "override the config seed");
  f.out_opt = cmd->add_option("--out", f.out, "override the output parent directory");
  f.workers_opt =
      cmd->add_option("--workers", f.workers, "override the worker count");
}

RunConfig resolve(const CommonFlags& f) {
  RunConfig cfg = load_config(f.config_path);
  if (f.seed_opt->count()) cfg.seed = f.seed;
  if (f.out_opt->count()) cfg.out = f.out;
  if (f.workers_opt->count()) cfg.workers = f.workers;
  apply_env_fallback(cfg);
  return cfg;
}

int resolved_workers(const RunConfig& cfg) {
  if (cfg.workers > 0) return cfg.workers;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

Dataset load_data(const RunConfig& cfg) {
  if (cfg.dataset.empty())
    throw config_error(
        "no dataset path: set 'dataset' in the config or VNT_DATA_ROOT");
  return load_dataset(cfg.dataset);
}

GTModel load_checkpoint(const RunConfig& cfg) {
  if (cfg.eval.checkpoint.empty())
    throw config_error("no checkpoint path: set eval.checkpoint");
  return load_gt(cfg.eval.checkpoint);
}

void write_snapshot(const std::string& dir, const RunConfig& cfg) {
  std::ofstream f(dir + "/resolved_config.json");
  if (!f) throw io_error("cannot write config snapshot in " + dir);
  f << config_to_json(cfg).dump(2) << "\n";
}

// The one deliberately nondeterministic artifact: timing and provenance.
void write_log(const std::string& dir, const std::string& command,
               double seconds) {
  std::ofstream f(dir + "/run.log");
  f << "command=" << command << "\n"
    << "wall_time_seconds=" << seconds << "\n";
}

void write_loss_csv(const std::string& path,
                    const std::vector<double>& loss) {
  std::ofstream f(path);
  if (!f) throw io_error("cannot write " + path);
  f.precision(17);
  f << "step,loss\n";
  for (size_t i = 0; i < loss.size(); ++i) f << i << ',' << loss[i] << "\n";
}

struct Timer {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
        .count();
  }
};

EvalConfig eval_config(const RunConfig& cfg) {
  EvalConfig ec;
  ec.part = parse_part(cfg.eval.part);
  ec.n_way = cfg.eval.n_way;
  ec.k_shot = cfg.eval.k_shot;
  ec.r_query = cfg.eval.r_query;
  ec.tasks_per_rep = cfg.eval.tasks_per_rep;
  ec.reps = cfg.eval.reps;
  ec.seed = cfg.seed;
  ec.workers = resolved_workers(cfg);
  ec.tune = cfg.vnt.tune;
  ec.tune.seed = cfg.seed;
  return ec;
}

int cmd_make_dataset(const RunConfig& cfg) {
  Timer timer;
  const std::string dir = make_run_dir(cfg.out, "make-dataset");
  write_snapshot(dir, cfg);
  const Dataset d = make_synthetic(cfg.make_dataset.preset, cfg.seed);
  const std::string data_dir = dir + "/dataset";
  save_dataset(d, data_dir, cfg.make_dataset.binary_features);
  write_log(dir, "make-dataset", timer.seconds());
  std::printf("%s: %d nodes, %d edges, %d features, %zu classes -> %s\n",
              cfg.make_dataset.preset.c_str(), d.graph.num_nodes(),
              d.graph.num_edges(), d.graph.num_features(),
              d.graph.class_ids().size(), data_dir.c_str());
  return 0;
}

int cmd_pretrain(const RunConfig& cfg) {
  Timer timer;
  const Dataset d = load_data(cfg);
  GTConfig mc = cfg.model;
  mc.input_dim = d.graph.num_features();
  GTModel m = make_gt(mc);

  const std::string dir = make_run_dir(cfg.out, "pretrain");
  write_snapshot(dir, cfg);

  PretrainConfig pc = cfg.pretrain;
  const PretrainResult res = pretrain(m, d.graph, pc);
  m.frozen = true;

  const std::string ckpt = dir + "/checkpoint.vnta";
  save_gt(m, ckpt, {{"dataset", cfg.dataset}});

  std::ofstream f(dir + "/loss.csv");
  if (!f) throw io_error("cannot write loss CSV in " + dir);
  f.precision(17);
  f << "step,loss,attribute,structure\n";
  for (size_t i = 0; i < res.loss_history.size(); ++i)
    f << i << ',' << res.loss_history[i] << ',' << res.attr_history[i] << ','
      << res.struct_history[i] << "\n";
  f.close();

  write_log(dir, "pretrain", timer.seconds());
  std::printf("pretrained %d steps, final loss %.6f, digest %s -> %s\n",
              static_cast<int>(res.loss_history.size()),
              res.loss_history.back(), param_digest(m).c_str(), ckpt.c_str());
  return 0;
}

int cmd_tune(const RunConfig& cfg) {
  Timer timer;
  const Dataset d = load_data(cfg);
  const GTModel m = load_checkpoint(cfg);
  const Matrix pe = positional_encoding(d.graph, m.cfg.pe_dim);
  const std::string before = param_digest(m);

  const FewShotTask task =
      sample_task(d.graph, d.split, parse_part(cfg.eval.part), cfg.eval.n_way,
                  cfg.eval.k_shot, cfg.eval.r_query,
                  mix_seed(cfg.seed, 0x7461736bULL));
  TuneConfig tc = cfg.vnt.tune;
  tc.seed = cfg.seed;

  const std::string dir = make_run_dir(cfg.out, "tune");
  write_snapshot(dir, cfg);

  const TuneOutput out = tune_prompt(m, d.graph, pe, task, tc);
  const Prediction pred =
      predict_queries(m, d.graph, pe, task, out.prompt, out.cls_w, out.cls_b);
  const double acc = accuracy(pred.labels, task.query_labels());

  TensorArchive a;
  a.meta = {{"kind", "tuned_prompt"},
            {"task_id", task.task_id},
            {"init", init_name(tc.init)},
            {"n_way", task.n_way()}};
  a.add("prompt", out.prompt);
  a.add("cls_w", out.cls_w);
  a.add("cls_b", out.cls_b);
  save_archive(a, dir + "/prompt.vnta");
  write_loss_csv(dir + "/loss.csv", out.loss_history);

  nlohmann::json rep = {{"task_id", task.task_id},
                        {"query_accuracy", acc},
                        {"final_support_loss", out.loss_history.back()}};
  std::ofstream rf(dir + "/report.json");
  rf << rep.dump(2) << "\n";
  rf.close();

  if (param_digest(m) != before)
    throw contract_error("encoder parameters changed during tuning");
  write_log(dir, "tune", timer.seconds());
  std::printf("tuned %s: query accuracy %.4f -> %s\n", task.task_id.c_str(),
              acc, (dir + "/prompt.vnta").c_str());
  return 0;
}

int cmd_build_dict(const RunConfig& cfg) {
  Timer timer;
  const Dataset d = load_data(cfg);
  const GTModel m = load_checkpoint(cfg);
  const Matrix pe = positional_encoding(d.graph, m.cfg.pe_dim);
  const std::string before = param_digest(m);

  const std::vector<FewShotTask> sources = sample_source_tasks(
      d.graph, d.split, cfg.gppe.m, cfg.eval.n_way, cfg.eval.k_shot,
      cfg.eval.r_query, mix_seed(cfg.seed, 0x736f75726365ULL));
  TuneConfig tc = cfg.vnt.tune;
  tc.seed = cfg.seed;

  const std::string dir = make_run_dir(cfg.out, "build-dict");
  write_snapshot(dir, cfg);

  const PromptDictionary dict = build_dictionary(m, d.graph, pe, sources, tc);
  save_dictionary(dict, dir + "/dictionary.vnta");

  if (param_digest(m) != before)
    throw contract_error("encoder parameters changed during dictionary build");
  write_log(dir, "build-dict", timer.seconds());
  std::printf("dictionary of %zu source prompts, digest %s -> %s\n",
              dict.prompts.size(), dict.digest.c_str(),
              (dir + "/dictionary.vnta").c_str());
  return 0;
}

int cmd_train_gppe(const RunConfig& cfg) {
  Timer timer;
  const Dataset d = load_data(cfg);
  const GTModel m = load_checkpoint(cfg);
  const Matrix pe = positional_encoding(d.graph, m.cfg.pe_dim);
  if (cfg.eval.dictionary.empty())
    throw config_error("no dictionary path: set eval.dictionary");
  const PromptDictionary dict = load_dictionary(cfg.eval.dictionary);
  require(!dict.tasks.empty(), "dictionary is empty");
  const std::string before = param_digest(m);

  const std::string dir = make_run_dir(cfg.out, "train-gppe");
  write_snapshot(dir, cfg);

  GppeModel gm = init_gppe(m.cfg.embed_dim, dict.tasks[0].n_way(), cfg.seed);
  GppeConfig gc;
  gc.episodes = cfg.gppe.episodes;
  gc.lr = cfg.gppe.lr;
  gc.seed = cfg.seed;
  const GppeTrainResult res = train_gppe(gm, m, d.graph, pe, dict, gc);
  save_gppe(gm, dir + "/module.vnta");
  write_loss_csv(dir + "/loss.csv", res.loss_history);

  if (param_digest(m) != before)
    throw contract_error("encoder parameters changed during module training");
  write_log(dir, "train-gppe", timer.seconds());
  std::printf("evolution module trained %d episodes, final loss %.6f -> %s\n",
              cfg.gppe.episodes, res.loss_history.back(),
              (dir + "/module.vnta").c_str());
  return 0;
}

int cmd_eval(const RunConfig& cfg) {
  Timer timer;
  const Dataset d = load_data(cfg);
  const GTModel m = load_checkpoint(cfg);
  const Matrix pe = positional_encoding(d.graph, m.cfg.pe_dim);
  const std::string before = param_digest(m);

  EvalMethod method = method_from_name(cfg.eval.method);
  if (cfg.eval.ablate_unfreeze) method = EvalMethod::finetune;

  GppeModel gm;
  PromptDictionary dict;
  const GppeModel* gmp = nullptr;
  const PromptDictionary* dictp = nullptr;
  if (method == EvalMethod::vnt_gppe) {
    if (cfg.eval.dictionary.empty() || cfg.eval.module.empty())
      throw config_error(
          "vnt_gppe needs eval.dictionary and eval.module paths");
    dict = load_dictionary(cfg.eval.dictionary);
    gm = load_gppe(cfg.eval.module);
    gmp = &gm;
    dictp = &dict;
  }

  const std::string dir = make_run_dir(cfg.out, "eval");
  write_snapshot(dir, cfg);

  const EvalReport rep =
      evaluate(m, d.graph, pe, d.split, method, eval_config(cfg), gmp, dictp);

  std::ofstream f(dir + "/report.json");
  if (!f) throw io_error("cannot write report in " + dir);
  f << report_to_json(rep).dump(2) << "\n";
  f.close();

  if (param_digest(m) != before)
    throw contract_error("encoder parameters changed during evaluation");
  write_log(dir, "eval", rep.wall_time);
  std::printf("%s, %d-way %d-shot, %.4f ± %.4f\n", rep.method.c_str(),
              rep.n_way, rep.k_shot, rep.mean_accuracy, rep.ci95);
  std::printf("report -> %s\n", (dir + "/report.json").c_str());
  (void)timer;
  return 0;
}

int cmd_sweep(const RunConfig& cfg) {
  Timer timer;
  const Dataset d = load_data(cfg);
  const std::string dir = make_run_dir(cfg.out, "sweep");
  write_snapshot(dir, cfg);

  std::ofstream csv(dir + "/sweep.csv");
  if (!csv) throw io_error("cannot write sweep CSV in " + dir);
  csv << "value,mean_accuracy,ci95,status\n";

  auto run_point = [&](const std::string& label,
                       const std::function<EvalReport()>& fn) {
    try {
      const EvalReport rep = fn();
      char line[160];
      std::snprintf(line, sizeof(line), "%s,%.6f,%.6f,ok", label.c_str(),
                    rep.mean_accuracy, rep.ci95);
      csv << line << "\n";
      std::printf("%s: %.4f ± %.4f\n", label.c_str(), rep.mean_accuracy,
                  rep.ci95);
    } catch (const std::exception& e) {
      // A failed point is recorded and the sweep moves on.
      csv << label << ",,,failed: " << e.what() << "\n";
      std::printf("%s: failed (%s)\n", label.c_str(), e.what());
    }
  };

  if (cfg.sweep.axis == "M") {
    const GTModel m = load_checkpoint(cfg);
    const Matrix pe = positional_encoding(d.graph, m.cfg.pe_dim);
    for (int mv : cfg.sweep.m_values) {
      run_point(std::to_string(mv), [&]() {
        if (mv == 0)
          return evaluate(m, d.graph, pe, d.split, EvalMethod::vnt,
                          eval_config(cfg));
        const std::vector<FewShotTask> sources = sample_source_tasks(
            d.graph, d.split, mv, cfg.eval.n_way, cfg.eval.k_shot,
            cfg.eval.r_query, mix_seed(cfg.seed, 0x736f75726365ULL));
        TuneConfig tc = cfg.vnt.tune;
        tc.seed = cfg.seed;
        const PromptDictionary dict =
            build_dictionary(m, d.graph, pe, sources, tc);
        GppeModel gm =
            init_gppe(m.cfg.embed_dim, cfg.eval.n_way, cfg.seed);
        GppeConfig gc;
        gc.episodes = cfg.gppe.episodes;
        gc.lr = cfg.gppe.lr;
        gc.seed = cfg.seed;
        train_gppe(gm, m, d.graph, pe, dict, gc);
        return evaluate(m, d.graph, pe, d.split, EvalMethod::vnt_gppe,
                        eval_config(cfg), &gm, &dict);
      });
    }
  } else if (cfg.sweep.axis == "alpha") {
    const GTModel m = load_checkpoint(cfg);
    const Matrix pe = positional_encoding(d.graph, m.cfg.pe_dim);
    for (double a : cfg.sweep.alpha_values) {
      char label[32];
      std::snprintf(label, sizeof(label), "%g", a);
      run_point(label, [&]() {
        RunConfig pc = cfg;
        pc.vnt.tune.alpha = a;
        return evaluate(m, d.graph, pe, d.split, EvalMethod::vnt,
                        eval_config(pc));
      });
    }
  } else if (cfg.sweep.axis == "width_depth") {
    for (int w : cfg.sweep.widths) {
      for (int dep : cfg.sweep.depths) {
        const std::string label =
            std::to_string(w) + "x" + std::to_string(dep);
        run_point(label, [&]() {
          GTConfig mc = cfg.model;
          mc.input_dim = d.graph.num_features();
          mc.embed_dim = w;
          mc.depth = dep;
          GTModel m = make_gt(mc);
          pretrain(m, d.graph, cfg.pretrain);
          m.frozen = true;
          const Matrix pe = positional_encoding(d.graph, mc.pe_dim);
          return evaluate(m, d.graph, pe, d.split, EvalMethod::vnt,
                          eval_config(cfg));
        });
      }
    }
  } else {
    throw config_error("unknown sweep axis: " + cfg.sweep.axis +
                       " (expected M, alpha, or width_depth)");
  }
  csv.close();
  write_log(dir, "sweep", timer.seconds());
  std::printf("sweep -> %s\n", (dir + "/sweep.csv").c_str());
  return 0;
}

int cmd_export_embeddings(const RunConfig& cfg) {
  Timer timer;
  const Dataset d = load_data(cfg);
  const GTModel m = load_checkpoint(cfg);
  const Matrix pe = positional_encoding(d.graph, m.cfg.pe_dim);

  const std::vector<int>& classes =
      split_classes(d.split, parse_part(cfg.export_emb.part));
  std::vector<int> ids;
  for (int c : classes) {
    const std::vector<int> nodes = d.graph.nodes_of_class(c);
    ids.insert(ids.end(), nodes.begin(), nodes.end());
  }
  require(!ids.empty(), "selected split part contains no nodes");

  Matrix prompt;
  const Matrix* pptr = nullptr;
  if (!cfg.export_emb.prompt.empty()) {
    const TensorArchive a = load_archive(cfg.export_emb.prompt);
    prompt = a.at("prompt");
    pptr = &prompt;
  }

  const std::string dir = make_run_dir(cfg.out, "export-embeddings");
  write_snapshot(dir, cfg);

  const auto [emb, pout] = embed_nodes(m, d.graph, pe, ids, pptr);
  (void)pout;
  std::vector<int> labels;
  labels.reserve(ids.size());
  for (int id : ids) labels.push_back(d.graph.labels[id]);
  write_embeddings_csv(dir + "/embeddings.csv", ids, labels, emb);

  write_log(dir, "export-embeddings", timer.seconds());
  std::printf("exported %zu embeddings -> %s\n", ids.size(),
              (dir + "/embeddings.csv").c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"few-shot node classification with virtual-node prompts"};
  app.require_subcommand(1);

  CommonFlags f_make, f_pre, f_tune, f_dict, f_gppe, f_eval, f_sweep, f_exp;

  CLI::App* c_make =
      app.add_subcommand("make-dataset", "generate a synthetic dataset");
  add_common(c_make, f_make);
  std::string preset;
  CLI::Option* preset_opt =
      c_make->add_option("--preset", preset, "dataset preset name");

  CLI::App* c_pre =
      app.add_subcommand("pretrain", "self-supervised encoder pretraining");
  add_common(c_pre, f_pre);

  CLI::App* c_tune =
      app.add_subcommand("tune", "tune a prompt on one sampled task");
  add_common(c_tune, f_tune);

  CLI::App* c_dict = app.add_subcommand(
      "build-dict", "tune prompts for sampled source tasks");
  add_common(c_dict, f_dict);

  CLI::App* c_gppe = app.add_subcommand(
      "train-gppe", "train the prompt-evolution module on a dictionary");
  add_common(c_gppe, f_gppe);

  CLI::App* c_eval = app.add_subcommand("eval", "score a method over tasks");
  add_common(c_eval, f_eval);
  std::string method;
  CLI::Option* method_opt =
      c_eval->add_option("--method", method, "override eval method");
  bool ablate = false;
  c_eval->add_flag("--ablate-unfreeze", ablate,
                   "adapt an unfrozen encoder copy instead of prompts");

  CLI::App* c_sweep =
      app.add_subcommand("sweep", "evaluate along a hyperparameter axis");
  add_common(c_sweep, f_sweep);
  std::string axis;
  CLI::Option* axis_opt =
      c_sweep->add_option("--axis", axis, "override sweep axis");

  CLI::App* c_exp = app.add_subcommand("export-embeddings",
                                       "write node embeddings as CSV");
  add_common(c_exp, f_exp);

  CLI11_PARSE(app, argc, argv);

  try {
    if (c_make->parsed()) {
      RunConfig cfg = resolve(f_make);
      if (preset_opt->count()) cfg.make_dataset.preset = preset;
      return cmd_make_dataset(cfg);
    }
    if (c_pre->parsed()) return cmd_pretrain(resolve(f_pre));
    if (c_tune->parsed()) return cmd_tune(resolve(f_tune));
    if (c_dict->parsed()) return cmd_build_dict(resolve(f_dict));
    if (c_gppe->parsed()) return cmd_train_gppe(resolve(f_gppe));
    if (c_eval->parsed()) {
      RunConfig cfg = resolve(f_eval);
      if (method_opt->count()) cfg.eval.method = method;
      if (ablate) cfg.eval.ablate_unfreeze = true;
      return cmd_eval(cfg);
    }
    if (c_sweep->parsed()) {
      RunConfig cfg = resolve(f_sweep);
      if (axis_opt->count()) cfg.sweep.axis = axis;
      return cmd_sweep(cfg);
    }
    if (c_exp->parsed()) return cmd_export_embeddings(resolve(f_exp));
    std::fprintf(stderr, "error: no command given\n");
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
