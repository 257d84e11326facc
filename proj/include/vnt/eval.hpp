#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "vnt/gppe.hpp"
#include "vnt/graph.hpp"
#include "vnt/gt.hpp"
#include "vnt/tasks.hpp"
#include "vnt/tuner.hpp"

namespace vnt {

// Few-shot classification methods the harness can score. `linear_probe`
// trains only a logistic head on frozen embeddings; `vnt` tunes virtual rows
// per task; `vnt_gppe` additionally refines them against a source-prompt
// dictionary; `finetune` unfreezes the encoder and adapts it jointly with
// the head (the ablation baseline).
enum class EvalMethod { linear_probe, vnt, vnt_gppe, finetune };

std::string method_name(EvalMethod m);
EvalMethod method_from_name(const std::string& name);

struct EvalConfig {
  SplitPart part = SplitPart::test;
  int n_way = 2;
  int k_shot = 5;
  int r_query = 10;
  int tasks_per_rep = 100;
  int reps = 5;
  uint64_t seed = 0;
  int workers = 1;            // deterministic regardless of the value
  TuneConfig tune;            // prompt-tuning settings (vnt / vnt_gppe)
  double finetune_lr = 1e-3;  // encoder learning rate for `finetune`
};

struct EvalReport {
  std::string method;
  int n_way = 0;
  int k_shot = 0;
  int r_query = 0;
  int m_sources = 0;  // dictionary size for vnt_gppe, 0 otherwise
  int tasks_per_rep = 0;
  int reps = 0;
  std::vector<double> per_task_accuracy;  // repetition-major order
  std::vector<double> per_rep_mean;
  double mean_accuracy = 0.0;
  double ci95 = 0.0;              // 1.96 * sample std / sqrt(total tasks)
  std::vector<uint64_t> seeds;    // one derived seed per repetition
  double wall_time = 0.0;         // seconds; kept out of canonical JSON so
                                  // identical runs serialize identically
};

// Samples reps x tasks_per_rep tasks (all sampled and validated before any
// model work) and scores `method` on each. gppe/dict are required for
// vnt_gppe and ignored otherwise.
EvalReport evaluate(const GTModel& gt, const Graph& g, const Matrix& pe,
                    const ClassSplit& split, EvalMethod method,
                    const EvalConfig& cfg, const GppeModel* gppe = nullptr,
                    const PromptDictionary* dict = nullptr);

// Mean and half-width recomputed from the per-task list (report assembly
// uses these same functions).
double report_mean(const std::vector<double>& per_task);
double report_ci95(const std::vector<double>& per_task);

// Canonical JSON round-trip. Wall time is serialized only on request.
nlohmann::json report_to_json(const EvalReport& r,
                              bool include_wall_time = false);
EvalReport report_from_json(const nlohmann::json& j);

struct ClusterReport {
  double nmi = 0.0;
  double ari = 0.0;
  int k = 0;
  int restarts = 0;
};

// K-Means (best of `restarts` seeded runs) on the rows of `embeddings`,
// scored against the true labels. Requires k == number of distinct labels.
ClusterReport clustering_metrics(const Matrix& embeddings,
                                 const std::vector<int>& true_labels, int k,
                                 int restarts = 10, uint64_t seed = 0);

struct SimilarityReport {
  std::vector<int> classes;  // original class ids in task-local order
  Matrix l2;      // (prompt class, node class) mean L2 distance, divided by
                  // the largest pairwise distance among the node embeddings
  Matrix cosine;  // (prompt class, node class) mean cosine similarity
};

// Compares final-layer prompt rows against final-layer node embeddings of
// the task's support and query nodes, grouped by class. The prompt must
// carry prototype block structure (`init` records how it was built); rows
// without class attribution are rejected.
SimilarityReport prompt_node_similarity(const GTModel& m, const Graph& g,
                                        const Matrix& pe,
                                        const FewShotTask& task,
                                        const Matrix& prompt, PromptInit init);

enum class TransferMode { reuse, init };

struct TransferMatrix {
  Matrix ratio;    // sources x targets; NaN where the baseline was zero
  Matrix defined;  // 1.0 where ratio is well-defined, else 0.0
  std::vector<double> baseline;  // plain tuned accuracy per target
};

// Cross-task prompt reuse: entry (s, t) is the query accuracy on target t
// when starting from source s's tuned prompt (reuse: only a fresh classifier
// is fit; init: the prompt is tuned further), relative to tuning target t
// from scratch. All tasks must share (N, K, R).
TransferMatrix prompt_transfer_matrix(const GTModel& m, const Graph& g,
                                      const Matrix& pe,
                                      const std::vector<FewShotTask>& sources,
                                      const std::vector<FewShotTask>& targets,
                                      TransferMode mode,
                                      const TuneConfig& tune_cfg);

// CSV export: header `node_id,label,e0..e{F-1}`, one row per embedding row.
void write_embeddings_csv(const std::string& path,
                          const std::vector<int>& node_ids,
                          const std::vector<int>& labels, const Matrix& emb);

// CSV export with row/column names; NaN cells are written as "undefined".
void write_matrix_csv(const std::string& path, const Matrix& m,
                      const std::vector<std::string>& row_names,
                      const std::vector<std::string>& col_names);

}  // namespace vnt
