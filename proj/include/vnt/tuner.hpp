#pragma once

#include <cstdint>
#include <vector>

#include "vnt/gt.hpp"
#include "vnt/graph.hpp"
#include "vnt/tasks.hpp"

namespace vnt {

// Per-task adaptation of a frozen encoder: a small matrix of virtual rows is
// appended to the attention context and optimized, together with a linear
// classifier, on the task's support set. The encoder itself never changes.

enum class PromptInit { random, prototype };

// Number of virtual rows for an N-way K-shot task: round(alpha * N * K) >= 1.
int prompt_rows(double alpha, int n_way, int k_shot);

struct TuneConfig {
  double alpha = 1.0;
  int steps = 100;
  double lr_prompt = 1e-2;
  double lr_classifier = 1e-2;
  double weight_decay = 1e-3;  // L2 penalty on classifier weights
  bool transductive = true;    // include query nodes in the attention context
  PromptInit init = PromptInit::prototype;
  uint64_t seed = 0;
};

// Initial virtual rows. `random` draws N(0, 0.02^2) entries; `prototype`
// fills class blocks (floor(rows/N) each, earlier classes take the
// remainder) with support class means from a prompt-free forward pass.
Matrix init_prompt(const GTModel& m, const Graph& g, const Matrix& pe,
                   const FewShotTask& task, PromptInit kind, int rows,
                   uint64_t seed);

struct TuneOutput {
  Matrix prompt;                     // tuned virtual rows
  Matrix cls_w;                      // embed_dim x n_way
  Matrix cls_b;                      // 1 x n_way
  std::vector<double> loss_history;  // support objective per step
};

// Optimizes prompt + classifier on the support cross-entropy. Throws
// contract_error unless the encoder is frozen.
TuneOutput tune_prompt(const GTModel& m, const Graph& g, const Matrix& pe,
                       const FewShotTask& task, const TuneConfig& cfg);

// Same, but starting from caller-provided virtual rows.
TuneOutput tune_prompt_from(const GTModel& m, const Graph& g, const Matrix& pe,
                            const FewShotTask& task, const Matrix& prompt0,
                            const TuneConfig& cfg);

// Embeddings of arbitrary nodes under an optional prompt (inference path).
// Returns (node rows, prompt rows after the stack).
std::pair<Matrix, Matrix> embed_nodes(const GTModel& m, const Graph& g,
                                      const Matrix& pe,
                                      const std::vector<int>& node_ids,
                                      const Matrix* prompt);

struct Prediction {
  std::vector<int> labels;  // task-local class per query
  Matrix probs;             // queries x n_way
};

// Classifies the task's query nodes; the attention context is the support
// and query nodes plus the prompt, matching the tuned configuration.
Prediction predict_queries(const GTModel& m, const Graph& g, const Matrix& pe,
                           const FewShotTask& task, const Matrix& prompt,
                           const Matrix& cls_w, const Matrix& cls_b);

double accuracy(const std::vector<int>& predicted,
                const std::vector<int>& truth);

struct EnsembleOutput {
  std::vector<int> labels;              // majority-voted query classes
  std::vector<double> member_accuracy;  // per-member query accuracy
  double vote_accuracy = 0.0;
};

// Per-position majority over member label vectors; ties resolve to the
// lowest class index.
std::vector<int> majority_vote(const std::vector<std::vector<int>>& members,
                               int n_way);

// Tunes `members` independently perturbed prompts (prototype init plus
// noise_scale * N(0,1)) and majority-votes their predictions; ties resolve
// to the lowest class index.
EnsembleOutput ensemble_predict(const GTModel& m, const Graph& g,
                                const Matrix& pe, const FewShotTask& task,
                                const TuneConfig& cfg, int members,
                                double noise_scale);

struct ClassifierFit {
  Matrix w, b;
  std::vector<double> loss_history;
};

// Multinomial logistic regression on fixed embeddings (zero-initialized,
// Adam, cross-entropy with L2 on the weights).
ClassifierFit fit_classifier(const Matrix& emb, const std::vector<int>& labels,
                             int n_way, int steps = 100, double lr = 1e-2,
                             double weight_decay = 1e-3);

std::vector<int> classify(const Matrix& emb, const Matrix& w, const Matrix& b);

}  // namespace vnt
