#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "vnt/gt.hpp"
#include "vnt/graph.hpp"
#include "vnt/tasks.hpp"
#include "vnt/tuner.hpp"

namespace vnt {

// Evolves a freshly tuned prompt by attending over a dictionary of prompts
// tuned on source tasks: a relation head scores the new prompt against each
// dictionary entry, the scores are softmax-weighted, and a learned linear
// map carries the weighted entries into an additive update.

struct PromptDictionary {
  std::vector<FewShotTask> tasks;  // source tasks (queries kept for training)
  std::vector<Matrix> prompts;     // tuned rows, one matrix per task
  std::string digest;              // binds trained heads to this dictionary
};

std::string dictionary_digest(const PromptDictionary& dict);

// Relation head (two-layer MLP) plus evolution map and episode classifier.
struct GppeModel {
  Matrix theta_w1, theta_b1, theta_w2, theta_b2;  // F x F heads, 1 x F biases
  Matrix l_map;                                   // F x F evolution map
  Matrix psi_w, psi_b;                            // episode classifier
  bool trained = false;
  std::string dict_digest;  // digest of the dictionary trained against
};

struct GppeConfig {
  int episodes = 1000;
  double lr = 1e-3;
  uint64_t seed = 0;
};

// Tunes one prompt per source task with a support-only attention context
// (queries are reserved for episodic training) and hashes the result.
PromptDictionary build_dictionary(const GTModel& m, const Graph& g,
                                  const Matrix& pe,
                                  const std::vector<FewShotTask>& source_tasks,
                                  const TuneConfig& tune_cfg);

// Fresh heads: seeded uniform MLP weights, zero evolution map (the update
// starts as the identity), zero classifier.
GppeModel init_gppe(int embed_dim, int n_way, uint64_t seed);

// --- plain-path pieces (the episodic tape mirrors these exactly) ---

// Row-mean of a prompt pushed through the relation MLP.
RowVector relation_embedding(const GppeModel& gm, const Matrix& prompt);

// Cosine similarities between the projected target prompt and each projected
// dictionary entry. The projector overload lets callers substitute any map
// (e.g. identity) for oracle checks.
Vector relation_coefficients(const GppeModel& gm, const Matrix& prompt,
                             const std::vector<Matrix>& dict_prompts);
Vector relation_coefficients_with(
    const std::function<RowVector(const RowVector&)>& projector,
    const Matrix& prompt, const std::vector<Matrix>& dict_prompts);

// Softmax over relation coefficients: positive, sums to one.
Vector attention_weights(const Vector& relations);

// P + sum_k a_k * entry_k * L^T. Every entry must match P's shape.
Matrix refine_prompt(const Matrix& prompt,
                     const std::vector<Matrix>& dict_prompts, const Vector& a,
                     const Matrix& l_map);

struct GppeTrainResult {
  std::vector<double> loss_history;  // one query cross-entropy per episode
};

// One leave-one-out episode as a differentiable graph: dictionary entry
// `target` plays the pseudo-target; the remaining entries refine its prompt
// and the query cross-entropy under the episode classifier is returned.
// Exposed so tests can differentiate exactly what training differentiates.
struct EpisodeVars {
  ad::Var loss;
  ad::Var theta_w1, theta_b1, theta_w2, theta_b2, l_map, psi_w, psi_b;
};
EpisodeVars build_episode(ad::Tape& t, const GppeModel& gm, const GTModel& m,
                          const Graph& g, const Matrix& pe,
                          const PromptDictionary& dict, size_t target);

// Leave-one-out episodes over the dictionary: each episode treats one source
// task as the pseudo-target, refines its stored prompt against the remaining
// entries, and descends the query cross-entropy through the relation head,
// the evolution map, and the episode classifier.
GppeTrainResult train_gppe(GppeModel& gm, const GTModel& m, const Graph& g,
                           const Matrix& pe, const PromptDictionary& dict,
                           const GppeConfig& cfg);

struct DeployOutput {
  Prediction prediction;
  Matrix base_prompt;     // stage-1 tuned rows
  Matrix refined_prompt;  // after evolution
  Vector weights;         // dictionary attention
};

// Full target-side pipeline: tune a prompt on the task's support set
// (transductive context), refine it against the whole dictionary, then fit a
// fresh classifier on the support embeddings under the refined prompt.
DeployOutput deploy_gppe(const GppeModel& gm, const GTModel& m, const Graph& g,
                         const Matrix& pe, const PromptDictionary& dict,
                         const FewShotTask& task, const TuneConfig& tune_cfg);

// Checkpoint IO for the trained heads and the dictionary.
void save_gppe(const GppeModel& gm, const std::string& path);
GppeModel load_gppe(const std::string& path);
void save_dictionary(const PromptDictionary& dict, const std::string& path);
PromptDictionary load_dictionary(const std::string& path);

}  // namespace vnt
