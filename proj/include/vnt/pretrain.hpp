#pragma once

#include <cstdint>
#include <vector>

#include "vnt/gt.hpp"
#include "vnt/graph.hpp"
#include "vnt/rng.hpp"

namespace vnt {

// Self-supervised encoder training: random-walk node batches, a linear
// attribute-reconstruction head and a bilinear edge-recovery head, optimized
// jointly with the encoder.
struct PretrainConfig {
  int epochs = 200;
  int batches_per_epoch = 8;
  int max_batch = 256;       // random-walk neighborhood truncation
  double restart = 0.15;     // walk restart probability
  double lr = 1e-3;
  double negative_ratio = 1.0;  // non-edge pairs per edge pair
  uint64_t seed = 0;
};

struct PretrainResult {
  std::vector<double> loss_history;    // total loss per optimization step
  std::vector<double> attr_history;    // reconstruction term per step
  std::vector<double> struct_history;  // edge-recovery term per step
  int steps_without_structure = 0;     // batches where no edge pair existed
  // trained auxiliary heads (the encoder itself is updated in place)
  Matrix decoder_w;  // embed_dim x input_dim
  Matrix decoder_b;  // 1 x input_dim
  Matrix bilinear;   // embed_dim x embed_dim
};

// Mean squared reconstruction error over all feature entries:
// ||emb*W + b - X||^2 / (rows * input_dim).
ad::Var attribute_reconstruction_loss(ad::Tape& t, ad::Var emb, ad::Var dec_w,
                                      ad::Var dec_b, const Matrix& x_target);

// Mean squared error of sigmoid(e_u^T B e_v) against 0/1 pair labels.
// `us`/`vs` index rows of emb.
ad::Var structure_recovery_loss(ad::Tape& t, ad::Var emb, ad::Var bilinear,
                                const std::vector<int>& us,
                                const std::vector<int>& vs,
                                const std::vector<double>& labels);

// Pair set for one batch: every edge with both endpoints inside the batch
// (label 1), plus round(ratio * positives) distinct non-adjacent pairs drawn
// without replacement (label 0). Indices are batch-local.
struct StructurePairs {
  std::vector<int> us, vs;
  std::vector<double> labels;
  int num_positive = 0;
};
StructurePairs sample_structure_pairs(const Graph& g,
                                      const std::vector<int>& batch_ids,
                                      double negative_ratio, Rng& rng);

// Plain-path pair scores sigmoid(e_u^T B e_v) for trained heads.
Vector structure_scores(const Matrix& emb, const Matrix& bilinear,
                        const std::vector<int>& us, const std::vector<int>& vs);

// Runs the full loop, updating `m` in place. Throws contract_error if the
// encoder is frozen and numerical_error (with the step index) on divergence.
PretrainResult pretrain(GTModel& m, const Graph& g, const PretrainConfig& cfg);

}  // namespace vnt
