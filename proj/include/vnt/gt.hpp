#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vnt/graph.hpp"
#include "vnt/tape.hpp"

namespace vnt {

// Named parameter tensors with stable insertion order (the order in which
// seeded initialization consumes random draws). Digest is order-independent.
struct ParamStore {
  std::vector<std::string> order;
  std::map<std::string, Matrix> tensors;

  Matrix& add(const std::string& name, Matrix m);
  Matrix& at(const std::string& name);
  const Matrix& at(const std::string& name) const;
  std::string digest() const;
};

struct GTConfig {
  int input_dim = 0;   // raw feature width F_in
  int embed_dim = 128; // working width F
  int depth = 2;       // transformer layers D
  int heads = 4;       // attention heads H (must divide F)
  int pe_dim = 32;     // positional-encoding eigenvectors k
  uint64_t seed = 0;   // parameter init seed
};

// Transformer over node batches: input projection of raw attributes plus
// projection of Laplacian positional encodings, then `depth` pre-norm
// multi-head self-attention blocks with 4x feed-forward and residuals.
// Attention is full within the batch; optional prompt rows are appended to
// the first layer's input and flow through every layer.
struct GTModel {
  GTConfig cfg;
  bool frozen = false;
  ParamStore params;
};

GTModel make_gt(const GTConfig& cfg);
std::string param_digest(const GTModel& m);

// Symmetric-normalized-Laplacian eigenvector encoding: the k eigenvectors
// with smallest nonzero eigenvalues, each sign-fixed so its first entry with
// |x| > 1e-8 is positive, zero-padded when fewer than k exist. k=0 gives a
// V x 0 matrix (the positional projection then contributes only its bias).
Matrix positional_encoding(const Graph& g, int k);

// Tape-bound view of the model parameters (trainable or constant).
struct GTVars {
  std::vector<std::pair<std::string, ad::Var>> named;
  ad::Var at(const std::string& name) const;
};
GTVars bind_gt(ad::Tape& t, const GTModel& m, bool trainable);

// E0 = attr_proj(X) + pos_proj(PE) for pre-gathered rows.
ad::Var gt_embed(ad::Tape& t, const GTVars& vars, ad::Var x_rows,
                 ad::Var pe_rows);

struct GTForwardOut {
  ad::Var nodes;                 // batch rows after the last layer
  ad::Var prompt;                // prompt rows after the last layer (if any)
  std::vector<int> layer_rows;   // row count after each layer (shape audit)
};

// Full stack over [e0_nodes ; prompt]. Throws numerical_error naming the
// first layer that produces a non-finite activation.
GTForwardOut gt_forward(ad::Tape& t, const GTConfig& cfg, const GTVars& vars,
                        ad::Var e0_nodes, std::optional<ad::Var> prompt);

// Allocation-light inference path; bit-identical to the tape path (shared
// row-level numerics, same operation order). Returns final node rows and
// final prompt rows.
std::pair<Matrix, Matrix> gt_forward_plain(const GTModel& m,
                                           const Matrix& e0_nodes,
                                           const Matrix* prompt);

// Plain E0 for a set of node ids (features and PE rows gathered internally).
Matrix gt_embed_plain(const GTModel& m, const Graph& g, const Matrix& pe,
                      const std::vector<int>& node_ids);

// Checkpoint IO. Saved digest is verified against the loaded tensors.
void save_gt(const GTModel& m, const std::string& path,
             const nlohmann::json& extra_meta = nlohmann::json::object());
GTModel load_gt(const std::string& path, nlohmann::json* meta_out = nullptr);

}  // namespace vnt
