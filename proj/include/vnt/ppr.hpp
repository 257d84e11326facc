#pragma once

#include <vector>

#include "vnt/graph.hpp"

namespace vnt {

struct PPRConfig {
  double restart = 0.15;
  double tol = 1e-6;   // L1 convergence threshold
  int max_iter = 1000;
};

// Personalized PageRank scores from seed_node via power iteration on the
// degree-normalized transition matrix. Mass leaving a degree-0 node returns
// to the seed, so the result is always a probability distribution.
Vector ppr_scores(const Graph& g, int seed_node, const PPRConfig& cfg = {});

// Top-scoring nodes around the seed (seed always included), score-descending
// with node-id tie-break, truncated to max_size.
std::vector<int> ppr_subgraph(const Graph& g, int seed_node, int max_size,
                              const PPRConfig& cfg = {});

}  // namespace vnt
