#pragma once

#include <cstdint>
#include <vector>

#include "vnt/common.hpp"

namespace vnt {

struct KMeansConfig {
  int restarts = 10;     // independent seeded initializations; keep best
  int max_iter = 300;
  double tol = 1e-4;     // relative inertia improvement threshold
  uint64_t seed = 0;
};

struct KMeansResult {
  std::vector<int> assignment;  // cluster per point
  Matrix centers;               // k x dim
  double inertia = 0.0;         // sum of squared distances to centers
};

// Lloyd's algorithm with distance-weighted (k-means++) seeding. Ties in the
// nearest-center choice go to the lowest cluster index; a cluster that
// empties is re-seeded with the point farthest from its current center.
KMeansResult kmeans(const Matrix& points, int k, const KMeansConfig& cfg = {});

// Mutual information normalized by the arithmetic mean of the label
// entropies. Two constant partitions score 1; one constant partition scores
// 0 against any non-constant one.
double normalized_mutual_information(const std::vector<int>& a,
                                     const std::vector<int>& b);

// Pair-counting Rand index adjusted for chance; 1 for identical partitions.
double adjusted_rand_index(const std::vector<int>& a,
                           const std::vector<int>& b);

}  // namespace vnt
