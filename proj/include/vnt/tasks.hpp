#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vnt/graph.hpp"

namespace vnt {

enum class SplitPart { base = 0, dev = 1, test = 2 };

// One N-way K-shot episode. Class ids are remapped to task-local indices
// 0..N-1 in the order the classes were drawn; support/query store
// (node_id, task_local_class) pairs grouped class-major.
struct FewShotTask {
  std::string task_id;
  std::vector<int> classes;                    // original class ids, size N
  std::vector<std::pair<int, int>> support;    // size N*K
  std::vector<std::pair<int, int>> query;      // size N*R

  int n_way() const { return static_cast<int>(classes.size()); }
  int k_shot() const {
    return classes.empty() ? 0 : static_cast<int>(support.size()) / n_way();
  }
  int r_query() const {
    return classes.empty() ? 0 : static_cast<int>(query.size()) / n_way();
  }
  std::vector<int> support_nodes() const;
  std::vector<int> query_nodes() const;
  std::vector<int> support_labels() const;  // task-local
  std::vector<int> query_labels() const;    // task-local
};

const std::vector<int>& split_classes(const ClassSplit& s, SplitPart p);

// Draw one episode. Classes with fewer than K+R labeled nodes are excluded
// before drawing; N classes are then chosen uniformly without replacement,
// and K+R distinct nodes per class (first K support, rest query).
// config_error if N exceeds the split's class count; infeasible_error if
// fewer than N classes remain after exclusion.
FewShotTask sample_task(const Graph& g, const ClassSplit& split, SplitPart part,
                        int n_way, int k_shot, int r_query, uint64_t seed);

// M source episodes over base classes with per-task derived seeds.
std::vector<FewShotTask> sample_source_tasks(const Graph& g,
                                             const ClassSplit& split, int m,
                                             int n_way, int k_shot, int r_query,
                                             uint64_t seed);

}  // namespace vnt
