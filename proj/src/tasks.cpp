#include "vnt/tasks.hpp"

#include <algorithm>

#include "vnt/rng.hpp"

namespace vnt {

std::vector<int> FewShotTask::support_nodes() const {
  std::vector<int> out;
  out.reserve(support.size());
  for (const auto& [node, cls] : support) out.push_back(node);
  return out;
}

std::vector<int> FewShotTask::query_nodes() const {
  std::vector<int> out;
  out.reserve(query.size());
  for (const auto& [node, cls] : query) out.push_back(node);
  return out;
}

std::vector<int> FewShotTask::support_labels() const {
  std::vector<int> out;
  out.reserve(support.size());
  for (const auto& [node, cls] : support) out.push_back(cls);
  return out;
}

std::vector<int> FewShotTask::query_labels() const {
  std::vector<int> out;
  out.reserve(query.size());
  for (const auto& [node, cls] : query) out.push_back(cls);
  return out;
}

const std::vector<int>& split_classes(const ClassSplit& s, SplitPart p) {
  switch (p) {
    case SplitPart::base: return s.base;
    case SplitPart::dev: return s.dev;
    default: return s.test;
  }
}

FewShotTask sample_task(const Graph& g, const ClassSplit& split, SplitPart part,
                        int n_way, int k_shot, int r_query, uint64_t seed) {
  require(n_way >= 2, "n_way must be at least 2");
  require(k_shot >= 1, "k_shot must be at least 1");
  require(r_query >= 1, "r_query must be at least 1");
  std::vector<int> pool = split_classes(split, part);
  std::sort(pool.begin(), pool.end());
  if (n_way > static_cast<int>(pool.size()))
    throw config_error("n_way=" + std::to_string(n_way) + " exceeds the " +
                       std::string(split_part_name(static_cast<int>(part))) +
                       " split's " + std::to_string(pool.size()) + " classes");
  const int need = k_shot + r_query;
  std::vector<int> eligible;
  for (int c : pool)
    if (static_cast<int>(g.nodes_of_class(c).size()) >= need)
      eligible.push_back(c);
  if (static_cast<int>(eligible.size()) < n_way)
    throw infeasible_error(
        "only " + std::to_string(eligible.size()) + " classes have at least " +
        std::to_string(need) + " nodes; " + std::to_string(n_way) + " needed");

  Rng rng(seed);
  FewShotTask task;
  task.classes = rng.sample(eligible, static_cast<size_t>(n_way));
  for (int ci = 0; ci < n_way; ++ci) {
    std::vector<int> nodes = g.nodes_of_class(task.classes[ci]);  // ascending
    std::vector<int> drawn = rng.sample(nodes, static_cast<size_t>(need));
    for (int j = 0; j < k_shot; ++j) task.support.emplace_back(drawn[j], ci);
    for (int j = k_shot; j < need; ++j) task.query.emplace_back(drawn[j], ci);
  }
  task.task_id = std::string("task-") +
                 split_part_name(static_cast<int>(part)) + "-n" +
                 std::to_string(n_way) + "k" + std::to_string(k_shot) + "r" +
                 std::to_string(r_query) + "-s" + std::to_string(seed);
  return task;
}

std::vector<FewShotTask> sample_source_tasks(const Graph& g,
                                             const ClassSplit& split, int m,
                                             int n_way, int k_shot, int r_query,
                                             uint64_t seed) {
  require(m >= 0, "source task count must be non-negative");
  std::vector<FewShotTask> tasks;
  tasks.reserve(static_cast<size_t>(m));
  for (int i = 0; i < m; ++i) {
    FewShotTask t = sample_task(g, split, SplitPart::base, n_way, k_shot,
                                r_query, mix_seed(seed, static_cast<uint64_t>(i)));
    t.task_id = "source-" + std::to_string(i) + "-" + t.task_id;
    tasks.push_back(std::move(t));
  }
  return tasks;
}

}  // namespace vnt
