#include "vnt/ppr.hpp"

#include <algorithm>
#include <numeric>

namespace vnt {

Vector ppr_scores(const Graph& g, int seed_node, const PPRConfig& cfg) {
  const int n = g.num_nodes();
  require(seed_node >= 0 && seed_node < n, "ppr seed node out of range");
  require(cfg.restart > 0.0 && cfg.restart <= 1.0,
          "ppr restart probability must be in (0, 1]");
  Vector p = Vector::Zero(n);
  p(seed_node) = 1.0;
  const double a = cfg.restart;
  for (int it = 0; it < cfg.max_iter; ++it) {
    Vector next = Vector::Zero(n);
    double dangling = 0.0;
    for (int u = 0; u < n; ++u) {
      if (p(u) == 0.0) continue;
      const auto& nbrs = g.adj[u];
      if (nbrs.empty()) {
        dangling += p(u);
        continue;
      }
      const double share = p(u) / static_cast<double>(nbrs.size());
      for (int v : nbrs) next(v) += share;
    }
    next(seed_node) += dangling;  // degree-0 mass returns to the seed
    next = (1.0 - a) * next;
    next(seed_node) += a;
    const double diff = (next - p).cwiseAbs().sum();
    p = std::move(next);
    if (diff < cfg.tol) break;
  }
  return p;
}

std::vector<int> ppr_subgraph(const Graph& g, int seed_node, int max_size,
                              const PPRConfig& cfg) {
  require(max_size >= 1, "ppr subgraph max_size must be positive");
  Vector p = ppr_scores(g, seed_node, cfg);
  const int n = g.num_nodes();
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (p(a) != p(b)) return p(a) > p(b);
    return a < b;
  });
  std::vector<int> out;
  out.reserve(static_cast<size_t>(max_size));
  out.push_back(seed_node);
  for (int v : order) {
    if (static_cast<int>(out.size()) >= max_size) break;
    if (v == seed_node) continue;
    if (p(v) <= 0.0) continue;  // unreachable nodes never enter the batch
    out.push_back(v);
  }
  return out;
}

}  // namespace vnt
