#include "vnt/kmeans.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <utility>

#include "vnt/rng.hpp"

namespace vnt {

namespace {

double sq_dist(const Matrix& points, int row, const Matrix& centers, int c) {
  return (points.row(row) - centers.row(c)).squaredNorm();
}

// Distance-weighted seeding: the first center is a uniform draw, each later
// center is drawn with probability proportional to the squared distance to
// the nearest center chosen so far.
Matrix seed_centers(const Matrix& points, int k, Rng& rng) {
  const int n = static_cast<int>(points.rows());
  Matrix centers(k, points.cols());
  const int first = static_cast<int>(rng.below(static_cast<uint64_t>(n)));
  centers.row(0) = points.row(first);

  Vector best(n);
  for (int i = 0; i < n; ++i) best(i) = sq_dist(points, i, centers, 0);

  for (int c = 1; c < k; ++c) {
    const double total = best.sum();
    int pick;
    if (total <= 0.0) {
      // All remaining points coincide with a chosen center; any draw works.
      pick = static_cast<int>(rng.below(static_cast<uint64_t>(n)));
    } else {
      double target = rng.uniform01() * total;
      pick = n - 1;
      double acc = 0.0;
      for (int i = 0; i < n; ++i) {
        acc += best(i);
        if (target <= acc) {
          pick = i;
          break;
        }
      }
    }
    centers.row(c) = points.row(pick);
    for (int i = 0; i < n; ++i) {
      best(i) = std::min(best(i), sq_dist(points, i, centers, c));
    }
  }
  return centers;
}

struct LloydOut {
  std::vector<int> assignment;
  Matrix centers;
  double inertia;
};

LloydOut lloyd(const Matrix& points, int k, int max_iter, double tol,
               Rng& rng) {
  const int n = static_cast<int>(points.rows());
  Matrix centers = seed_centers(points, k, rng);
  std::vector<int> assign(n, 0);
  double prev_inertia = std::numeric_limits<double>::infinity();
  double inertia = prev_inertia;

  for (int it = 0; it < max_iter; ++it) {
    // Assignment step; ties go to the lowest cluster index.
    inertia = 0.0;
    for (int i = 0; i < n; ++i) {
      int best_c = 0;
      double best_d = sq_dist(points, i, centers, 0);
      for (int c = 1; c < k; ++c) {
        const double d = sq_dist(points, i, centers, c);
        if (d < best_d) {
          best_d = d;
          best_c = c;
        }
      }
      assign[i] = best_c;
      inertia += best_d;
    }

    // Update step.
    Matrix sums = Matrix::Zero(k, points.cols());
    std::vector<int> counts(k, 0);
    for (int i = 0; i < n; ++i) {
      sums.row(assign[i]) += points.row(i);
      counts[assign[i]] += 1;
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        centers.row(c) = sums.row(c) / counts[c];
      } else {
        // Re-seed an empty cluster with the point farthest from its center.
        int far_i = 0;
        double far_d = -1.0;
        for (int i = 0; i < n; ++i) {
          const double d = sq_dist(points, i, centers, assign[i]);
          if (d > far_d) {
            far_d = d;
            far_i = i;
          }
        }
        centers.row(c) = points.row(far_i);
      }
    }

    if (std::isfinite(prev_inertia)) {
      const double denom = std::max(prev_inertia, 1e-300);
      if ((prev_inertia - inertia) / denom < tol) break;
    }
    prev_inertia = inertia;
  }

  // Final assignment against the last center update.
  inertia = 0.0;
  for (int i = 0; i < n; ++i) {
    int best_c = 0;
    double best_d = sq_dist(points, i, centers, 0);
    for (int c = 1; c < k; ++c) {
      const double d = sq_dist(points, i, centers, c);
      if (d < best_d) {
        best_d = d;
        best_c = c;
      }
    }
    assign[i] = best_c;
    inertia += best_d;
  }
  return {std::move(assign), std::move(centers), inertia};
}

// Contingency counts between two label vectors, plus per-side marginals.
struct Contingency {
  std::map<std::pair<int, int>, long long> joint;
  std::map<int, long long> ma, mb;
  long long n = 0;
};

Contingency cross_tabulate(const std::vector<int>& a,
                           const std::vector<int>& b) {
  require(a.size() == b.size(), "label vectors must have equal length");
  require(!a.empty(), "label vectors must be non-empty");
  Contingency t;
  t.n = static_cast<long long>(a.size());
  for (size_t i = 0; i < a.size(); ++i) {
    t.joint[{a[i], b[i]}] += 1;
    t.ma[a[i]] += 1;
    t.mb[b[i]] += 1;
  }
  return t;
}

double entropy(const std::map<int, long long>& marginal, long long n) {
  double h = 0.0;
  for (const auto& [label, count] : marginal) {
    (void)label;
    const double p = static_cast<double>(count) / static_cast<double>(n);
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

long long pairs(long long c) { return c * (c - 1) / 2; }

}  // namespace

KMeansResult kmeans(const Matrix& points, int k, const KMeansConfig& cfg) {
  require(k >= 1, "cluster count must be at least 1");
  require(points.rows() >= k, "need at least as many points as clusters");
  require(cfg.restarts >= 1, "restart count must be at least 1");
  require(cfg.max_iter >= 1, "iteration cap must be at least 1");

  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < cfg.restarts; ++r) {
    Rng rng(mix_seed(cfg.seed, static_cast<uint64_t>(r)));
    LloydOut out = lloyd(points, k, cfg.max_iter, cfg.tol, rng);
    if (out.inertia < best.inertia) {
      best.assignment = std::move(out.assignment);
      best.centers = std::move(out.centers);
      best.inertia = out.inertia;
    }
  }
  return best;
}

double normalized_mutual_information(const std::vector<int>& a,
                                     const std::vector<int>& b) {
  const Contingency t = cross_tabulate(a, b);
  const double ha = entropy(t.ma, t.n);
  const double hb = entropy(t.mb, t.n);
  if (ha == 0.0 && hb == 0.0) return 1.0;  // both partitions constant
  if (ha == 0.0 || hb == 0.0) return 0.0;  // one constant, the other not

  const double dn = static_cast<double>(t.n);
  double mi = 0.0;
  for (const auto& [cell, count] : t.joint) {
    const double pij = static_cast<double>(count) / dn;
    const double pi = static_cast<double>(t.ma.at(cell.first)) / dn;
    const double pj = static_cast<double>(t.mb.at(cell.second)) / dn;
    if (pij > 0.0) mi += pij * std::log(pij / (pi * pj));
  }
  mi = std::max(mi, 0.0);  // guard tiny negative round-off
  return mi / (0.5 * (ha + hb));
}

double adjusted_rand_index(const std::vector<int>& a,
                           const std::vector<int>& b) {
  const Contingency t = cross_tabulate(a, b);
  double sum_joint = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (const auto& [cell, count] : t.joint) {
    (void)cell;
    sum_joint += static_cast<double>(pairs(count));
  }
  for (const auto& [label, count] : t.ma) {
    (void)label;
    sum_a += static_cast<double>(pairs(count));
  }
  for (const auto& [label, count] : t.mb) {
    (void)label;
    sum_b += static_cast<double>(pairs(count));
  }
  const double total = static_cast<double>(pairs(t.n));
  const double expected = sum_a * sum_b / total;
  const double maximum = 0.5 * (sum_a + sum_b);
  const double num = sum_joint - expected;
  const double den = maximum - expected;
  if (num == 0.0 && den == 0.0) return 1.0;  // e.g. both partitions constant
  return num / den;
}

}  // namespace vnt
