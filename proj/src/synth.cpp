#include "vnt/synth.hpp"

#include <algorithm>
#include <set>
#include <utility>
#include <vector>

#include "vnt/rng.hpp"

namespace vnt {

namespace {

std::vector<int> class_sizes(int nodes, int classes) {
  std::vector<int> sizes(classes, nodes / classes);
  for (int c = 0; c < nodes % classes; ++c) sizes[c] += 1;
  return sizes;
}

ClassSplit make_split(int classes, int n_base, int n_dev, int n_test) {
  require(n_base + n_dev + n_test == classes,
          "split part sizes must cover every class exactly once");
  ClassSplit s;
  int c = 0;
  for (int i = 0; i < n_base; ++i) s.base.push_back(c++);
  for (int i = 0; i < n_dev; ++i) s.dev.push_back(c++);
  for (int i = 0; i < n_test; ++i) s.test.push_back(c++);
  return s;
}

Dataset make_toy_blocks(uint64_t seed) {
  const int block = 10, fin = 8;
  Matrix x = Matrix::Zero(2 * block, fin);
  Rng rng(mix_seed(seed, 0x746f79626c6bULL));
  std::vector<int> labels(2 * block);
  for (int i = 0; i < 2 * block; ++i) {
    const int b = i / block;
    labels[i] = b;
    x(i, b) = 1.0;
    for (int c = 2; c < fin; ++c) x(i, c) = 0.05 * rng.normal();
  }
  std::vector<std::pair<int, int>> edges;
  for (int b = 0; b < 2; ++b)
    for (int i = 0; i < block; ++i)
      for (int j = i + 1; j < block; ++j)
        edges.emplace_back(b * block + i, b * block + j);
  edges.emplace_back(0, block);  // single bridge between the blocks
  Dataset d;
  d.graph = make_graph(std::move(x), std::move(labels), std::move(edges));
  d.split = make_split(2, 2, 0, 0);
  return d;
}

Dataset make_toy_separable(uint64_t seed) {
  const int classes = 4, per = 12, fin = 8;
  Matrix x(classes * per, fin);
  Rng rng(mix_seed(seed, 0x746f7973657060ULL));
  std::vector<int> labels(classes * per);
  for (int c = 0; c < classes; ++c) {
    for (int i = 0; i < per; ++i) {
      const int id = c * per + i;
      labels[id] = c;
      for (int f = 0; f < fin; ++f)
        x(id, f) = (f == c ? 3.0 : 0.0) + 0.25 * rng.normal();
    }
  }
  std::vector<std::pair<int, int>> edges;
  for (int c = 0; c < classes; ++c)
    for (int i = 0; i < per; ++i)
      edges.emplace_back(c * per + i, c * per + (i + 1) % per);
  Dataset d;
  d.graph = make_graph(std::move(x), std::move(labels), std::move(edges));
  d.split = make_split(classes, 2, 0, 2);
  return d;
}

}  // namespace

SynthConfig synth_preset(const std::string& preset) {
  SynthConfig c;
  // Both citation presets pair classes into shared "homes" aligned with the
  // split parts, so every 2-way task drawn from one part is a confusable
  // pair: the pair shares most vocabulary and (via confusion_homophily) one
  // graph community, and only the sparse core words separate it.
  if (preset == "cora-synth") {
    c.nodes = 2708;
    c.edges = 5278;
    c.features = 1433;
    c.classes = 7;
    c.split_base = 3;
    c.split_dev = 2;
    c.split_test = 2;
    c.shared_subtopics = 4;
    c.shared_home = {0, 1, 1, 2, 2, 3, 3};
    c.homophily = 0.55;
    c.confusion_homophily = 0.35;
    c.core_prob = 0.30;
    c.core_focus = 0.85;
    c.core_hot = 8;
    c.shared_prob = 0.55;
    c.ambiguous_frac = 0.25;
    c.ambiguous_core_prob = 0.05;
    return c;
  }
  if (preset == "citeseer-synth") {
    c.nodes = 3327;
    c.edges = 4552;
    c.features = 3703;
    c.classes = 6;
    c.split_base = 2;
    c.split_dev = 2;
    c.split_test = 2;
    c.shared_subtopics = 3;
    c.shared_home = {0, 0, 1, 1, 2, 2};
    c.homophily = 0.55;
    c.confusion_homophily = 0.35;
    c.core_prob = 0.30;
    c.core_focus = 0.85;
    c.core_hot = 8;
    c.shared_prob = 0.55;
    c.ambiguous_frac = 0.22;
    c.ambiguous_core_prob = 0.05;
    return c;
  }
  throw config_error("unknown mixture preset: " + preset);
}

Dataset generate_dataset(const SynthConfig& cfg) {
  require(cfg.nodes >= 2 && cfg.classes >= 2, "need at least 2 nodes/classes");
  require(cfg.nodes >= cfg.classes, "need at least one node per class");
  require(cfg.edges >= 0 &&
              static_cast<long long>(cfg.edges) <=
                  static_cast<long long>(cfg.nodes) * (cfg.nodes - 1) / 2,
          "edge count exceeds the number of distinct pairs");
  require(cfg.doc_min >= 1 && cfg.doc_max >= cfg.doc_min,
          "document length range is empty");
  require(cfg.shared_subtopics >= 1 && cfg.words_per_subtopic >= 1,
          "need at least one shared subtopic and one word per block");
  const int vocab_blocks = cfg.classes + cfg.shared_subtopics;
  const int core_words = vocab_blocks * cfg.words_per_subtopic;
  require(cfg.features > core_words,
          "feature width too small for the vocabulary blocks");
  require(cfg.core_focus >= 0 && cfg.core_focus <= 1.0 && cfg.core_hot >= 0 &&
              cfg.core_hot <= cfg.words_per_subtopic,
          "core_focus must be a probability and core_hot a sub-block size");
  require(cfg.core_prob >= 0 && cfg.shared_prob >= 0 &&
              cfg.core_prob + cfg.shared_prob <= 1.0,
          "word-source probabilities must form a sub-distribution");
  require(cfg.homophily >= 0 && cfg.confusion_homophily >= 0 &&
              cfg.homophily + cfg.confusion_homophily <= 1.0,
          "edge-kind probabilities must form a sub-distribution");
  if (!cfg.shared_home.empty()) {
    require(static_cast<int>(cfg.shared_home.size()) == cfg.classes,
            "shared_home needs one subtopic id per class");
    for (int h : cfg.shared_home)
      require(h >= 0 && h < cfg.shared_subtopics,
              "shared_home ids must index a shared subtopic");
  }

  const int background = cfg.features - core_words;
  const std::vector<int> sizes = class_sizes(cfg.nodes, cfg.classes);

  std::vector<int> labels;
  labels.reserve(cfg.nodes);
  for (int c = 0; c < cfg.classes; ++c)
    labels.insert(labels.end(), sizes[c], c);

  std::vector<std::vector<int>> by_class(cfg.classes);
  for (int i = 0; i < cfg.nodes; ++i) by_class[labels[i]].push_back(i);

  // Documents: binary bag of words.
  Rng rng(mix_seed(cfg.seed, 0x646f63756d656eULL));
  Matrix x = Matrix::Zero(cfg.nodes, cfg.features);
  const int w = cfg.words_per_subtopic;
  for (int i = 0; i < cfg.nodes; ++i) {
    const int c = labels[i];
    const bool focused = rng.uniform01() >= cfg.ambiguous_frac;
    const double cp = focused ? cfg.core_prob : cfg.ambiguous_core_prob;
    const int len = rng.uniform_int(cfg.doc_min, cfg.doc_max);
    for (int slot = 0; slot < len; ++slot) {
      const double r = rng.uniform01();
      int word;
      if (r < cp) {
        const bool hot = cfg.core_hot > 0 && rng.uniform01() < cfg.core_focus;
        word = c * w + static_cast<int>(rng.below(hot ? cfg.core_hot : w));
      } else if (r < cp + cfg.shared_prob) {
        // Shared-subtopic word. With an explicit home table the class draws
        // only from its home block (classes sharing a home overlap hard);
        // otherwise rotate homes and occasionally borrow the neighbour.
        int pick;
        if (!cfg.shared_home.empty()) {
          pick = cfg.shared_home[static_cast<size_t>(c)];
        } else {
          const int home = c % cfg.shared_subtopics;
          pick = (rng.uniform01() < 0.7) ? home
                                         : (home + 1) % cfg.shared_subtopics;
        }
        word = (cfg.classes + pick) * w + static_cast<int>(rng.below(w));
      } else {
        word = core_words +
               static_cast<int>(rng.below(static_cast<uint64_t>(background)));
      }
      x(i, word) = 1.0;
    }
  }

  // Nodes of other classes with the same home, per class, for the
  // confusion-community edge branch.
  std::vector<std::vector<int>> home_others(cfg.classes);
  if (!cfg.shared_home.empty()) {
    for (int i = 0; i < cfg.nodes; ++i)
      for (int c = 0; c < cfg.classes; ++c)
        if (labels[i] != c &&
            cfg.shared_home[static_cast<size_t>(labels[i])] ==
                cfg.shared_home[static_cast<size_t>(c)])
          home_others[c].push_back(i);
  }

  // Edges: rejection-sample distinct canonical pairs. An endpoint links to
  // its own class with probability homophily, to a same-home other class
  // with probability confusion_homophily, and uniformly otherwise.
  Rng erng(mix_seed(cfg.seed, 0x6564676573ULL));
  std::set<std::pair<int, int>> eset;
  long long tries = 0;
  const long long max_tries =
      200LL * std::max(cfg.edges, 1) + 100000LL;
  while (static_cast<int>(eset.size()) < cfg.edges) {
    if (++tries > max_tries)
      throw config_error("edge sampling failed to reach the target count");
    const int u = static_cast<int>(erng.below(cfg.nodes));
    const double r = erng.uniform01();
    int v;
    if (r < cfg.homophily) {
      const auto& pool = by_class[labels[u]];
      v = pool[erng.below(pool.size())];
    } else if (r < cfg.homophily + cfg.confusion_homophily &&
               !home_others[labels[u]].empty()) {
      const auto& pool = home_others[labels[u]];
      v = pool[erng.below(pool.size())];
    } else {
      v = static_cast<int>(erng.below(cfg.nodes));
      if (labels[v] == labels[u]) continue;
    }
    if (u == v) continue;
    eset.emplace(std::min(u, v), std::max(u, v));
  }

  Dataset d;
  d.graph = make_graph(
      std::move(x), std::move(labels),
      std::vector<std::pair<int, int>>(eset.begin(), eset.end()));
  d.split =
      make_split(cfg.classes, cfg.split_base, cfg.split_dev, cfg.split_test);
  validate_split(d.graph, d.split);
  return d;
}

Dataset make_synthetic(const std::string& preset, uint64_t seed) {
  if (preset == "toy-blocks") return make_toy_blocks(seed);
  if (preset == "toy-separable") return make_toy_separable(seed);
  SynthConfig cfg = synth_preset(preset);
  cfg.seed = seed;
  return generate_dataset(cfg);
}

}  // namespace vnt
