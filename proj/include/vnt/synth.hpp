#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vnt/graph.hpp"

namespace vnt {

// Bag-of-words citation-style generator. Every class owns a core vocabulary
// block; a small set of shared subtopic blocks and a large background
// vocabulary are mixed in, so classes overlap in a controlled way. A fraction
// of "ambiguous" nodes carries almost no core words and is identifiable
// mainly through its neighbourhood. Classes assigned the same shared subtopic
// ("home") overlap heavily and can additionally be wired into joint graph
// communities via confusion_homophily, so telling them apart requires the
// sparse core-word signal rather than coarse position.
struct SynthConfig {
  int nodes = 0;
  int edges = 0;
  int features = 0;
  int classes = 0;
  int split_base = 0;  // class counts per split part, in class-id order
  int split_dev = 0;
  int split_test = 0;
  int shared_subtopics = 3;
  int words_per_subtopic = 40;
  int doc_min = 12;  // word draws per node document
  int doc_max = 36;
  double core_prob = 0.60;           // focused nodes: P(own-class core word)
  // Concentration of core draws: with probability core_focus a core draw
  // lands in the first core_hot words of the class block instead of the full
  // block, so documents of one class overlap densely in a few marker words
  // while the rest of the block stays a long tail. 0 keeps uniform draws.
  double core_focus = 0.0;
  int core_hot = 0;
  double shared_prob = 0.30;         // P(shared-subtopic word)
  double ambiguous_frac = 0.30;      // nodes with weak core signal
  double ambiguous_core_prob = 0.15;
  double homophily = 0.85;           // P(edge endpoints share a class)
  // P(edge to a same-home node of another class); carves communities around
  // home groups instead of single classes. 0 keeps pure class homophily.
  double confusion_homophily = 0.0;
  // Per-class shared-subtopic id in [0, shared_subtopics). Empty means the
  // default rotation c % shared_subtopics with occasional neighbour draws.
  std::vector<int> shared_home;
  uint64_t seed = 0;
};

// Deterministic generation from the config (binary 0/1 features, exactly
// cfg.edges distinct undirected edges, contiguous class blocks of near-equal
// size, split parts filled in ascending class order).
Dataset generate_dataset(const SynthConfig& cfg);

// Named presets:
//   cora-synth      2708 nodes / 5278 edges / 1433 features / 7 classes (3/2/2)
//   citeseer-synth  3327 nodes / 4552 edges / 3703 features / 6 classes (2/2/2)
//   toy-blocks      20 nodes: two 10-cliques joined by one bridge edge
//   toy-separable   48 nodes: 4 well-separated classes of 12 (rings), 2 base +
//                   2 test classes
Dataset make_synthetic(const std::string& preset, uint64_t seed = 0);

// The mixture-generator settings behind the citation presets (errors on the
// structural toy presets, which are not mixture-generated).
SynthConfig synth_preset(const std::string& preset);

}  // namespace vnt
