#pragma once

#include <string>
#include <utility>
#include <vector>

#include "vnt/common.hpp"

namespace vnt {

// Undirected attributed graph with integer node labels. Edges are stored once
// as canonical (min,max) pairs; the adjacency list is a cache derived from
// them on construction.
struct Graph {
  Matrix features;                          // V x F_in
  std::vector<int> labels;                  // length V
  std::vector<std::pair<int, int>> edges;   // canonical, sorted, unique
  std::vector<std::vector<int>> adj;        // derived

  int num_nodes() const { return static_cast<int>(labels.size()); }
  int num_features() const { return static_cast<int>(features.cols()); }
  int num_edges() const { return static_cast<int>(edges.size()); }
  std::vector<int> class_ids() const;       // distinct labels, ascending
  std::vector<int> nodes_of_class(int c) const;  // ascending node ids

  void rebuild_adjacency();
  bool has_edge(int u, int v) const;
};

// Disjoint class-id sets for episodic splits; together they cover every class
// present in the graph.
struct ClassSplit {
  std::vector<int> base, dev, test;
};

struct Dataset {
  Graph graph;
  ClassSplit split;
};

// Construct a validated Graph from parts (canonicalizes and dedupes edges,
// checks ranges). Used by the loader, the generator, and tests.
Graph make_graph(Matrix features, std::vector<int> labels,
                 std::vector<std::pair<int, int>> raw_edges);

void validate_split(const Graph& g, const ClassSplit& s);

// Load a dataset directory:
//   edges.tsv      one undirected edge per line, two integer columns
//   features.bin   8-byte header (u32 V, u32 F_in little-endian) then
//                  row-major float32   -- preferred when present
//   features.csv   comma-separated numeric rows                  -- fallback
//   labels.txt     one integer label per line
//   split.json     {"base": [...], "dev": [...], "test": [...]}
Dataset load_dataset(const std::string& dir);

// Write a dataset in the same layout (binary_features picks .bin over .csv).
void save_dataset(const Dataset& d, const std::string& dir,
                  bool binary_features);

const char* split_part_name(int part);  // 0 base, 1 dev, 2 test

}  // namespace vnt
