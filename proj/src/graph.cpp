#include "vnt/graph.hpp"

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace fs = std::filesystem;

namespace vnt {

std::vector<int> Graph::class_ids() const {
  std::set<int> s(labels.begin(), labels.end());
  return std::vector<int>(s.begin(), s.end());
}

std::vector<int> Graph::nodes_of_class(int c) const {
  std::vector<int> out;
  for (int i = 0; i < num_nodes(); ++i)
    if (labels[i] == c) out.push_back(i);
  return out;
}

void Graph::rebuild_adjacency() {
  adj.assign(labels.size(), {});
  for (const auto& [u, v] : edges) {
    adj[u].push_back(v);
    if (u != v) adj[v].push_back(u);
  }
  for (auto& nbrs : adj) std::sort(nbrs.begin(), nbrs.end());
}

bool Graph::has_edge(int u, int v) const {
  if (u > v) std::swap(u, v);
  return std::binary_search(edges.begin(), edges.end(), std::make_pair(u, v));
}

Graph make_graph(Matrix features, std::vector<int> labels,
                 std::vector<std::pair<int, int>> raw_edges) {
  const int n = static_cast<int>(labels.size());
  if (features.rows() != n)
    throw integrity_error("feature rows (" + std::to_string(features.rows()) +
                          ") do not match label count (" + std::to_string(n) +
                          ")");
  for (int lab : labels)
    if (lab < 0) throw integrity_error("negative class label");
  std::set<std::pair<int, int>> canon;
  for (auto [u, v] : raw_edges) {
    if (u < 0 || u >= n || v < 0 || v >= n)
      throw integrity_error("edge endpoint out of range: (" +
                            std::to_string(u) + "," + std::to_string(v) + ")");
    if (u > v) std::swap(u, v);  // symmetrize; duplicates collapse here
    canon.emplace(u, v);
  }
  Graph g;
  g.features = std::move(features);
  g.labels = std::move(labels);
  g.edges.assign(canon.begin(), canon.end());
  g.rebuild_adjacency();
  return g;
}

void validate_split(const Graph& g, const ClassSplit& s) {
  std::set<int> seen;
  size_t total = 0;
  for (const auto* part : {&s.base, &s.dev, &s.test}) {
    seen.insert(part->begin(), part->end());
    total += part->size();
  }
  if (seen.size() != total)
    throw integrity_error("split parts are not pairwise disjoint");
  for (int c : g.class_ids())
    if (!seen.count(c))
      throw integrity_error("split does not cover class " + std::to_string(c));
  for (int c : seen)
    if (g.nodes_of_class(c).empty())
      throw integrity_error("split names class " + std::to_string(c) +
                            " which has no nodes");
}

namespace {

std::vector<std::pair<int, int>> read_edges(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("missing file: " + path);
  std::vector<std::pair<int, int>> edges;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    long long u, v;
    if (!(ss >> u >> v))
      throw integrity_error(path + ":" + std::to_string(lineno) +
                            ": expected two integer columns");
    edges.emplace_back(static_cast<int>(u), static_cast<int>(v));
  }
  return edges;
}

Matrix read_features_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("missing file: " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  int lineno = 0;
  size_t width = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> row;
    std::istringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw integrity_error(path + ":" + std::to_string(lineno) +
                              ": non-numeric cell '" + cell + "'");
      }
    }
    if (width == 0) width = row.size();
    if (row.size() != width)
      throw integrity_error(path + ":" + std::to_string(lineno) +
                            ": ragged row");
    rows.push_back(std::move(row));
  }
  Matrix m(static_cast<Eigen::Index>(rows.size()),
           static_cast<Eigen::Index>(width));
  for (size_t r = 0; r < rows.size(); ++r)
    for (size_t c = 0; c < width; ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          rows[r][c];
  return m;
}

Matrix read_features_bin(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("missing file: " + path);
  unsigned char hdr[8];
  if (!in.read(reinterpret_cast<char*>(hdr), 8))
    throw integrity_error(path + ": truncated header");
  auto rd32 = [&](int off) {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<uint32_t>(hdr[off + i]) << (8 * i);
    return v;
  };
  const uint32_t n = rd32(0), f = rd32(4);
  Matrix m(n, f);
  std::vector<float> row(f);
  for (uint32_t r = 0; r < n; ++r) {
    if (!in.read(reinterpret_cast<char*>(row.data()),
                 static_cast<std::streamsize>(sizeof(float) * f)))
      throw integrity_error(path + ": truncated at row " + std::to_string(r));
    for (uint32_t c = 0; c < f; ++c) m(r, c) = static_cast<double>(row[c]);
  }
  return m;
}

std::vector<int> read_labels(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("missing file: " + path);
  std::vector<int> labels;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      labels.push_back(std::stoi(line));
    } catch (const std::exception&) {
      throw integrity_error(path + ":" + std::to_string(lineno) +
                            ": non-integer label '" + line + "'");
    }
  }
  return labels;
}

ClassSplit read_split(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("missing file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw integrity_error(path + ": invalid JSON: " + e.what());
  }
  ClassSplit s;
  for (const char* key : {"base", "dev", "test"})
    if (!j.contains(key))
      throw integrity_error(path + ": missing key '" + std::string(key) + "'");
  s.base = j.at("base").get<std::vector<int>>();
  s.dev = j.at("dev").get<std::vector<int>>();
  s.test = j.at("test").get<std::vector<int>>();
  return s;
}

}  // namespace

Dataset load_dataset(const std::string& dir) {
  const fs::path root(dir);
  if (!fs::is_directory(root))
    throw io_error("dataset directory not found: " + dir);
  std::vector<int> labels = read_labels((root / "labels.txt").string());
  Matrix feats;
  if (fs::exists(root / "features.bin"))
    feats = read_features_bin((root / "features.bin").string());
  else
    feats = read_features_csv((root / "features.csv").string());
  auto edges = read_edges((root / "edges.tsv").string());
  Dataset d;
  d.graph = make_graph(std::move(feats), std::move(labels), std::move(edges));
  d.split = read_split((root / "split.json").string());
  validate_split(d.graph, d.split);
  return d;
}

void save_dataset(const Dataset& d, const std::string& dir,
                  bool binary_features) {
  fs::create_directories(dir);
  const fs::path root(dir);
  {
    std::ofstream out(root / "edges.tsv");
    for (const auto& [u, v] : d.graph.edges) out << u << '\t' << v << '\n';
  }
  {
    std::ofstream out(root / "labels.txt");
    for (int lab : d.graph.labels) out << lab << '\n';
  }
  if (binary_features) {
    std::ofstream out(root / "features.bin", std::ios::binary);
    const uint32_t n = static_cast<uint32_t>(d.graph.features.rows());
    const uint32_t f = static_cast<uint32_t>(d.graph.features.cols());
    unsigned char hdr[8];
    for (int i = 0; i < 4; ++i) hdr[i] = static_cast<unsigned char>(n >> (8 * i));
    for (int i = 0; i < 4; ++i)
      hdr[4 + i] = static_cast<unsigned char>(f >> (8 * i));
    out.write(reinterpret_cast<const char*>(hdr), 8);
    std::vector<float> row(f);
    for (uint32_t r = 0; r < n; ++r) {
      for (uint32_t c = 0; c < f; ++c)
        row[c] = static_cast<float>(d.graph.features(r, c));
      out.write(reinterpret_cast<const char*>(row.data()),
                static_cast<std::streamsize>(sizeof(float) * f));
    }
  } else {
    std::ofstream out(root / "features.csv");
    out.precision(17);
    for (Eigen::Index r = 0; r < d.graph.features.rows(); ++r) {
      for (Eigen::Index c = 0; c < d.graph.features.cols(); ++c) {
        if (c) out << ',';
        out << d.graph.features(r, c);
      }
      out << '\n';
    }
  }
  {
    nlohmann::json j;
    j["base"] = d.split.base;
    j["dev"] = d.split.dev;
    j["test"] = d.split.test;
    std::ofstream out(root / "split.json");
    out << j.dump(2) << '\n';
  }
}

const char* split_part_name(int part) {
  switch (part) {
    case 0: return "base";
    case 1: return "dev";
    default: return "test";
  }
}

}  // namespace vnt
