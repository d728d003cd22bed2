#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "msgwtcn/error.hpp"
#include "msgwtcn/matrix.hpp"
#include "msgwtcn/rng.hpp"

namespace msgw {

enum class LaplacianKind { combinatorial, symmetric_normalized };

// Sensor network graph. Node order is fixed by lexicographic id sort.
// `edges` is the symmetrized, deduplicated index set used for all spectral
// work; the as-given directed edge list is kept for reporting.
struct Graph {
  std::vector<std::string> node_ids;            // sorted, unique
  std::vector<std::pair<int, int>> edges;       // symmetrized: both (i,j) and (j,i)
  std::vector<std::pair<int, int>> directed_edges;  // input direction, deduplicated
  int n = 0;

  int index_of(const std::string& id) const {
    auto it = std::lower_bound(node_ids.begin(), node_ids.end(), id);
    if (it == node_ids.end() || *it != id) return -1;
    return static_cast<int>(it - node_ids.begin());
  }
};

inline Graph build_graph(const std::vector<std::pair<std::string, std::string>>& edge_list) {
  if (edge_list.empty()) throw EmptyGraphError("build_graph: empty edge list");
  std::set<std::string> ids;
  for (const auto& [s, d] : edge_list) {
    if (s.empty() || d.empty()) throw ConfigError("build_graph: empty node id");
    ids.insert(s);
    ids.insert(d);
  }
  Graph g;
  g.node_ids.assign(ids.begin(), ids.end());
  g.n = static_cast<int>(g.node_ids.size());

  std::set<std::pair<int, int>> directed, sym;
  for (const auto& [s, d] : edge_list) {
    int a = g.index_of(s), b = g.index_of(d);
    if (a == b) continue;  // no self-loops stored
    directed.insert({a, b});
    sym.insert({a, b});
    sym.insert({b, a});
  }
  if (sym.empty()) throw EmptyGraphError("build_graph: no edges after removing self-loops");
  g.directed_edges.assign(directed.begin(), directed.end());
  g.edges.assign(sym.begin(), sym.end());
  return g;
}

inline DenseMatrix adjacency_matrix(const Graph& g) {
  DenseMatrix a(static_cast<std::size_t>(g.n), static_cast<std::size_t>(g.n));
  for (const auto& [i, j] : g.edges) a(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = 1.0;
  return a;
}

inline std::vector<double> degrees(const Graph& g) {
  std::vector<double> d(static_cast<std::size_t>(g.n), 0.0);
  for (const auto& [i, j] : g.edges) d[static_cast<std::size_t>(i)] += 1.0;
  return d;
}

inline DenseMatrix laplacian(const Graph& g, LaplacianKind kind) {
  const auto n = static_cast<std::size_t>(g.n);
  DenseMatrix a = adjacency_matrix(g);
  std::vector<double> deg = degrees(g);
  DenseMatrix l(n, n);
  if (kind == LaplacianKind::combinatorial) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) l(i, j) = -a(i, j);
      l(i, i) = deg[i];
    }
  } else {
    for (std::size_t i = 0; i < n; ++i)
      if (deg[i] == 0.0)
        throw DegreeZeroError("laplacian: node '" + g.node_ids[i] +
                              "' has degree zero; normalized form undefined");
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j)
        l(i, j) = -a(i, j) / std::sqrt(deg[i] * deg[j]);
      l(i, i) = 1.0;
    }
  }
  return l;
}

struct SubgraphResult {
  Graph graph;
  std::vector<int> original_index;  // new index -> index in the parent graph
};

inline SubgraphResult subgraph(const Graph& g, const std::vector<std::string>& keep_ids) {
  std::set<std::string> keep;
  for (const auto& id : keep_ids) {
    if (g.index_of(id) < 0) throw UnknownNodeError("subgraph: unknown node id '" + id + "'");
    keep.insert(id);
  }
  std::vector<std::pair<std::string, std::string>> kept_edges;
  for (const auto& [i, j] : g.directed_edges) {
    const auto& a = g.node_ids[static_cast<std::size_t>(i)];
    const auto& b = g.node_ids[static_cast<std::size_t>(j)];
    if (keep.count(a) && keep.count(b)) kept_edges.push_back({a, b});
  }
  if (kept_edges.empty())
    throw EmptyGraphError("subgraph: induced subgraph on " + std::to_string(keep.size()) +
                          " nodes has no edges");
  SubgraphResult r;
  r.graph = build_graph(kept_edges);
  for (const auto& id : r.graph.node_ids) r.original_index.push_back(g.index_of(id));
  return r;
}

// ---------------------------------------------------------------------------
// Edge-list CSV: header `src,dst`, one edge per row.

inline std::vector<std::pair<std::string, std::string>> read_edge_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open edge csv: " + path);
  std::string line;
  if (!std::getline(in, line)) throw MalformedCsvError("edge csv empty: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "src,dst") throw MalformedCsvError("edge csv must start with header 'src,dst': " + path);
  std::vector<std::pair<std::string, std::string>> edges;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto comma = line.find(',');
    if (comma == std::string::npos || line.find(',', comma + 1) != std::string::npos)
      throw MalformedCsvError("edge csv line " + std::to_string(lineno) + ": expected 'src,dst'");
    edges.push_back({line.substr(0, comma), line.substr(comma + 1)});
  }
  return edges;
}

inline Graph load_edge_csv(const std::string& path) { return build_graph(read_edge_csv(path)); }

inline void write_edge_csv(const Graph& g, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "src,dst\n";
  for (const auto& [i, j] : g.directed_edges)
    out << g.node_ids[static_cast<std::size_t>(i)] << ',' << g.node_ids[static_cast<std::size_t>(j)] << '\n';
  if (!out.good()) throw IoError("write failed: " + path);
}

// ---------------------------------------------------------------------------
// Topology builders. Ids are zero-padded so lexicographic order matches
// construction order.

inline std::string padded_id(const std::string& prefix, int i, int width = 4) {
  std::ostringstream os;
  os << prefix;
  std::string num = std::to_string(i);
  for (std::size_t k = num.size(); k < static_cast<std::size_t>(width); ++k) os << '0';
  os << num;
  return os.str();
}

// 4-neighbour lattice, w*h nodes.
inline Graph make_grid_graph(int w, int h) {
  if (w < 1 || h < 1 || static_cast<long>(w) * h < 2)
    throw ConfigError("grid graph needs at least 2 nodes");
  auto id = [&](int x, int y) { return padded_id("g", y * w + x); };
  std::vector<std::pair<std::string, std::string>> edges;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (x + 1 < w) edges.push_back({id(x, y), id(x + 1, y)});
      if (y + 1 < h) edges.push_back({id(x, y), id(x, y + 1)});
    }
  return build_graph(edges);
}

// Ring plus seeded random chords; always connected.
inline Graph make_random_connected_graph(int n, int extra_edges, std::uint64_t seed) {
  if (n < 2) throw ConfigError("random graph needs n >= 2");
  Rng rng(seed);
  std::vector<std::pair<std::string, std::string>> edges;
  for (int i = 0; i < n; ++i) edges.push_back({padded_id("v", i), padded_id("v", (i + 1) % n)});
  for (int e = 0; e < extra_edges; ++e) {
    int a = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
    int b = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
    if (a != b) edges.push_back({padded_id("v", a), padded_id("v", b)});
  }
  return build_graph(edges);
}

// Two ring+chord communities of sizes n1 and n2 joined by `bridges` edges.
inline Graph make_two_community_graph(int n1, int n2, int bridges) {
  if (n1 < 3 || n2 < 3 || bridges < 1) throw ConfigError("two_community needs n1,n2 >= 3 and bridges >= 1");
  std::vector<std::pair<std::string, std::string>> edges;
  auto ring = [&](const std::string& prefix, int n) {
    for (int i = 0; i < n; ++i) {
      edges.push_back({padded_id(prefix, i), padded_id(prefix, (i + 1) % n)});
      if (n > 4) edges.push_back({padded_id(prefix, i), padded_id(prefix, (i + 2) % n)});
    }
  };
  ring("a", n1);
  ring("b", n2);
  for (int k = 0; k < bridges; ++k)
    edges.push_back({padded_id("a", (k * n1) / bridges), padded_id("b", (k * n2) / bridges)});
  return build_graph(edges);
}

// Grid (urban streets) plus a highway chain tapping the grid at even
// intervals. Highway node ids carry the "h" prefix so free-flow speed
// assignment can tell the classes apart.
inline Graph make_hybrid_highway_grid_graph(int w, int h, int highway_len) {
  if (highway_len < 2) throw ConfigError("hybrid_highway_grid needs highway_len >= 2");
  Graph grid = make_grid_graph(w, h);
  std::vector<std::pair<std::string, std::string>> edges;
  for (const auto& [i, j] : grid.directed_edges)
    edges.push_back({grid.node_ids[static_cast<std::size_t>(i)], grid.node_ids[static_cast<std::size_t>(j)]});
  for (int i = 0; i + 1 < highway_len; ++i) edges.push_back({padded_id("h", i), padded_id("h", i + 1)});
  int grid_n = w * h;
  for (int i = 0; i < highway_len; ++i) {
    int tap = static_cast<int>((static_cast<long>(i) * grid_n) / highway_len);
    edges.push_back({padded_id("h", i), padded_id("g", tap)});
  }
  return build_graph(edges);
}

}  // namespace msgw
