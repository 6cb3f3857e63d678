#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "gin/clicklog.hpp"

namespace gin::cograph {

using Neighbor = std::pair<std::string, std::int64_t>;  // (item id, weight)

// Undirected weighted co-occurrence commodity graph. Edge weight counts how
// often two items were clicked within the window inside one session.
// Immutable after construction; adjacency lists are sorted by weight
// descending, then id ascending, so Top-N selection is a prefix.
class CoGraph {
 public:
  CoGraph() = default;

  // pair_counts keyed by canonical (min id, max id) item pairs.
  static CoGraph from_pair_counts(const std::map<std::pair<std::string, std::string>, std::int64_t>& pair_counts);

  bool has_node(const std::string& id) const { return adj_.count(id) > 0; }
  std::size_t num_nodes() const { return adj_.size(); }
  std::size_t num_edges() const { return num_edges_; }

  std::vector<std::string> node_ids() const;
  // Empty list for unknown ids.
  const std::vector<Neighbor>& neighbors(const std::string& id) const;

  bool operator==(const CoGraph& other) const = default;

 private:
  std::map<std::string, std::vector<Neighbor>> adj_;
  std::size_t num_edges_ = 0;
  static const std::vector<Neighbor> kNoNeighbors;
};

// Nested diffusion frontiers. layers[0] = S^(K) (the seeds), layers[K] =
// S^(0); neighbor_map holds the Top-N list recorded for every node that was
// expanded at some hop.
struct DiffusionLayers {
  std::vector<std::set<std::string>> layers;
  std::map<std::string, std::vector<Neighbor>> neighbor_map;
};

// Counts within-window co-clicks over all sessions. Window w links each
// session position i to positions i-1 .. i-w. Identical items never form a
// self-loop.
CoGraph build_graph(const std::vector<clicklog::Session>& sessions, int window);

// First n entries of the adjacency list (weight desc, id asc). Empty for
// unknown or isolated nodes.
std::vector<Neighbor> neighbors_topn(const CoGraph& g, const std::string& id, int n);

// Alg-style frontier expansion: S^(k-1) = S^(k) ∪ ⋃_{u∈S^(k)} topn(u).
DiffusionLayers diffuse(const CoGraph& g, const std::vector<std::string>& seeds, int depth, int n);

// Text format, line 1: `GINGRAPH v1 <num_nodes> <num_edges>`, then one
// `src<TAB>dst<TAB>weight` line per undirected edge with src < dst, sorted
// by (src, dst). Byte-identical for equal graphs.
void save_graph(const CoGraph& g, std::ostream& out);
CoGraph load_graph(std::istream& in);

void save_graph_file(const CoGraph& g, const std::string& path);
CoGraph load_graph_file(const std::string& path);

}  // namespace gin::cograph
