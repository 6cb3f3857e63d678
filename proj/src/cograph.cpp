#include "gin/cograph.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "gin/error.hpp"

namespace gin::cograph {

const std::vector<Neighbor> CoGraph::kNoNeighbors = {};

CoGraph CoGraph::from_pair_counts(
    const std::map<std::pair<std::string, std::string>, std::int64_t>& pair_counts) {
  CoGraph g;
  for (const auto& [pair, weight] : pair_counts) {
    const auto& [u, v] = pair;
    if (u >= v) throw DataError("cograph: pair counts must be keyed by (min, max) with min < max");
    if (weight < 1) throw DataError("cograph: edge weight must be >= 1");
    g.adj_[u].emplace_back(v, weight);
    g.adj_[v].emplace_back(u, weight);
    ++g.num_edges_;
  }
  for (auto& [id, list] : g.adj_) {
    std::sort(list.begin(), list.end(), [](const Neighbor& a, const Neighbor& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
  }
  return g;
}

std::vector<std::string> CoGraph::node_ids() const {
  std::vector<std::string> ids;
  ids.reserve(adj_.size());
  for (const auto& [id, list] : adj_) ids.push_back(id);
  return ids;
}

const std::vector<Neighbor>& CoGraph::neighbors(const std::string& id) const {
  auto it = adj_.find(id);
  return it == adj_.end() ? kNoNeighbors : it->second;
}

CoGraph build_graph(const std::vector<clicklog::Session>& sessions, int window) {
  if (window < 1) throw DataError("build_graph: window must be >= 1");
  std::map<std::pair<std::string, std::string>, std::int64_t> counts;
  for (const auto& session : sessions) {
    const auto& events = session.events;
    for (std::size_t i = 1; i < events.size(); ++i) {
      const std::size_t lo = i > static_cast<std::size_t>(window) ? i - window : 0;
      for (std::size_t j = lo; j < i; ++j) {
        const std::string& a = events[i].item_id;
        const std::string& b = events[j].item_id;
        if (a == b) continue;
        auto key = a < b ? std::make_pair(a, b) : std::make_pair(b, a);
        ++counts[key];
      }
    }
  }
  return CoGraph::from_pair_counts(counts);
}

std::vector<Neighbor> neighbors_topn(const CoGraph& g, const std::string& id, int n) {
  if (n < 1) throw DataError("neighbors_topn: n must be >= 1");
  const auto& list = g.neighbors(id);
  const std::size_t take = std::min(list.size(), static_cast<std::size_t>(n));
  return {list.begin(), list.begin() + static_cast<std::ptrdiff_t>(take)};
}

DiffusionLayers diffuse(const CoGraph& g, const std::vector<std::string>& seeds, int depth, int n) {
  if (seeds.empty()) throw DataError("diffuse: seeds must be non-empty");
  if (depth < 0) throw DataError("diffuse: depth must be >= 0");

  DiffusionLayers out;
  out.layers.emplace_back(seeds.begin(), seeds.end());
  for (int k = depth; k >= 1; --k) {
    const auto& frontier = out.layers.back();
    std::set<std::string> next = frontier;
    for (const auto& u : frontier) {
      auto [it, fresh] = out.neighbor_map.try_emplace(u);
      if (fresh) it->second = neighbors_topn(g, u, n);
      for (const auto& [v, w] : it->second) next.insert(v);
    }
    out.layers.push_back(std::move(next));
  }
  return out;
}

void save_graph(const CoGraph& g, std::ostream& out) {
  std::vector<std::pair<std::string, std::string>> edges;
  std::map<std::pair<std::string, std::string>, std::int64_t> weights;
  for (const auto& u : g.node_ids()) {
    for (const auto& [v, w] : g.neighbors(u)) {
      if (u < v) {
        edges.emplace_back(u, v);
        weights[{u, v}] = w;
      }
    }
  }
  std::sort(edges.begin(), edges.end());
  out << "GINGRAPH v1 " << g.num_nodes() << ' ' << edges.size() << '\n';
  for (const auto& [u, v] : edges) out << u << '\t' << v << '\t' << weights[{u, v}] << '\n';
}

CoGraph load_graph(std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) throw DataError("load_graph: empty input");
  std::istringstream hs(header);
  std::string magic, version;
  std::size_t want_nodes = 0, want_edges = 0;
  if (!(hs >> magic >> version >> want_nodes >> want_edges) || magic != "GINGRAPH" || version != "v1")
    throw DataError("load_graph: bad magic header '" + header + "'");

  std::map<std::pair<std::string, std::string>, std::int64_t> counts;
  std::string line;
  std::size_t line_no = 1;
  std::pair<std::string, std::string> prev;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) throw DataError("load_graph: blank line at line " + std::to_string(line_no));
    std::size_t t1 = line.find('\t');
    std::size_t t2 = t1 == std::string::npos ? std::string::npos : line.find('\t', t1 + 1);
    if (t2 == std::string::npos || line.find('\t', t2 + 1) != std::string::npos)
      throw DataError("load_graph: expected 3 fields at line " + std::to_string(line_no));
    std::string src = line.substr(0, t1);
    std::string dst = line.substr(t1 + 1, t2 - t1 - 1);
    std::string wtext = line.substr(t2 + 1);
    if (src >= dst)
      throw DataError("load_graph: edge src must sort before dst at line " + std::to_string(line_no));
    std::int64_t w = 0;
    auto [ptr, ec] = std::from_chars(wtext.data(), wtext.data() + wtext.size(), w);
    if (ec != std::errc{} || ptr != wtext.data() + wtext.size())
      throw DataError("load_graph: non-integer weight at line " + std::to_string(line_no));
    if (w < 1) throw DataError("load_graph: weight < 1 at line " + std::to_string(line_no));
    std::pair<std::string, std::string> key{src, dst};
    if (!counts.empty() && key <= prev)
      throw DataError("load_graph: duplicate or out-of-order edge at line " + std::to_string(line_no));
    prev = key;
    counts.emplace(std::move(key), w);
  }
  if (counts.size() != want_edges)
    throw DataError("load_graph: header promises " + std::to_string(want_edges) + " edges, found " +
                    std::to_string(counts.size()));
  CoGraph g = CoGraph::from_pair_counts(counts);
  if (g.num_nodes() != want_nodes)
    throw DataError("load_graph: header promises " + std::to_string(want_nodes) + " nodes, found " +
                    std::to_string(g.num_nodes()));
  return g;
}

void save_graph_file(const CoGraph& g, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("save_graph: cannot open '" + path + "' for writing");
  save_graph(g, out);
  if (!out) throw DataError("save_graph: write failed for '" + path + "'");
}

CoGraph load_graph_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("load_graph: cannot open '" + path + "'");
  return load_graph(in);
}

}  // namespace gin::cograph
