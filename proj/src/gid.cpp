#include "gin/gid.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace gin::gid {

GidParams GidParams::zeros(int depth, int dim) {
  if (depth < 0 || dim < 1) throw std::invalid_argument("GidParams: bad depth or dim");
  const auto d = static_cast<std::size_t>(dim);
  GidParams p;
  p.hops.reserve(static_cast<std::size_t>(depth));
  for (int k = 0; k < depth; ++k) {
    HopParams hop;
    hop.attn_proj = ad::Tensor::matrix(d, d);
    hop.attn_vec = ad::Tensor::vector(2 * d);
    hop.neigh_w = ad::Tensor::matrix(d, d);
    hop.neigh_b = ad::Tensor::vector(d);
    hop.comb_w = ad::Tensor::matrix(d, 2 * d);
    hop.comb_b = ad::Tensor::vector(d);
    p.hops.push_back(std::move(hop));
  }
  return p;
}

GidLeaves GidLeaves::bind(ad::Tape& tape, ad::Tensor& item_table, GidParams& params) {
  GidLeaves leaves;
  leaves.item_table = tape.param_rows(item_table);
  leaves.dim = static_cast<int>(item_table.cols());
  for (auto& hop : params.hops) {
    leaves.hops.push_back(HopLeaves{
        tape.param(hop.attn_proj), tape.param(hop.attn_vec),
        tape.param(hop.neigh_w), tape.param(hop.neigh_b),
        tape.param(hop.comb_w), tape.param(hop.comb_b)});
  }
  return leaves;
}

namespace {

// Read-only binding for the plain-value wrappers.
GidLeaves bind_inputs(ad::Tape& tape, const ad::Tensor& item_table, const GidParams& params) {
  GidLeaves leaves;
  leaves.item_table = tape.input(item_table);
  leaves.dim = static_cast<int>(item_table.cols());
  for (const auto& hop : params.hops) {
    leaves.hops.push_back(HopLeaves{
        tape.input(hop.attn_proj), tape.input(hop.attn_vec),
        tape.input(hop.neigh_w), tape.input(hop.neigh_b),
        tape.input(hop.comb_w), tape.input(hop.comb_b)});
  }
  return leaves;
}

HopLeaves bind_hop_inputs(ad::Tape& tape, const HopParams& hop) {
  return HopLeaves{tape.input(hop.attn_proj), tape.input(hop.attn_vec),
                   tape.input(hop.neigh_w), tape.input(hop.neigh_b),
                   tape.input(hop.comb_w), tape.input(hop.comb_b)};
}

void sort_unique(std::vector<int>& rows) {
  std::sort(rows.begin(), rows.end());
  rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
}

}  // namespace

IndexedGraph IndexedGraph::build(const cograph::CoGraph& g, const Vocab& items, int n) {
  if (n < 1) throw std::invalid_argument("IndexedGraph: n must be >= 1");
  IndexedGraph out;
  out.topn = n;
  out.neighbors.resize(static_cast<std::size_t>(items.size()));
  for (int row = 1; row < items.size(); ++row) {
    const auto top = cograph::neighbors_topn(g, items.name(row), n);
    auto& list = out.neighbors[static_cast<std::size_t>(row)];
    list.reserve(top.size());
    for (const auto& [id, w] : top) {
      // Neighbors outside the vocabulary are dropped rather than collapsed
      // onto the UNK row.
      const int nb = items.lookup(id);
      if (nb != Vocab::kUnk) list.push_back(nb);
    }
  }
  return out;
}

const std::vector<int>* IndexedLayers::neighbors_of(int row) const {
  auto it = std::lower_bound(neighbors.begin(), neighbors.end(), row,
                             [](const auto& entry, int r) { return entry.first < r; });
  if (it == neighbors.end() || it->first != row) return nullptr;
  return &it->second;
}

IndexedLayers diffuse_indexed(const IndexedGraph& g, std::span<const int> seed_rows, int depth) {
  if (seed_rows.empty()) throw std::invalid_argument("diffuse_indexed: empty seeds");
  if (depth < 0) throw std::invalid_argument("diffuse_indexed: negative depth");

  IndexedLayers out;
  std::vector<int> frontier(seed_rows.begin(), seed_rows.end());
  sort_unique(frontier);
  out.layers.push_back(frontier);

  std::vector<std::pair<int, std::vector<int>>> recorded;
  auto already = [&](int row) {
    return std::any_of(recorded.begin(), recorded.end(),
                       [row](const auto& e) { return e.first == row; });
  };

  static const std::vector<int> kEmpty;
  for (int k = depth; k >= 1; --k) {
    std::vector<int> next = frontier;
    for (int u : frontier) {
      const auto& nb = static_cast<std::size_t>(u) < g.neighbors.size()
                           ? g.neighbors[static_cast<std::size_t>(u)]
                           : kEmpty;
      if (!already(u)) recorded.emplace_back(u, nb);
      next.insert(next.end(), nb.begin(), nb.end());
    }
    sort_unique(next);
    out.layers.push_back(std::move(next));
    frontier = out.layers.back();
  }
  std::sort(recorded.begin(), recorded.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  out.neighbors = std::move(recorded);
  return out;
}

ad::NodeId neighbor_attention(ad::Tape& tape, ad::NodeId h_u, std::span<const ad::NodeId> h_neighbors,
                              ad::NodeId attn_proj, ad::NodeId attn_vec) {
  if (h_neighbors.empty()) throw std::invalid_argument("neighbor_attention: empty neighbor set");
  const ad::NodeId proj_u = tape.matvec(attn_proj, h_u);
  std::vector<ad::NodeId> logits;
  logits.reserve(h_neighbors.size());
  for (ad::NodeId h_v : h_neighbors) {
    const ad::NodeId proj_v = tape.matvec(attn_proj, h_v);
    const std::array<ad::NodeId, 2> cat{proj_u, proj_v};
    logits.push_back(tape.dot(attn_vec, tape.concat(cat)));
  }
  return tape.softmax(tape.relu(tape.concat(logits)));
}

ad::NodeId aggregate(ad::Tape& tape, ad::NodeId h_u, std::span<const ad::NodeId> h_neighbors,
                     const HopLeaves& hop) {
  const std::size_t dim = tape.value(h_u).size();
  ad::NodeId n_u;
  if (h_neighbors.empty()) {
    n_u = tape.zeros(dim);
  } else {
    const ad::NodeId alpha = neighbor_attention(tape, h_u, h_neighbors, hop.attn_proj, hop.attn_vec);
    std::vector<ad::NodeId> transformed;
    transformed.reserve(h_neighbors.size());
    for (ad::NodeId h_v : h_neighbors)
      transformed.push_back(tape.relu(tape.affine(hop.neigh_w, h_v, hop.neigh_b)));
    n_u = tape.weighted_sum(transformed, alpha);
  }
  const std::array<ad::NodeId, 2> cat{h_u, n_u};
  return tape.relu(tape.affine(hop.comb_w, tape.concat(cat), hop.comb_b));
}

ad::NodeId score(ad::Tape& tape, ad::NodeId h_ad, ad::NodeId h_c) {
  const std::size_t dim = tape.value(h_ad).size();
  if (dim != tape.value(h_c).size()) throw std::invalid_argument("score: dimension mismatch");
  return tape.scale(tape.dot(h_ad, h_c), 1.0 / std::sqrt(static_cast<double>(dim)));
}

ad::NodeId intention_embedding(ad::Tape& tape, const GidLeaves& leaves, const IndexedLayers& layers,
                               std::span<const int> click_rows, int ad_row) {
  const auto dim = static_cast<std::size_t>(leaves.dim);
  if (click_rows.empty()) return tape.zeros(dim);
  if (layers.layers.empty()) throw std::invalid_argument("intention_embedding: missing layers");
  const int depth = static_cast<int>(layers.layers.size()) - 1;
  if (depth > static_cast<int>(leaves.hops.size()))
    throw std::invalid_argument("intention_embedding: more layers than hop parameter sets");

  // h^(0) for every node in S^(0).
  std::unordered_map<int, ad::NodeId> prev;
  prev.reserve(layers.layers.back().size() * 2);
  for (int row : layers.layers.back())
    prev.emplace(row, tape.embed_lookup(leaves.item_table, static_cast<std::size_t>(row)));

  std::vector<int> nb_sorted;
  std::vector<ad::NodeId> nb_states;
  for (int k = 1; k <= depth; ++k) {
    const auto& frontier = layers.layers[static_cast<std::size_t>(depth - k)];  // S^(k)
    const HopLeaves& hop = leaves.hops[static_cast<std::size_t>(k - 1)];
    std::unordered_map<int, ad::NodeId> cur;
    cur.reserve(frontier.size() * 2);
    for (int v : frontier) {
      const std::vector<int>* nb = layers.neighbors_of(v);
      nb_sorted.clear();
      if (nb != nullptr) nb_sorted.assign(nb->begin(), nb->end());
      // Ascending-row accumulation keeps the output independent of the
      // neighbor list order.
      std::sort(nb_sorted.begin(), nb_sorted.end());
      nb_states.clear();
      for (int u : nb_sorted) nb_states.push_back(prev.at(u));
      cur.emplace(v, aggregate(tape, prev.at(v), nb_states, hop));
    }
    prev = std::move(cur);
  }

  const ad::NodeId h_ad = tape.embed_lookup(leaves.item_table, static_cast<std::size_t>(ad_row));
  std::vector<ad::NodeId> reps, scores;
  reps.reserve(click_rows.size());
  scores.reserve(click_rows.size());
  for (int row : click_rows) {
    const ad::NodeId h_c = prev.at(row);
    reps.push_back(h_c);
    scores.push_back(score(tape, h_ad, h_c));
  }
  const ad::NodeId attn = tape.softmax(tape.concat(scores));
  return tape.weighted_sum(reps, attn);
}

std::vector<double> neighbor_attention_values(const std::vector<double>& h_u,
                                              const std::vector<std::vector<double>>& neighbors,
                                              const ad::Tensor& attn_proj, const ad::Tensor& attn_vec) {
  ad::Tape tape;
  const ad::NodeId u = tape.input(h_u);
  std::vector<ad::NodeId> ids;
  ids.reserve(neighbors.size());
  for (const auto& h : neighbors) ids.push_back(tape.input(h));
  const ad::NodeId alpha =
      neighbor_attention(tape, u, ids, tape.input(attn_proj), tape.input(attn_vec));
  auto v = tape.value(alpha);
  return {v.begin(), v.end()};
}

std::vector<double> aggregate_values(const std::vector<double>& h_u,
                                     const std::vector<std::vector<double>>& neighbors,
                                     const HopParams& hop) {
  ad::Tape tape;
  const ad::NodeId u = tape.input(h_u);
  std::vector<ad::NodeId> ids;
  ids.reserve(neighbors.size());
  for (const auto& h : neighbors) ids.push_back(tape.input(h));
  const ad::NodeId out = aggregate(tape, u, ids, bind_hop_inputs(tape, hop));
  auto v = tape.value(out);
  return {v.begin(), v.end()};
}

double score_value(const std::vector<double>& h_ad, const std::vector<double>& h_c) {
  ad::Tape tape;
  return tape.value(score(tape, tape.input(h_ad), tape.input(h_c)))[0];
}

namespace {

IntentionEmbedding run_readout(const IndexedLayers& layers, const std::string& ad_item,
                               const std::vector<std::string>& pre_clicks,
                               const ad::Tensor& item_table, const Vocab& items,
                               const GidParams& params) {
  ad::Tape tape;
  const GidLeaves leaves = bind_inputs(tape, item_table, params);
  std::vector<int> click_rows;
  click_rows.reserve(pre_clicks.size());
  for (const auto& c : pre_clicks) click_rows.push_back(items.lookup(c));
  const ad::NodeId uii =
      intention_embedding(tape, leaves, layers, click_rows, items.lookup(ad_item));
  auto v = tape.value(uii);
  return IntentionEmbedding{{v.begin(), v.end()}};
}

IndexedLayers index_layers(const cograph::DiffusionLayers& layers, const Vocab& items) {
  IndexedLayers out;
  for (const auto& layer : layers.layers) {
    std::vector<int> rows;
    rows.reserve(layer.size());
    for (const auto& id : layer) rows.push_back(items.lookup(id));
    sort_unique(rows);
    out.layers.push_back(std::move(rows));
  }
  for (const auto& [id, nbs] : layers.neighbor_map) {
    std::vector<int> rows;
    rows.reserve(nbs.size());
    for (const auto& [nb, w] : nbs) {
      const int r = items.lookup(nb);
      if (r != Vocab::kUnk) rows.push_back(r);
    }
    out.neighbors.emplace_back(items.lookup(id), std::move(rows));
  }
  std::sort(out.neighbors.begin(), out.neighbors.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  return out;
}

}  // namespace

IntentionEmbedding gid_forward(const std::string& ad_item, const std::vector<std::string>& pre_clicks,
                               int depth, const cograph::CoGraph& g, int n,
                               const ad::Tensor& item_table, const Vocab& items,
                               const GidParams& params) {
  if (pre_clicks.empty())
    return IntentionEmbedding{std::vector<double>(item_table.cols(), 0.0)};
  const IndexedGraph idx = IndexedGraph::build(g, items, n);
  std::vector<int> seeds;
  seeds.reserve(pre_clicks.size());
  for (const auto& c : pre_clicks) seeds.push_back(items.lookup(c));
  const IndexedLayers layers = diffuse_indexed(idx, seeds, depth);
  return run_readout(layers, ad_item, pre_clicks, item_table, items, params);
}

IntentionEmbedding gid_forward_with_layers(const std::string& ad_item,
                                           const std::vector<std::string>& pre_clicks,
                                           const cograph::DiffusionLayers& layers,
                                           const ad::Tensor& item_table, const Vocab& items,
                                           const GidParams& params) {
  if (pre_clicks.empty())
    return IntentionEmbedding{std::vector<double>(item_table.cols(), 0.0)};
  return run_readout(index_layers(layers, items), ad_item, pre_clicks, item_table, items, params);
}

}  // namespace gin::gid
