#pragma once

#include <span>
#include <string>
#include <vector>

#include "gin/cograph.hpp"
#include "gin/tape.hpp"
#include "gin/vocab.hpp"

namespace gin::gid {

// Learnable tensors for one aggregation hop.
//   attn_proj [d×d], attn_vec [2d]    — attention logits
//   neigh_w [d×d], neigh_b [d]        — per-neighbor transform
//   comb_w [d×2d], comb_b [d]         — combine self state with n_u
struct HopParams {
  ad::Tensor attn_proj;
  ad::Tensor attn_vec;
  ad::Tensor neigh_w;
  ad::Tensor neigh_b;
  ad::Tensor comb_w;
  ad::Tensor comb_b;
};

// One parameter set per hop; hop parameters are not shared across depths.
struct GidParams {
  std::vector<HopParams> hops;

  static GidParams zeros(int depth, int dim);
  int depth() const { return static_cast<int>(hops.size()); }
};

struct IntentionEmbedding {
  std::vector<double> uii;
};

// Tape-bound ids for one hop's parameters.
struct HopLeaves {
  ad::NodeId attn_proj, attn_vec, neigh_w, neigh_b, comb_w, comb_b;
};

struct GidLeaves {
  ad::NodeId item_table;
  std::vector<HopLeaves> hops;
  int dim = 0;
  static GidLeaves bind(ad::Tape& tape, ad::Tensor& item_table, GidParams& params);
};

// Top-N neighbor lists resolved to embedding rows, built once per
// (graph, vocabulary, n). Row 0 (UNK) has no neighbors.
struct IndexedGraph {
  int topn = 0;
  std::vector<std::vector<int>> neighbors;  // by item row

  static IndexedGraph build(const cograph::CoGraph& g, const Vocab& items, int n);
  std::size_t num_rows() const { return neighbors.size(); }
};

// Row-indexed diffusion frontiers; layers[0] = S^(K), layers[K] = S^(0),
// each sorted ascending. `neighbors` records the selected list for every
// expanded row, sorted by row.
struct IndexedLayers {
  std::vector<std::vector<int>> layers;
  std::vector<std::pair<int, std::vector<int>>> neighbors;

  const std::vector<int>* neighbors_of(int row) const;
};

IndexedLayers diffuse_indexed(const IndexedGraph& g, std::span<const int> seed_rows, int depth);

// Attention weights over the neighbor set:
//   logit_v = attn_vec · [attn_proj·h_u ‖ attn_proj·h_v]
//   alpha    = softmax(relu(logits))
ad::NodeId neighbor_attention(ad::Tape& tape, ad::NodeId h_u, std::span<const ad::NodeId> h_neighbors,
                              ad::NodeId attn_proj, ad::NodeId attn_vec);

// One AGGREGATE step. With no neighbors n_u is the zero vector; otherwise
// n_u = Σ_v alpha_v · relu(neigh_w·h_v + neigh_b). The output is
// relu(comb_w·[h_u ‖ n_u] + comb_b).
ad::NodeId aggregate(ad::Tape& tape, ad::NodeId h_u, std::span<const ad::NodeId> h_neighbors,
                     const HopLeaves& hop);

// Scaled dot product (h_ad · h_c) / sqrt(d).
ad::NodeId score(ad::Tape& tape, ad::NodeId h_ad, ad::NodeId h_c);

// Full intention readout over precomputed frontiers. click_rows keeps one
// entry per pre_click occurrence (duplicates share hidden state but get
// their own attention slot). Neighbor lists are consumed in ascending row
// order, so permuting them never changes the result. Returns the uii node;
// empty click_rows yields the zero vector.
ad::NodeId intention_embedding(ad::Tape& tape, const GidLeaves& leaves, const IndexedLayers& layers,
                               std::span<const int> click_rows, int ad_row);

// Plain-value convenience wrappers over the tape versions.
std::vector<double> neighbor_attention_values(const std::vector<double>& h_u,
                                              const std::vector<std::vector<double>>& neighbors,
                                              const ad::Tensor& attn_proj, const ad::Tensor& attn_vec);
std::vector<double> aggregate_values(const std::vector<double>& h_u,
                                     const std::vector<std::vector<double>>& neighbors,
                                     const HopParams& hop);
double score_value(const std::vector<double>& h_ad, const std::vector<double>& h_c);

// String-level entry point on the co-occurrence graph: diffuse the clicks,
// run the per-hop aggregation, and read out the user implicit intention
// embedding.
IntentionEmbedding gid_forward(const std::string& ad_item, const std::vector<std::string>& pre_clicks,
                               int depth, const cograph::CoGraph& g, int n,
                               const ad::Tensor& item_table, const Vocab& items,
                               const GidParams& params);

// Same, but over caller-supplied diffusion layers (lets tests permute
// neighbor lists).
IntentionEmbedding gid_forward_with_layers(const std::string& ad_item,
                                           const std::vector<std::string>& pre_clicks,
                                           const cograph::DiffusionLayers& layers,
                                           const ad::Tensor& item_table, const Vocab& items,
                                           const GidParams& params);

}  // namespace gin::gid
