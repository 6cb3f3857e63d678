#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gin/ctrmodel.hpp"

namespace gin::syndata {

// Planted-structure generator: items are partitioned into clusters, each
// cluster bridges to the next one on a ring, and labels depend only on
// whether the ad sits in the user's home or bridged cluster.
struct SynConfig {
  int num_items = 2000;
  int num_clusters = 20;
  int num_users = 5000;
  int sessions_per_user = 3;
  std::pair<int, int> session_len_range = {3, 6};
  double bridge_prob = 0.1;    // chance a session hops to the bridged cluster
  double sparsity_mix = 0.4;   // fraction of users with <= 2 total clicks
  double ctr_signal = 2.0;     // label ~ Bernoulli(sigmoid(ctr_signal * affinity))
  std::uint64_t seed = 1;
  int samples_per_user = 4;
  double test_user_fraction = 0.2;  // held-out users; their ads come from the bridged cluster

  void validate() const;
};

struct SynOutput {
  std::vector<std::string> clicklog_lines;  // click-log TSV rows
  std::vector<ctr::Sample> train;
  std::vector<ctr::Sample> test;
};

SynOutput generate(const SynConfig& cfg);

// Cluster of an item index under the even partition (last cluster absorbs
// the remainder). Exposed so tests can classify edges.
int cluster_of_item(const SynConfig& cfg, int item_index);
std::string item_name(const SynConfig& cfg, int item_index);
int item_index_of(const SynConfig& cfg, const std::string& item_id);

void write_lines(const std::string& path, const std::vector<std::string>& lines);
void write_samples(const std::string& path, const std::vector<ctr::Sample>& samples);

}  // namespace gin::syndata
