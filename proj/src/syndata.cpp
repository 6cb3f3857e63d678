#include "gin/syndata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "gin/error.hpp"

namespace gin::syndata {

void SynConfig::validate() const {
  if (num_clusters < 1) throw DataError("syndata: need at least one cluster");
  if (num_items < num_clusters)
    throw DataError("syndata: infeasible config, cluster size would be 0");
  if (num_users < 1) throw DataError("syndata: need at least one user");
  if (sessions_per_user < 1) throw DataError("syndata: sessions_per_user must be >= 1");
  if (session_len_range.first < 1 || session_len_range.second < session_len_range.first)
    throw DataError("syndata: bad session length range");
  if (bridge_prob < 0.0 || bridge_prob > 1.0) throw DataError("syndata: bridge_prob outside [0,1]");
  if (sparsity_mix < 0.0 || sparsity_mix > 1.0) throw DataError("syndata: sparsity_mix outside [0,1]");
  if (test_user_fraction < 0.0 || test_user_fraction > 1.0)
    throw DataError("syndata: test_user_fraction outside [0,1]");
  if (samples_per_user < 1) throw DataError("syndata: samples_per_user must be >= 1");
}

namespace {

std::string padded(const char* prefix, int value, int width) {
  std::string digits = std::to_string(value);
  std::string out = prefix;
  for (int i = static_cast<int>(digits.size()); i < width; ++i) out += '0';
  out += digits;
  return out;
}

int digits_for(int max_value) {
  int width = 1;
  while (max_value >= 10) {
    max_value /= 10;
    ++width;
  }
  return width;
}

constexpr int kMaxEmittedClicks = 20;

}  // namespace

int cluster_of_item(const SynConfig& cfg, int item_index) {
  const int base = cfg.num_items / cfg.num_clusters;
  return std::min(item_index / base, cfg.num_clusters - 1);
}

std::string item_name(const SynConfig& cfg, int item_index) {
  return padded("i", item_index, digits_for(cfg.num_items - 1));
}

int item_index_of(const SynConfig& cfg, const std::string& item_id) {
  if (item_id.empty() || item_id[0] != 'i') throw DataError("syndata: not a generated item id");
  (void)cfg;
  return std::stoi(item_id.substr(1));
}

SynOutput generate(const SynConfig& cfg) {
  cfg.validate();

  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const int clusters = cfg.num_clusters;
  const int base = cfg.num_items / clusters;

  // Uniform item of one cluster (last cluster holds the remainder).
  auto pick_in_cluster = [&](int c) {
    const int lo = c * base;
    const int hi = (c == clusters - 1) ? cfg.num_items : (c + 1) * base;
    return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo));
  };
  auto cluster_query = [&](int c) { return padded("cat", c, digits_for(clusters - 1)); };
  const int user_width = digits_for(cfg.num_users - 1);

  SynOutput out;
  const double p_pos = 1.0 / (1.0 + std::exp(-cfg.ctr_signal));
  const double p_neg = 1.0 / (1.0 + std::exp(cfg.ctr_signal));

  for (int u = 0; u < cfg.num_users; ++u) {
    const std::string user = padded("u", u, user_width);
    const int home = static_cast<int>(rng() % static_cast<std::uint64_t>(clusters));
    const int bridged = (home + 1) % clusters;
    const bool sparse = u01(rng) < cfg.sparsity_mix;
    const bool held_out = u01(rng) < cfg.test_user_fraction;

    // Click history. Session starts are spaced far beyond any session gap,
    // clicks within a session 10 s apart.
    std::vector<int> history;
    std::int64_t session_start = 1'000'000;
    auto emit_session = [&](int len, bool hop) {
      const int hop_at = (len + 1) / 2;
      for (int j = 0; j < len; ++j) {
        const int item = pick_in_cluster(hop && j >= hop_at ? bridged : home);
        history.push_back(item);
        out.clicklog_lines.push_back(user + '\t' + std::to_string(session_start + 10 * j) + '\t' +
                                     cluster_query(home) + '\t' + item_name(cfg, item));
      }
      session_start += 100'000;
    };

    if (sparse) {
      const int total = static_cast<int>(rng() % 3);  // 0, 1, or 2 clicks
      if (total > 0) emit_session(total, false);
    } else {
      std::uniform_int_distribution<int> len_dist(cfg.session_len_range.first,
                                                  cfg.session_len_range.second);
      for (int s = 0; s < cfg.sessions_per_user; ++s) {
        const int len = len_dist(rng);
        emit_session(len, u01(rng) < cfg.bridge_prob);
      }
    }

    std::vector<std::string> pre_clicks;
    {
      const std::size_t take =
          std::min(history.size(), static_cast<std::size_t>(kMaxEmittedClicks));
      for (std::size_t i = history.size() - take; i < history.size(); ++i)
        pre_clicks.push_back(item_name(cfg, history[i]));
    }

    auto pick_unrelated = [&]() {
      if (clusters < 3) return bridged;
      const int step = 2 + static_cast<int>(rng() % static_cast<std::uint64_t>(clusters - 2));
      return (home + step) % clusters;
    };

    for (int j = 0; j < cfg.samples_per_user; ++j) {
      int ad_cluster;
      if (held_out) {
        // Held-out users only see bridged-cluster ads as the related side;
        // the contrast class comes from unrelated clusters.
        ad_cluster = (j % 2 == 0) ? bridged : pick_unrelated();
      } else {
        const double r = u01(rng);
        if (r < 0.25)
          ad_cluster = home;
        else if (r < 0.5)
          ad_cluster = bridged;
        else
          ad_cluster = pick_unrelated();
      }
      const bool related = ad_cluster == home || ad_cluster == bridged;
      const int label = u01(rng) < (related ? p_pos : p_neg) ? 1 : 0;

      ctr::Sample s;
      s.query = cluster_query(home);
      s.user_id = user;
      s.ad_item = item_name(cfg, pick_in_cluster(ad_cluster));
      s.pre_clicks = pre_clicks;
      s.label = label;
      (held_out ? out.test : out.train).push_back(std::move(s));
    }
  }
  return out;
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  for (const auto& line : lines) out << line << '\n';
  if (!out) throw DataError("write failed for '" + path + "'");
}

void write_samples(const std::string& path, const std::vector<ctr::Sample>& samples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  for (const auto& s : samples) out << ctr::format_sample(s) << '\n';
  if (!out) throw DataError("write failed for '" + path + "'");
}

}  // namespace gin::syndata
