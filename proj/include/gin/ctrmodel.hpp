#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "gin/cograph.hpp"
#include "gin/gid.hpp"
#include "gin/tape.hpp"
#include "gin/vocab.hpp"

namespace gin::ctr {

struct Sample {
  std::string query;
  std::string user_id;
  std::string ad_item;
  std::vector<std::string> pre_clicks;  // oldest -> newest, at most L entries
  int label = 0;
};

enum class Aggregator { kGin, kSumpoolBase };

std::string aggregator_name(Aggregator a);
Aggregator parse_aggregator(const std::string& name);

struct TrainConfig {
  int depth = 2;       // K
  int neighbors = 10;  // top-N
  int dim = 16;        // embedding width
  int clicks = 20;     // L, pre_clicks truncation
  double lr = 1e-3;
  int epochs = 1;
  int batch = 64;
  std::uint64_t seed = 1;
  Aggregator aggregator = Aggregator::kGin;
  int threads = 1;
  std::vector<int> mlp_hidden = {64, 32, 16, 8};  // final layer emits 1 logit

  void validate() const;
};

// All learnable state plus the vocabularies that map raw strings onto
// table rows. Ads, clicked items, and graph nodes share item_table.
struct ModelParams {
  int dim = 0;
  int depth = 0;
  std::vector<int> mlp_hidden;
  Vocab items, queries, users;
  ad::Tensor item_table, query_table, user_table;
  gid::GidParams gid;
  std::vector<ad::Tensor> mlp_w, mlp_b;

  // Stable (name, tensor) enumeration; defines optimizer and checkpoint order.
  std::vector<std::pair<std::string, ad::Tensor*>> named_tensors();
};

// Sample TSV: `label<TAB>query<TAB>user_id<TAB>ad_item<TAB>c1,c2,...` with
// clicks oldest -> newest; the clicks field may be empty. Histories longer
// than max_clicks keep only the most recent entries.
std::vector<Sample> parse_samples(std::istream& in, int max_clicks);
std::vector<Sample> load_samples_file(const std::string& path, int max_clicks);
std::string format_sample(const Sample& s);

// Item vocabulary covers graph nodes (sorted) before sample items; query
// and user vocabularies follow sample order.
void build_vocabs(ModelParams& params, const cograph::CoGraph& g, const std::vector<Sample>& data);

// Weights ~ Uniform(-0.05, 0.05) from one seeded generator, biases zero.
// Draw order: item/query/user tables, per-hop gid weights, MLP weights.
ModelParams init_params(const TrainConfig& cfg, Vocab items, Vocab queries, Vocab users,
                        std::uint64_t seed);

// pctr for one sample against read-only state; scratch tape is reset here.
double forward(const Sample& s, ModelParams& params, const gid::IndexedGraph& idx,
               const TrainConfig& cfg, ad::Tape& scratch);
double forward(const Sample& s, ModelParams& params, const gid::IndexedGraph& idx,
               const TrainConfig& cfg);

// Per-sample cross-entropy term node on the caller's tape.
ad::NodeId build_sample_loss(ad::Tape& tape, const Sample& s, ModelParams& params,
                             const gid::IndexedGraph& idx, const TrainConfig& cfg);
// Mean cross-entropy over the batch as one scalar node.
ad::NodeId build_batch_loss(ad::Tape& tape, std::span<const Sample> batch, ModelParams& params,
                            const gid::IndexedGraph& idx, const TrainConfig& cfg);

// Mean of -(y ln p + (1-y) ln(1-p)) with p clamped to [1e-12, 1-1e-12].
double cross_entropy(std::span<const double> pctrs, std::span<const int> labels);

struct TrainOutput {
  ModelParams params;
  std::vector<double> epoch_loss;     // mean sample loss per epoch
  std::vector<double> epoch_seconds;  // wall clock per epoch
  double final_train_logloss = 0.0;   // full pass with the final weights
  double final_train_auc = 0.0;       // NaN when the data is single-class
};

// Mini-batch Adam (beta1 0.9, beta2 0.999, eps 1e-8) over every parameter
// tensor: MLP, all embedding tables, and the per-hop gid weights. Gradient
// accumulation follows sample index order regardless of thread count.
TrainOutput train(const std::vector<Sample>& data, const cograph::CoGraph& g,
                  const TrainConfig& cfg);

// Scores for a sample list with a shared graph index.
std::vector<double> score_samples(const std::vector<Sample>& samples, ModelParams& params,
                                  const cograph::CoGraph& g, const TrainConfig& cfg);

struct Checkpoint {
  ModelParams params;
  TrainConfig config;
};

// Text checkpoint: config header, vocabularies, then tensors at 17
// significant digits (round-trips doubles bitwise).
void save_checkpoint(const ModelParams& params, const TrainConfig& cfg, std::ostream& out);
void save_checkpoint_file(const ModelParams& params, const TrainConfig& cfg,
                          const std::string& path);
Checkpoint load_checkpoint(std::istream& in);
Checkpoint load_checkpoint_file(const std::string& path);

// Guards evaluating a checkpoint under contradicting flags.
void require_compatible(const TrainConfig& from_checkpoint, const TrainConfig& requested);

struct GradCheckConfig {
  std::uint64_t seed = 7;
  int dim = 8;
  int depth = 2;
  int neighbors = 3;
  int batch = 4;
  int graph_items = 20;
  double eps = 1e-5;
  double tol = 1e-4;
  // Initial weights are rescaled so gradients sit far above the
  // finite-difference noise floor.
  double param_scale = 16.0;
};

// Finite-difference check of the full batch loss on a small random
// instance: random co-occurrence graph, random samples, every parameter
// tensor perturbed elementwise.
ad::GradCheckReport gradcheck_model(const GradCheckConfig& cfg);

}  // namespace gin::ctr
