#pragma once

#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "gin/ctrmodel.hpp"

namespace gin::eval {

// Probability that a uniformly random (positive, negative) pair is ordered
// correctly; ties earn 0.5. Computed exactly via the rank-sum statistic.
// Requires at least one positive and one negative label.
double auc(std::span<const double> scores, std::span<const int> labels);

struct BucketStat {
  int bucket = 0;                     // index into bucket_labels()
  std::size_t count = 0;              // samples whose history length falls in the band
  std::vector<std::optional<double>> auc_per_model;  // empty optional: single-class bucket
};

struct ModelScores {
  std::string name;
  std::vector<double> scores;  // aligned with the sample list
};

struct EvalReport {
  std::size_t num_samples = 0;
  std::vector<std::string> model_names;
  std::vector<double> overall_auc;
  std::vector<double> logloss;
  std::vector<BucketStat> per_bucket;
};

// History-length bands for the bucket breakdown: 0, 1-2, 3-5, 6-10, 11+.
const std::vector<std::string>& bucket_labels();
int bucket_of(std::size_t pre_clicks_len);

// Per-bucket AUC for each scored model. Buckets where a model sees a single
// class report no AUC for it.
EvalReport bucket_report(const std::vector<ctr::Sample>& samples,
                         const std::vector<ModelScores>& models);

// Human-readable aligned table.
void print_report(const EvalReport& report, std::ostream& out);
// Machine-readable `metric<TAB>value` lines.
void write_report_kv(const EvalReport& report, std::ostream& out);

}  // namespace gin::eval
