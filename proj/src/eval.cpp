#include "gin/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "gin/error.hpp"

namespace gin::eval {

double auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw DataError("auc: scores and labels differ in length");
  std::size_t positives = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw DataError("auc: labels must be 0 or 1");
    positives += static_cast<std::size_t>(y);
  }
  const std::size_t negatives = scores.size() - positives;
  if (positives == 0 || negatives == 0)
    throw DataError("auc: undefined for single-class input");

  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Average ranks within tied groups give every tie 0.5 credit.
  double pos_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // 1-based
    for (std::size_t k = i; k < j; ++k)
      if (labels[idx[k]] == 1) pos_rank_sum += avg_rank;
    i = j;
  }
  const double p = static_cast<double>(positives);
  const double n = static_cast<double>(negatives);
  return (pos_rank_sum - p * (p + 1.0) / 2.0) / (p * n);
}

const std::vector<std::string>& bucket_labels() {
  static const std::vector<std::string> labels = {"0", "1-2", "3-5", "6-10", "11+"};
  return labels;
}

int bucket_of(std::size_t len) {
  if (len == 0) return 0;
  if (len <= 2) return 1;
  if (len <= 5) return 2;
  if (len <= 10) return 3;
  return 4;
}

EvalReport bucket_report(const std::vector<ctr::Sample>& samples,
                         const std::vector<ModelScores>& models) {
  for (const auto& m : models)
    if (m.scores.size() != samples.size())
      throw DataError("bucket_report: scores for model '" + m.name + "' misaligned with samples");

  EvalReport report;
  report.num_samples = samples.size();
  for (const auto& m : models) report.model_names.push_back(m.name);

  std::vector<int> labels;
  labels.reserve(samples.size());
  for (const auto& s : samples) labels.push_back(s.label);

  for (const auto& m : models) {
    report.overall_auc.push_back(auc(m.scores, labels));
    report.logloss.push_back(ctr::cross_entropy(m.scores, labels));
  }

  const int num_buckets = static_cast<int>(bucket_labels().size());
  for (int b = 0; b < num_buckets; ++b) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < samples.size(); ++i)
      if (bucket_of(samples[i].pre_clicks.size()) == b) members.push_back(i);
    if (members.empty()) continue;

    BucketStat stat;
    stat.bucket = b;
    stat.count = members.size();
    std::vector<int> blabels;
    for (std::size_t i : members) blabels.push_back(samples[i].label);
    const bool two_class = std::count(blabels.begin(), blabels.end(), 1) > 0 &&
                           std::count(blabels.begin(), blabels.end(), 0) > 0;
    for (const auto& m : models) {
      if (!two_class) {
        stat.auc_per_model.emplace_back(std::nullopt);
        continue;
      }
      std::vector<double> bscores;
      for (std::size_t i : members) bscores.push_back(m.scores[i]);
      stat.auc_per_model.emplace_back(auc(bscores, blabels));
    }
    report.per_bucket.push_back(std::move(stat));
  }
  return report;
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void print_report(const EvalReport& report, std::ostream& out) {
  std::size_t name_w = 7;
  for (const auto& n : report.model_names) name_w = std::max(name_w, n.size());

  out << "samples: " << report.num_samples << "\n\n";
  out << std::left << std::setw(static_cast<int>(name_w) + 2) << "model"
      << std::setw(12) << "auc" << std::setw(12) << "logloss" << "\n";
  for (std::size_t m = 0; m < report.model_names.size(); ++m) {
    out << std::left << std::setw(static_cast<int>(name_w) + 2) << report.model_names[m]
        << std::setw(12) << fmt(report.overall_auc[m]) << std::setw(12) << fmt(report.logloss[m])
        << "\n";
  }
  if (report.per_bucket.empty()) return;

  out << "\nAUC by pre-click length bucket:\n";
  out << std::left << std::setw(8) << "bucket" << std::setw(8) << "count";
  for (const auto& n : report.model_names) out << std::setw(static_cast<int>(name_w) + 2) << n;
  out << "\n";
  for (const auto& stat : report.per_bucket) {
    out << std::left << std::setw(8) << bucket_labels()[static_cast<std::size_t>(stat.bucket)]
        << std::setw(8) << stat.count;
    for (const auto& a : stat.auc_per_model)
      out << std::setw(static_cast<int>(name_w) + 2) << (a ? fmt(*a) : std::string("-"));
    out << "\n";
  }
}

void write_report_kv(const EvalReport& report, std::ostream& out) {
  out << "samples\t" << report.num_samples << '\n';
  for (std::size_t m = 0; m < report.model_names.size(); ++m) {
    out << "auc/" << report.model_names[m] << '\t' << fmt17(report.overall_auc[m]) << '\n';
    out << "logloss/" << report.model_names[m] << '\t' << fmt17(report.logloss[m]) << '\n';
  }
  for (const auto& stat : report.per_bucket) {
    const std::string& label = bucket_labels()[static_cast<std::size_t>(stat.bucket)];
    out << "bucket/" << label << "/count\t" << stat.count << '\n';
    for (std::size_t m = 0; m < report.model_names.size(); ++m)
      if (stat.auc_per_model[m])
        out << "bucket/" << label << "/auc/" << report.model_names[m] << '\t'
            << fmt17(*stat.auc_per_model[m]) << '\n';
  }
}

}  // namespace gin::eval
