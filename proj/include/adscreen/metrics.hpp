#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "adscreen/fusion.hpp"

namespace adscreen {

// AD is the positive class throughout.
struct ConfusionCounts {
  int tp = 0, fp = 0, fn = 0, tn = 0;

  int total() const { return tp + fp + fn + tn; }
};

// Ratios that are 0/0 are reported as absent rather than clamped to a value:
// a set without AD subjects has no sensitivity, not sensitivity zero.
struct BinaryMetrics {
  ConfusionCounts counts;
  double accuracy = 0.0;
  std::optional<double> f1;           // 2TP / (2TP + FP + FN), on the AD class
  std::optional<double> specificity;  // TN / (TN + FP)
  std::optional<double> sensitivity;  // TP / (TP + FN)
};

ConfusionCounts count_confusion(const std::vector<int>& labels, const std::vector<int>& predicted);
BinaryMetrics metrics_from_counts(const ConfusionCounts& c);

// Thresholds the probabilities (ties -> AD) and summarizes the confusion
// matrix. Errors on empty input or mismatched lengths.
BinaryMetrics compute_metrics(const std::vector<int>& labels, const std::vector<double>& probs,
                              double threshold = 0.5);

struct RocPoint {
  double fpr = 0.0, tpr = 0.0;
  double threshold = 0.0;
};

struct RocResult {
  double auc = 0.0;
  std::vector<RocPoint> points;
};

// Threshold sweep over the unique scores, descending, so tied scores enter a
// point together; anchored at (0,0) and (1,1). AUC is the trapezoidal area,
// which equals the pairwise ranking statistic with ties counted half. Both
// classes must be present.
RocResult roc_auc(const std::vector<int>& labels, const std::vector<double>& scores);

struct BootstrapResult {
  double lo = 0.0, hi = 0.0;
  int skipped = 0;  // resamples abandoned after bounded redraws
};

// Percentile bootstrap over subject resamples: draws `resamples` index
// multisets of size n with replacement and takes the (1-level)/2 and
// 1-(1-level)/2 percentiles of the metric values. A resample on which the
// metric is undefined is redrawn a bounded number of times, then skipped.
// Deterministic per seed.
BootstrapResult bootstrap_ci(
    const std::function<std::optional<double>(const std::vector<int>&)>& metric, int n,
    int resamples = 1000, double level = 0.95, uint64_t seed = 1);

// One row of the fusion-weight table: metrics of p_c at that weight.
struct WeightRow {
  double w = 0.0;
  BinaryMetrics metrics;
};

// Evaluates the fused model at each weight; every subject needs both branch
// probabilities. w = 0 reproduces the audio-only row and w >= kTextOnlyWeight
// the text-only row exactly.
std::vector<WeightRow> weight_sweep(const std::vector<SubjectPrediction>& preds,
                                    const std::vector<double>& weights = {0.0, 1.0, 1.5, 2.0,
                                                                          kTextOnlyWeight},
                                    double threshold = 0.5);

struct SubgroupRow {
  std::string name;
  int count = 0;
  double fraction = 0.0;  // of subjects the table covers; sums to 1
  std::optional<BinaryMetrics> metrics;  // absent when the row is empty
};

struct SubgroupTables {
  std::vector<SubgroupRow> age;     // bins 46-55 .. 86-95, inclusive bounds
  std::vector<SubgroupRow> gender;  // female, male
};

// Bias report over the fused probability p_c, which must be present for all
// subjects. Subjects outside every age bin are left out of the age table.
SubgroupTables subgroup_report(const std::vector<SubjectPrediction>& preds,
                               double threshold = 0.5);

}  // namespace adscreen
