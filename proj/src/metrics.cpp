#include "adscreen/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "adscreen/error.hpp"
#include "adscreen/rng.hpp"

namespace adscreen {

ConfusionCounts count_confusion(const std::vector<int>& labels, const std::vector<int>& predicted) {
  if (labels.size() != predicted.size()) throw Error("count_confusion: label/prediction count mismatch");
  ConfusionCounts c;
  for (size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i], p = predicted[i];
    if ((y != 0 && y != 1) || (p != 0 && p != 1))
      throw Error("count_confusion: labels and predictions must be 0 or 1");
    if (y == 1)
      (p == 1 ? c.tp : c.fn)++;
    else
      (p == 1 ? c.fp : c.tn)++;
  }
  return c;
}

BinaryMetrics metrics_from_counts(const ConfusionCounts& c) {
  if (c.total() == 0) throw Error("metrics_from_counts: empty confusion matrix");
  BinaryMetrics m;
  m.counts = c;
  m.accuracy = static_cast<double>(c.tp + c.tn) / c.total();
  if (2 * c.tp + c.fp + c.fn > 0) m.f1 = 2.0 * c.tp / (2.0 * c.tp + c.fp + c.fn);
  if (c.tn + c.fp > 0) m.specificity = static_cast<double>(c.tn) / (c.tn + c.fp);
  if (c.tp + c.fn > 0) m.sensitivity = static_cast<double>(c.tp) / (c.tp + c.fn);
  return m;
}

BinaryMetrics compute_metrics(const std::vector<int>& labels, const std::vector<double>& probs,
                              double threshold) {
  if (labels.empty()) throw Error("compute_metrics: empty predictions");
  if (labels.size() != probs.size()) throw Error("compute_metrics: label/probability count mismatch");
  std::vector<int> predicted(probs.size());
  for (size_t i = 0; i < probs.size(); ++i) predicted[i] = classify(probs[i], threshold);
  return metrics_from_counts(count_confusion(labels, predicted));
}

RocResult roc_auc(const std::vector<int>& labels, const std::vector<double>& scores) {
  if (labels.size() != scores.size()) throw Error("roc_auc: label/score count mismatch");
  int pos = 0, neg = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw Error("roc_auc: labels must be 0 or 1");
    (y == 1 ? pos : neg)++;
  }
  if (pos == 0 || neg == 0) throw Error("roc_auc: needs both classes");

  std::vector<size_t> order(labels.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return scores[a] > scores[b]; });

  RocResult r;
  r.points.push_back({0.0, 0.0, std::numeric_limits<double>::infinity()});
  // Walk thresholds from high to low; a group of tied scores crosses the
  // threshold together, producing one point per unique score.
  int tp = 0, fp = 0;
  size_t i = 0;
  while (i < order.size()) {
    const double t = scores[order[i]];
    while (i < order.size() && scores[order[i]] == t) {
      (labels[order[i]] == 1 ? tp : fp)++;
      ++i;
    }
    r.points.push_back({static_cast<double>(fp) / neg, static_cast<double>(tp) / pos, t});
  }
  for (size_t j = 1; j < r.points.size(); ++j) {
    const auto& a = r.points[j - 1];
    const auto& b = r.points[j];
    r.auc += (b.fpr - a.fpr) * (a.tpr + b.tpr) / 2.0;
  }
  return r;
}

BootstrapResult bootstrap_ci(
    const std::function<std::optional<double>(const std::vector<int>&)>& metric, int n,
    int resamples, double level, uint64_t seed) {
  if (n <= 0) throw Error("bootstrap_ci: empty predictions");
  if (resamples <= 0) throw Error("bootstrap_ci: resamples must be positive");
  if (!(level > 0.0 && level < 1.0)) throw Error("bootstrap_ci: level must be in (0,1)");

  constexpr int kMaxRedraws = 100;
  Rng rng(Rng::derive(seed, "bootstrap"));
  std::vector<double> values;
  values.reserve(static_cast<size_t>(resamples));
  std::vector<int> idx(static_cast<size_t>(n));
  BootstrapResult out;
  for (int r = 0; r < resamples; ++r) {
    bool got = false;
    for (int attempt = 0; attempt < kMaxRedraws && !got; ++attempt) {
      for (auto& j : idx) j = static_cast<int>(rng.below(n));
      if (const auto v = metric(idx)) {
        values.push_back(*v);
        got = true;
      }
    }
    if (!got) out.skipped++;
  }
  if (values.empty()) throw Error("bootstrap_ci: metric undefined on every resample");

  std::sort(values.begin(), values.end());
  auto percentile = [&](double q) {
    const double pos = q * static_cast<double>(values.size() - 1);
    const size_t lo = static_cast<size_t>(pos);
    const size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] * (1.0 - frac) + values[hi] * frac;
  };
  const double tail = (1.0 - level) / 2.0;
  out.lo = percentile(tail);
  out.hi = percentile(1.0 - tail);
  return out;
}

std::vector<WeightRow> weight_sweep(const std::vector<SubjectPrediction>& preds,
                                    const std::vector<double>& weights, double threshold) {
  if (preds.empty()) throw Error("weight_sweep: empty predictions");
  std::vector<int> labels;
  for (const auto& s : preds) {
    if (!s.p_a || !s.p_t)
      throw Error("weight_sweep: subject \"" + s.subject_id + "\" is missing a branch probability");
    labels.push_back(s.label);
  }
  std::vector<WeightRow> rows;
  std::vector<double> fused(preds.size());
  for (double w : weights) {
    for (size_t i = 0; i < preds.size(); ++i) fused[i] = late_fuse(*preds[i].p_a, *preds[i].p_t, w);
    rows.push_back({w, compute_metrics(labels, fused, threshold)});
  }
  return rows;
}

namespace {

SubgroupRow make_row(std::string name, const std::vector<const SubjectPrediction*>& members,
                     int covered, double threshold) {
  SubgroupRow row;
  row.name = std::move(name);
  row.count = static_cast<int>(members.size());
  row.fraction = covered > 0 ? static_cast<double>(row.count) / covered : 0.0;
  if (!members.empty()) {
    std::vector<int> labels;
    std::vector<double> probs;
    for (const auto* s : members) {
      labels.push_back(s->label);
      probs.push_back(*s->p_c);
    }
    row.metrics = compute_metrics(labels, probs, threshold);
  }
  return row;
}

}  // namespace

SubgroupTables subgroup_report(const std::vector<SubjectPrediction>& preds, double threshold) {
  if (preds.empty()) throw Error("subgroup_report: empty predictions");
  for (const auto& s : preds)
    if (!s.p_c)
      throw Error("subgroup_report: subject \"" + s.subject_id + "\" has no fused probability");

  SubgroupTables tables;

  static constexpr int kBins[][2] = {{46, 55}, {56, 65}, {66, 75}, {76, 85}, {86, 95}};
  std::vector<std::vector<const SubjectPrediction*>> bins(5);
  int covered = 0;
  for (const auto& s : preds)
    for (size_t b = 0; b < 5; ++b)
      if (s.age >= kBins[b][0] && s.age <= kBins[b][1]) {
        bins[b].push_back(&s);
        ++covered;
        break;
      }
  for (size_t b = 0; b < 5; ++b)
    tables.age.push_back(make_row(std::to_string(kBins[b][0]) + "-" + std::to_string(kBins[b][1]),
                                  bins[b], covered, threshold));

  std::vector<const SubjectPrediction*> female, male;
  for (const auto& s : preds) {
    if (s.gender == "female") female.push_back(&s);
    if (s.gender == "male") male.push_back(&s);
  }
  const int by_gender = static_cast<int>(female.size() + male.size());
  tables.gender.push_back(make_row("female", female, by_gender, threshold));
  tables.gender.push_back(make_row("male", male, by_gender, threshold));
  return tables;
}

}  // namespace adscreen
