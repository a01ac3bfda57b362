#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "adscreen/metrics.hpp"
#include "adscreen/text_model.hpp"

namespace adscreen {

struct FoldResult {
  int fold = 1;  // 1-based
  std::vector<std::string> test_subjects;
  BinaryMetrics metrics;  // at the report's best weight
  std::optional<double> auc;
  std::vector<RocPoint> roc;
};

struct EvalReport {
  std::vector<FoldResult> folds;
  BinaryMetrics pooled;
  std::optional<double> pooled_auc;
  std::vector<RocPoint> pooled_roc;
  std::map<std::string, BootstrapResult> intervals;  // metric name -> 95% CI
  std::vector<WeightRow> sweep;                      // pooled metrics per candidate weight
  double best_weight = 0.0;  // sweep row with the highest accuracy (first on ties)
  SubgroupTables subgroups;  // at best_weight
  uint64_t config_hash = 0;
  uint64_t seed = 0;
  std::string version;
};

// Full report as pretty-printed JSON; absent metrics serialize as null.
std::string report_json(const EvalReport& report);
void save_report(const EvalReport& report, const std::string& path);

// "fold,fpr,tpr,threshold" rows: per-fold curves first (fold = 1..k), then
// the pooled curve (fold = pooled).
void save_roc_csv(const EvalReport& report, const std::string& path);

// Shortest decimal form that parses back to the same double.
std::string format_double(double v);

// Predictions CSV: subject_id,label,p_a,p_t,age,gender,source. Absent
// branch probabilities are empty fields; values round-trip exactly.
void save_predictions(const std::string& path, const std::vector<SubjectPrediction>& preds,
                      const std::string& source);
std::vector<SubjectPrediction> load_predictions(const std::string& path,
                                                std::string* source = nullptr);

// Weight-sweep table as CSV: w,accuracy,f1,specificity,sensitivity,tp,fp,fn,tn.
void save_sweep_csv(const std::vector<WeightRow>& rows, const std::string& path);

// Transcript with the top segments' token spans flagged >>> like this <<<,
// followed by the ranked segment list.
std::string render_highlights(const Transcript& transcript, const TextPrediction& pred);

// "<artifact>.meta.json" recording the run triple that produced the file.
void write_sidecar(const std::string& artifact_path, uint64_t config_hash, uint64_t seed);

}  // namespace adscreen
