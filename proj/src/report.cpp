#include "adscreen/report.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "adscreen/error.hpp"
#include "adscreen/manifest.hpp"
#include "adscreen/version.hpp"

namespace adscreen {
namespace {

using nlohmann::json;

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json metrics_json(const BinaryMetrics& m) {
  return json{{"accuracy", m.accuracy},
              {"f1", opt_json(m.f1)},
              {"specificity", opt_json(m.specificity)},
              {"sensitivity", opt_json(m.sensitivity)},
              {"confusion",
               {{"tp", m.counts.tp}, {"fp", m.counts.fp}, {"fn", m.counts.fn}, {"tn", m.counts.tn}}}};
}

json roc_json(const std::vector<RocPoint>& points) {
  json out = json::array();
  for (const auto& p : points) {
    // +inf anchors are not representable in JSON numbers; emit as string.
    json th = std::isfinite(p.threshold) ? json(p.threshold) : json("inf");
    out.push_back({{"fpr", p.fpr}, {"tpr", p.tpr}, {"threshold", th}});
  }
  return out;
}

json subgroup_json(const std::vector<SubgroupRow>& rows) {
  json out = json::array();
  for (const auto& r : rows) {
    json row{{"name", r.name}, {"count", r.count}, {"fraction", r.fraction}};
    if (r.metrics) {
      row["metrics"] = metrics_json(*r.metrics);
    } else {
      row["metrics"] = nullptr;
    }
    out.push_back(std::move(row));
  }
  return out;
}

std::string hash_hex(uint64_t h) {
  char buf[19];
  std::snprintf(buf, sizeof(buf), "0x%016llx", static_cast<unsigned long long>(h));
  return buf;
}

double parse_double_field(const std::string& s, const std::string& what) {
  try {
    size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error("predictions: " + what + " \"" + s + "\" is not a number");
  }
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string report_json(const EvalReport& report) {
  json folds = json::array();
  for (const auto& f : report.folds) {
    json fj = metrics_json(f.metrics);
    fj["fold"] = f.fold;
    fj["test_subjects"] = f.test_subjects;
    fj["auc"] = opt_json(f.auc);
    fj["roc"] = roc_json(f.roc);
    folds.push_back(std::move(fj));
  }

  json pooled = metrics_json(report.pooled);
  pooled["auc"] = opt_json(report.pooled_auc);

  json intervals = json::object();
  for (const auto& [name, ci] : report.intervals)
    intervals[name] = {{"lo", ci.lo}, {"hi", ci.hi}, {"skipped", ci.skipped}};

  json sweep = json::array();
  for (const auto& row : report.sweep) {
    json rj = metrics_json(row.metrics);
    rj["w"] = row.w;
    sweep.push_back(std::move(rj));
  }

  json root{{"version", report.version.empty() ? std::string(kVersion) : report.version},
            {"seed", report.seed},
            {"config_hash", hash_hex(report.config_hash)},
            {"best_weight", report.best_weight},
            {"weight_sweep", std::move(sweep)},
            {"folds", std::move(folds)},
            {"pooled", std::move(pooled)},
            {"intervals", std::move(intervals)},
            {"subgroups",
             {{"age", subgroup_json(report.subgroups.age)},
              {"gender", subgroup_json(report.subgroups.gender)}}}};
  return root.dump(2) + "\n";
}

void save_report(const EvalReport& report, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write report: " + path);
  f << report_json(report);
}

void save_roc_csv(const EvalReport& report, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write ROC csv: " + path);
  f << "fold,fpr,tpr,threshold\n";
  auto rows = [&](const std::string& tag, const std::vector<RocPoint>& points) {
    for (const auto& p : points)
      f << tag << ',' << format_double(p.fpr) << ',' << format_double(p.tpr) << ','
        << format_double(p.threshold) << '\n';
  };
  for (const auto& fold : report.folds) rows(std::to_string(fold.fold), fold.roc);
  rows("pooled", report.pooled_roc);
}

void save_predictions(const std::string& path, const std::vector<SubjectPrediction>& preds,
                      const std::string& source) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write predictions: " + path);
  f << "subject_id,label,p_a,p_t,age,gender,source\n";
  for (const auto& p : preds) {
    f << csv_quote(p.subject_id) << ',' << label_name(p.label) << ','
      << (p.p_a ? format_double(*p.p_a) : "") << ',' << (p.p_t ? format_double(*p.p_t) : "") << ','
      << p.age << ',' << p.gender << ',' << source << '\n';
  }
}

std::vector<SubjectPrediction> load_predictions(const std::string& path, std::string* source) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open predictions: " + path);
  std::vector<std::string> fields;
  if (!csv_read_record(in, fields)) throw Error("predictions file is empty: " + path);
  const std::string joined = [&] {
    std::string s;
    for (size_t i = 0; i < fields.size(); ++i) s += (i ? "," : "") + fields[i];
    return s;
  }();
  if (joined != "subject_id,label,p_a,p_t,age,gender,source")
    throw Error("predictions: unexpected header \"" + joined + "\"");

  std::vector<SubjectPrediction> out;
  int row = 1;
  bool source_set = false;
  while (csv_read_record(in, fields)) {
    ++row;
    if (fields.size() == 1 && fields[0].empty()) continue;  // trailing newline
    if (fields.size() != 7)
      throw Error("predictions: row " + std::to_string(row) + " has " +
                  std::to_string(fields.size()) + " fields, expected 7");
    SubjectPrediction p;
    p.subject_id = fields[0];
    p.label = parse_label(fields[1]);
    if (!fields[2].empty()) p.p_a = parse_double_field(fields[2], "p_a");
    if (!fields[3].empty()) p.p_t = parse_double_field(fields[3], "p_t");
    p.age = static_cast<int>(parse_double_field(fields[4], "age"));
    if (fields[5] != "female" && fields[5] != "male")
      throw Error("predictions: row " + std::to_string(row) + " gender \"" + fields[5] +
                  "\" is not female or male");
    p.gender = fields[5];
    if (fields[6] != "manual" && fields[6] != "asr")
      throw Error("predictions: row " + std::to_string(row) + " source \"" + fields[6] +
                  "\" is not manual or asr");
    if (source != nullptr && !source_set) {
      *source = fields[6];
      source_set = true;
    }
    out.push_back(std::move(p));
  }
  return out;
}

void save_sweep_csv(const std::vector<WeightRow>& rows, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write sweep csv: " + path);
  f << "w,accuracy,f1,specificity,sensitivity,tp,fp,fn,tn\n";
  for (const auto& r : rows) {
    const auto& m = r.metrics;
    auto opt = [&](const std::optional<double>& v) { return v ? format_double(*v) : ""; };
    f << format_double(r.w) << ',' << format_double(m.accuracy) << ',' << opt(m.f1) << ','
      << opt(m.specificity) << ',' << opt(m.sensitivity) << ',' << m.counts.tp << ',' << m.counts.fp
      << ',' << m.counts.fn << ',' << m.counts.tn << '\n';
  }
}

std::string render_highlights(const Transcript& transcript, const TextPrediction& pred) {
  std::vector<char> flagged(transcript.tokens.size(), 0);
  for (int idx : pred.top5) {
    const auto& seg = pred.segments[static_cast<size_t>(idx)];
    for (int t = seg.start; t < seg.start + seg.real_len && t < static_cast<int>(flagged.size());
         ++t)
      flagged[static_cast<size_t>(t)] = 1;
  }

  std::ostringstream out;
  out << "subject " << transcript.subject_id << "\n\n";
  bool open = false;
  for (size_t i = 0; i < transcript.tokens.size(); ++i) {
    if (i) out << ' ';
    if (flagged[i] && !open) {
      out << ">>> ";
      open = true;
    } else if (!flagged[i] && open) {
      out << "<<< ";
      open = false;
    }
    out << transcript.tokens[i];
  }
  if (open) out << " <<<";
  out << "\n\ntop segments:\n";
  char buf[16];
  for (size_t rank = 0; rank < pred.top5.size(); ++rank) {
    const int idx = pred.top5[rank];
    std::snprintf(buf, sizeof(buf), "%.4f",
                  static_cast<double>(pred.segment_probs[static_cast<size_t>(idx)]));
    out << (rank + 1) << ". p=" << buf << ": "
        << segment_text(pred.segments[static_cast<size_t>(idx)]) << "\n";
  }
  return out.str();
}

void write_sidecar(const std::string& artifact_path, uint64_t config_hash, uint64_t seed) {
  json meta{{"config_hash", hash_hex(config_hash)}, {"seed", seed}, {"version", kVersion}};
  std::ofstream f(artifact_path + ".meta.json", std::ios::binary);
  if (!f) throw Error("cannot write sidecar for " + artifact_path);
  f << meta.dump(2) << "\n";
}

}  // namespace adscreen
