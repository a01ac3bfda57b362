#include "adscreen/manifest.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "adscreen/error.hpp"

namespace adscreen {

bool csv_read_record(std::istream& in, std::vector<std::string>& fields) {
  fields.clear();
  std::string field;
  bool quoted = false, any = false;
  int c;
  while ((c = in.get()) != EOF) {
    any = true;
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          field.push_back('"');
          in.get();
        } else {
          quoted = false;
        }
      } else {
        field.push_back(static_cast<char>(c));
      }
      continue;
    }
    if (c == '"' && field.empty()) {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
    } else if (c == '\n') {
      break;
    } else if (c != '\r') {
      field.push_back(static_cast<char>(c));
    }
  }
  if (!any) return false;
  fields.push_back(std::move(field));
  return true;
}

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += "\"";
  return out;
}

int parse_label(const std::string& s) {
  if (s == "AD") return 1;
  if (s == "HC") return 0;
  throw Error("label \"" + s + "\" is not AD or HC");
}

std::string label_name(int label) {
  if (label == 1) return "AD";
  if (label == 0) return "HC";
  throw Error("label " + std::to_string(label) + " is not 0 or 1");
}

Manifest ingest_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open manifest: " + path);

  Manifest m;
  m.dir = std::filesystem::path(path).parent_path().string();

  std::vector<std::string> fields;
  if (!csv_read_record(in, fields)) throw Error("manifest is empty: " + path);
  {
    std::string header;
    for (size_t i = 0; i < fields.size(); ++i) header += (i ? "," : "") + fields[i];
    if (header != kManifestHeader)
      throw Error("manifest header mismatch: expected \"" + std::string(kManifestHeader) +
                  "\", got \"" + header + "\"");
  }

  std::vector<std::string> problems;
  std::set<std::string> ids;
  int row = 1;
  while (csv_read_record(in, fields)) {
    ++row;
    if (fields.size() == 1 && fields[0].empty()) continue;  // trailing blank line
    if (fields.size() != 8) {
      problems.push_back("row " + std::to_string(row) + ": expected 8 fields, got " +
                         std::to_string(fields.size()));
      continue;
    }
    SubjectRecord r;
    r.subject_id = fields[0];
    const std::string where = "row " + std::to_string(row) + " (" + r.subject_id + ")";
    if (r.subject_id.empty()) problems.push_back(where + ": empty subject_id");
    if (!ids.insert(r.subject_id).second)
      problems.push_back(where + ": duplicate subject_id \"" + r.subject_id + "\"");
    try {
      r.label = parse_label(fields[1]);
    } catch (const Error& e) {
      problems.push_back(where + ": " + e.what());
    }
    try {
      size_t used = 0;
      r.age = std::stoi(fields[2], &used);
      if (used != fields[2].size() || r.age <= 0) throw std::invalid_argument("");
    } catch (...) {
      problems.push_back(where + ": age \"" + fields[2] + "\" is not a positive integer");
    }
    r.gender = fields[3];
    if (r.gender != "female" && r.gender != "male")
      problems.push_back(where + ": gender \"" + r.gender + "\" is not female or male");
    r.audio_path = fields[4];
    r.transcript_path = fields[5];
    r.asr_transcript_path = fields[6];
    r.notes = fields[7];
    if (r.audio_path.empty() && r.transcript_path.empty())
      problems.push_back(where + ": needs an audio_path or a transcript_path");
    m.subjects.push_back(std::move(r));
  }
  if (!problems.empty()) {
    std::string msg = "manifest " + path + " has " + std::to_string(problems.size()) + " problem" +
                      (problems.size() == 1 ? "" : "s") + ":";
    for (const auto& p : problems) msg += "\n  " + p;
    throw Error(msg);
  }

  for (const auto& r : m.subjects) {
    const auto note = [&](const std::string& what, const std::string& p) {
      if (!p.empty() && !std::filesystem::exists(resolve_manifest_path(m, p)))
        m.diagnostics.push_back(r.subject_id + ": " + what + " missing: " + p);
    };
    note("audio file", r.audio_path);
    note("transcript", r.transcript_path);
    note("ASR transcript", r.asr_transcript_path);
  }
  return m;
}

void save_manifest(const std::string& path, const std::vector<SubjectRecord>& subjects) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write manifest: " + path);
  out << kManifestHeader << "\n";
  for (const auto& r : subjects) {
    out << csv_quote(r.subject_id) << ',' << label_name(r.label) << ',' << r.age << ','
        << r.gender << ',' << csv_quote(r.audio_path) << ',' << csv_quote(r.transcript_path)
        << ',' << csv_quote(r.asr_transcript_path) << ',' << csv_quote(r.notes) << "\n";
  }
  if (!out) throw Error("write failed: " + path);
}

std::string resolve_manifest_path(const Manifest& m, const std::string& rel) {
  std::filesystem::path p(rel);
  if (p.is_absolute() || m.dir.empty()) return rel;
  return (std::filesystem::path(m.dir) / p).string();
}

}  // namespace adscreen
