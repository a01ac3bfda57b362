#pragma once

#include <istream>
#include <string>
#include <vector>

namespace adscreen {

// One corpus row. Paths are stored as written in the CSV; resolve against
// the manifest's directory before opening.
struct SubjectRecord {
  std::string subject_id;
  int label = 0;  // 1 = AD, 0 = HC
  int age = 0;
  std::string gender;  // "female" | "male"
  std::string audio_path;
  std::string transcript_path;
  std::string asr_transcript_path;
  std::string notes;
};

struct Manifest {
  std::vector<SubjectRecord> subjects;
  std::string dir;  // directory the manifest was read from
  std::vector<std::string> diagnostics;  // per-row notes, e.g. missing files
};

inline constexpr const char* kManifestHeader =
    "subject_id,label,age,gender,audio_path,transcript_path,asr_transcript_path,source-notes";

// "AD" <-> 1, "HC" <-> 0; anything else errors.
int parse_label(const std::string& s);
std::string label_name(int label);

// One CSV record, unquoting as it goes. Returns false at end of input.
bool csv_read_record(std::istream& in, std::vector<std::string>& fields);
// Quotes a field only when it needs it (comma, quote, or newline inside).
std::string csv_quote(const std::string& s);

// Reads and validates the corpus CSV. Quoted fields may contain commas and
// doubled quotes. Structural problems (duplicate ids, bad labels or genders,
// non-positive ages, rows with neither an audio nor a transcript path) are
// all collected and thrown together, one line per offending row. Paths that
// simply do not exist on disk are not errors; they land in `diagnostics`.
Manifest ingest_manifest(const std::string& path);

void save_manifest(const std::string& path, const std::vector<SubjectRecord>& subjects);

// Joins a manifest-relative path against the manifest directory; absolute
// paths pass through.
std::string resolve_manifest_path(const Manifest& m, const std::string& rel);

}  // namespace adscreen
