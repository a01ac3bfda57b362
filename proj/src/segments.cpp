#include <algorithm>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "adscreen/error.hpp"
#include "adscreen/text.hpp"

namespace adscreen {

std::vector<TranscriptSegment> segment_tokens(const std::vector<std::string>& tokens) {
  if (tokens.empty()) throw Error("segment_tokens: transcript has no tokens");
  const int t = static_cast<int>(tokens.size());
  std::vector<TranscriptSegment> out;
  int start = 0;
  while (true) {
    TranscriptSegment seg;
    seg.start = start;
    seg.real_len = std::min(kSegmentLen, t - start);
    for (int i = 0; i < kSegmentLen; ++i)
      seg.tokens.push_back(i < seg.real_len ? tokens[start + i] : std::string(kPadToken));
    out.push_back(std::move(seg));
    if (start + kSegmentLen >= t) break;
    start += kSegmentStride;
  }
  return out;
}

int segment_count(int n_tokens) {
  if (n_tokens <= 0) throw Error("segment_count: transcript has no tokens");
  if (n_tokens <= kSegmentLen) return 1;
  return 1 + (n_tokens - kSegmentLen + kSegmentStride - 1) / kSegmentStride;
}

std::vector<std::string> read_cha_utterances(const std::string& path,
                                             const std::vector<std::string>& keep_speakers) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open transcript: " + path);

  auto kept = [&](const std::string& code) {
    for (const auto& k : keep_speakers)
      if (k == code) return true;
    return false;
  };

  std::vector<std::string> utterances;
  std::string line;
  bool active = false;  // inside a kept utterance (for tab continuations)
  std::string current;

  auto flush = [&]() {
    if (!active) return;
    // Strip CHAT time-alignment bullets (0x15-delimited) and tidy spaces.
    std::string clean;
    bool in_bullet = false;
    for (char c : current) {
      if (c == '\x15') {
        in_bullet = !in_bullet;
        continue;
      }
      if (!in_bullet) clean += c;
    }
    std::istringstream words(clean);
    std::string w, joined;
    while (words >> w) {
      if (!joined.empty()) joined += ' ';
      joined += w;
    }
    if (!joined.empty()) utterances.push_back(joined);
    current.clear();
    active = false;
  };

  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty() && line[0] == '\t') {
      if (active) current += ' ' + line.substr(1);
      continue;
    }
    flush();
    if (line.empty() || line[0] != '*') continue;
    const size_t colon = line.find(':');
    if (colon == std::string::npos) continue;
    const std::string code = line.substr(1, colon - 1);
    if (!kept(code)) continue;
    active = true;
    size_t body = colon + 1;
    while (body < line.size() && (line[body] == '\t' || line[body] == ' ')) ++body;
    current = line.substr(body);
  }
  flush();
  return utterances;
}

Transcript transcript_from_text(const std::string& subject_id, const std::string& text,
                                TranscriptSource source) {
  Transcript t;
  t.subject_id = subject_id;
  t.source = source;
  t.raw = text;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    auto toks = tokenize_treebank(line);
    t.tokens.insert(t.tokens.end(), toks.begin(), toks.end());
  }
  return t;
}

Transcript transcript_from_cha(const std::string& subject_id, const std::string& path,
                               const std::vector<std::string>& keep_speakers,
                               TranscriptSource source) {
  Transcript t;
  t.subject_id = subject_id;
  t.source = source;
  for (const auto& utt : read_cha_utterances(path, keep_speakers)) {
    if (!t.raw.empty()) t.raw += '\n';
    t.raw += utt;
    auto toks = tokenize_treebank(utt);
    t.tokens.insert(t.tokens.end(), toks.begin(), toks.end());
  }
  return t;
}

}  // namespace adscreen
