#pragma once

#include <string>
#include <vector>

namespace adscreen {

// Padding literal shared by segmenting and the subword pipeline.
inline constexpr const char* kPadToken = "[PAD]";
inline constexpr int kSegmentLen = 7;
inline constexpr int kSegmentStride = 4;

enum class TranscriptSource { kManual, kAsr };

struct Transcript {
  std::string subject_id;
  TranscriptSource source = TranscriptSource::kManual;
  std::string raw;
  std::vector<std::string> tokens;
};

// Seven tokens at stride four; short tails are right-padded with kPadToken.
struct TranscriptSegment {
  std::vector<std::string> tokens;  // always exactly 7
  int start = 0;                    // token index in the parent transcript
  int real_len = 0;                 // tokens before padding begins
};

// Penn-Treebank-style word tokenization: contractions split ("she's" ->
// she + 's), punctuation separated, fillers kept intact. No characters are
// rewritten, so concatenating the tokens reproduces every non-whitespace
// character of the input.
std::vector<std::string> tokenize_treebank(const std::string& text);

// Overlapping windows: length 7, stride 4, final short window PAD-filled.
// Empty input errors; anything up to 7 tokens yields one padded segment.
std::vector<TranscriptSegment> segment_tokens(const std::vector<std::string>& tokens);

// Expected segment count for a T-token transcript.
int segment_count(int n_tokens);

// CHAT (.cha) utterance extraction: keeps the utterance tiers whose speaker
// code is listed (e.g. {"PAR"}), drops everything else (headers, dependent
// tiers, other speakers). Returns one cleaned utterance per entry.
std::vector<std::string> read_cha_utterances(const std::string& path,
                                             const std::vector<std::string>& keep_speakers);

// Whole-file plain-text ingestion: tokenize each line, concatenate.
Transcript transcript_from_text(const std::string& subject_id, const std::string& text,
                                TranscriptSource source);

Transcript transcript_from_cha(const std::string& subject_id, const std::string& path,
                               const std::vector<std::string>& keep_speakers,
                               TranscriptSource source);

}  // namespace adscreen
