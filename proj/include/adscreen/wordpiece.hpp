#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "adscreen/text.hpp"

namespace adscreen {

// Greedy longest-match-first subword vocabulary. Continuation pieces carry a
// "##" prefix; the specials [PAD], [UNK], [CLS], [SEP] must all be present.
class WordPieceVocab {
 public:
  static WordPieceVocab from_lines(const std::vector<std::string>& pieces);
  static WordPieceVocab load(const std::string& path);  // one piece per line

  int size() const { return static_cast<int>(pieces_.size()); }
  int id(const std::string& piece) const;  // -1 when absent
  const std::string& piece(int id) const;

  int pad_id() const { return pad_id_; }
  int unk_id() const { return unk_id_; }
  int cls_id() const { return cls_id_; }
  int sep_id() const { return sep_id_; }

  // Greedy split of one word; a word with no matching prefix becomes [UNK].
  std::vector<int> split(const std::string& token) const;

 private:
  std::vector<std::string> pieces_;
  std::unordered_map<std::string, int> index_;
  int pad_id_ = -1, unk_id_ = -1, cls_id_ = -1, sep_id_ = -1;
};

struct SubwordSequence {
  std::vector<int> ids;     // length = max_len
  std::vector<float> mask;  // 1 for real positions (incl. [CLS]/[SEP]), 0 for padding
};

// [CLS] pieces [SEP], post-truncated/padded to max_len. Segment PAD tokens
// are skipped, their positions fall into the padding region.
SubwordSequence wordpiece_tokenize(const std::vector<std::string>& tokens,
                                   const WordPieceVocab& vocab, int max_len = 16);

}  // namespace adscreen
