#include "adscreen/wordpiece.hpp"

#include <fstream>

#include "adscreen/error.hpp"

namespace adscreen {

WordPieceVocab WordPieceVocab::from_lines(const std::vector<std::string>& pieces) {
  if (pieces.empty()) throw Error("wordpiece: empty vocabulary");
  WordPieceVocab v;
  v.pieces_ = pieces;
  for (int i = 0; i < static_cast<int>(pieces.size()); ++i) {
    if (pieces[i].empty()) throw Error("wordpiece: empty piece at line " + std::to_string(i + 1));
    if (!v.index_.emplace(pieces[i], i).second)
      throw Error("wordpiece: duplicate piece \"" + pieces[i] + "\"");
  }
  v.pad_id_ = v.id("[PAD]");
  v.unk_id_ = v.id("[UNK]");
  v.cls_id_ = v.id("[CLS]");
  v.sep_id_ = v.id("[SEP]");
  std::string missing;
  if (v.pad_id_ < 0) missing += " [PAD]";
  if (v.unk_id_ < 0) missing += " [UNK]";
  if (v.cls_id_ < 0) missing += " [CLS]";
  if (v.sep_id_ < 0) missing += " [SEP]";
  if (!missing.empty()) throw Error("wordpiece: vocabulary lacks specials:" + missing);
  return v;
}

WordPieceVocab WordPieceVocab::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open vocab: " + path);
  std::vector<std::string> pieces;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    pieces.push_back(line);
  }
  while (!pieces.empty() && pieces.back().empty()) pieces.pop_back();
  return from_lines(pieces);
}

int WordPieceVocab::id(const std::string& piece) const {
  auto it = index_.find(piece);
  return it == index_.end() ? -1 : it->second;
}

const std::string& WordPieceVocab::piece(int id) const {
  if (id < 0 || id >= size()) throw Error("wordpiece: id out of range");
  return pieces_[static_cast<size_t>(id)];
}

std::vector<int> WordPieceVocab::split(const std::string& token) const {
  std::vector<int> out;
  size_t at = 0;
  while (at < token.size()) {
    size_t len = token.size() - at;
    int match = -1;
    // Longest match first; continuations carry the ## prefix.
    for (; len > 0; --len) {
      std::string cand = token.substr(at, len);
      if (at > 0) cand = "##" + cand;
      const int id_ = id(cand);
      if (id_ >= 0) {
        match = id_;
        break;
      }
    }
    if (match < 0) return {unk_id_};  // any uncovered remainder voids the word
    out.push_back(match);
    at += len;
  }
  return out;
}

SubwordSequence wordpiece_tokenize(const std::vector<std::string>& tokens,
                                   const WordPieceVocab& vocab, int max_len) {
  if (max_len < 3) throw Error("wordpiece: max_len must fit [CLS] x [SEP]");
  std::vector<int> ids{vocab.cls_id()};
  for (const auto& tok : tokens) {
    if (tok == kPadToken) continue;
    for (int id : vocab.split(tok)) ids.push_back(id);
  }
  // Post truncation keeps room for the trailing [SEP].
  if (static_cast<int>(ids.size()) > max_len - 1) ids.resize(max_len - 1);
  ids.push_back(vocab.sep_id());

  SubwordSequence seq;
  seq.ids = ids;
  seq.mask.assign(ids.size(), 1.0f);
  seq.ids.resize(max_len, vocab.pad_id());
  seq.mask.resize(max_len, 0.0f);
  return seq;
}

}  // namespace adscreen
