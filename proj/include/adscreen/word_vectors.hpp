#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "adscreen/tensor.hpp"
#include "adscreen/text.hpp"

namespace adscreen {

// Token -> d-vector map with a deterministic subword fallback: unseen tokens
// are embedded by summing hashed character n-gram (3..6) bucket vectors, so
// every lookup returns a d-vector. Disabling the fallback degrades OOV
// lookups to the stored [UNK] vector (zeros when that is absent too).
class WordVectorTable {
 public:
  explicit WordVectorTable(int dim, uint64_t seed = 1);
  // Text format: first line "count dim", then "token v1 ... vd" per line.
  static WordVectorTable load(const std::string& path, uint64_t seed = 1);
  void save(const std::string& path) const;

  int dim() const { return dim_; }
  size_t size() const { return vecs_.size(); }
  bool contains(const std::string& token) const { return vecs_.count(token) != 0; }
  void insert(const std::string& token, std::vector<float> vec);

  void set_subword_fallback(bool on) { subword_ = on; }
  std::vector<float> lookup(const std::string& token) const;

 private:
  std::vector<float> subword_vector(const std::string& token) const;

  int dim_;
  uint64_t seed_;
  bool subword_ = true;
  std::unordered_map<std::string, std::vector<float>> vecs_;
};

// Row i = vector of token i; PAD rows and rows past the segment are zero.
// Tokens beyond max_tokens are dropped (post truncation).
Tensor encode_segment_wordvecs(const TranscriptSegment& segment, const WordVectorTable& table,
                               int max_tokens = 8);

}  // namespace adscreen
