#include "adscreen/word_vectors.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "adscreen/error.hpp"
#include "adscreen/rng.hpp"

namespace adscreen {

namespace {

constexpr uint64_t kSubwordBuckets = 2000000;

uint64_t fnv1a(const char* data, size_t n) {
  uint64_t h = 14695981039346656037ull;
  for (size_t i = 0; i < n; ++i) {
    h ^= static_cast<uint8_t>(data[i]);
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

WordVectorTable::WordVectorTable(int dim, uint64_t seed) : dim_(dim), seed_(seed) {
  if (dim <= 0) throw Error("word vectors: dimension must be positive");
}

WordVectorTable WordVectorTable::load(const std::string& path, uint64_t seed) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open word vectors: " + path);
  size_t count = 0;
  int dim = 0;
  if (!(in >> count >> dim) || dim <= 0)
    throw Error("word vectors: bad header in " + path);
  WordVectorTable table(dim, seed);
  for (size_t i = 0; i < count; ++i) {
    std::string token;
    if (!(in >> token))
      throw Error("word vectors: truncated at entry " + std::to_string(i) + " in " + path);
    std::vector<float> vec(static_cast<size_t>(dim));
    for (auto& v : vec)
      if (!(in >> v))
        throw Error("word vectors: truncated vector for \"" + token + "\" in " + path);
    table.insert(token, std::move(vec));
  }
  return table;
}

void WordVectorTable::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write word vectors: " + path);
  out << vecs_.size() << ' ' << dim_ << '\n';
  for (const auto& [token, vec] : vecs_) {
    out << token;
    for (float v : vec) out << ' ' << v;
    out << '\n';
  }
}

void WordVectorTable::insert(const std::string& token, std::vector<float> vec) {
  if (static_cast<int>(vec.size()) != dim_)
    throw Error("word vectors: \"" + token + "\" has dimension " + std::to_string(vec.size()) +
                ", table expects " + std::to_string(dim_));
  vecs_[token] = std::move(vec);
}

std::vector<float> WordVectorTable::lookup(const std::string& token) const {
  auto it = vecs_.find(token);
  if (it != vecs_.end()) return it->second;
  if (subword_ && !token.empty()) return subword_vector(token);
  auto unk = vecs_.find("[UNK]");
  if (unk != vecs_.end()) return unk->second;
  return std::vector<float>(static_cast<size_t>(dim_), 0.0f);
}

std::vector<float> WordVectorTable::subword_vector(const std::string& token) const {
  // fastText-style boundary markers; n-grams over bytes, hashed to buckets
  // whose vectors are generated on the fly (seeded), never stored.
  const std::string marked = "<" + token + ">";
  std::vector<float> sum(static_cast<size_t>(dim_), 0.0f);
  const float scale = 0.5f / static_cast<float>(dim_);
  for (size_t n = 3; n <= 6; ++n) {
    if (marked.size() < n) break;
    for (size_t at = 0; at + n <= marked.size(); ++at) {
      const uint64_t bucket = fnv1a(marked.data() + at, n) % kSubwordBuckets;
      uint64_t state = Rng::derive(seed_, "subword-bucket") ^ (bucket * 0x9e3779b97f4a7c15ull);
      for (auto& v : sum) {
        const uint64_t bits = Rng::splitmix64(state);
        const float u = static_cast<float>(bits >> 11) * static_cast<float>(0x1.0p-53);
        v += (2.0f * u - 1.0f) * scale;
      }
    }
  }
  return sum;
}

Tensor encode_segment_wordvecs(const TranscriptSegment& segment, const WordVectorTable& table,
                               int max_tokens) {
  if (max_tokens < kSegmentLen)
    throw Error("encode_segment_wordvecs: max_tokens must be at least " +
                std::to_string(kSegmentLen));
  Tensor out({max_tokens, table.dim()}, 0.0f);
  const int n = std::min<int>(static_cast<int>(segment.tokens.size()), max_tokens);
  for (int i = 0; i < n; ++i) {
    if (segment.tokens[i] == kPadToken) continue;
    const std::vector<float> v = table.lookup(segment.tokens[i]);
    std::copy(v.begin(), v.end(), out.data() + static_cast<size_t>(i) * table.dim());
  }
  return out;
}

}  // namespace adscreen
