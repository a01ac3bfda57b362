#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "adscreen/nn.hpp"
#include "adscreen/rng.hpp"
#include "adscreen/tensor.hpp"
#include "adscreen/text.hpp"
#include "adscreen/wordpiece.hpp"

namespace adscreen {

// Names one embedded unit: a transcript segment (start = token offset) or
// the whole transcript (start == -1).
struct EmbedKey {
  std::string transcript_id;
  int start = -1;

  bool operator<(const EmbedKey& o) const {
    return transcript_id != o.transcript_id ? transcript_id < o.transcript_id : start < o.start;
  }
  bool operator==(const EmbedKey& o) const {
    return transcript_id == o.transcript_id && start == o.start;
  }
};

std::string to_string(const EmbedKey& key);

// One fixed-width vector per subword sequence. `seqs` and `keys` run in
// parallel; computing implementations read the sequences, lookup
// implementations resolve by key. Output is [n, dim()]. A non-null tape
// records gradients where the implementation has parameters.
class ContextualEmbedder {
 public:
  virtual ~ContextualEmbedder() = default;
  virtual int dim() const = 0;
  virtual VarPtr<float> embed(const std::vector<SubwordSequence>& seqs,
                              const std::vector<EmbedKey>& keys, GradTape* tape) = 0;
  virtual std::vector<LayerParams*> param_sets() = 0;
};

template <typename T>
void fill_normal(TensorT<T>& w, T stddev, Rng& rng) {
  for (size_t i = 0; i < w.size(); ++i) w.data()[i] = static_cast<T>(rng.normal()) * stddev;
}

// Post-LN transformer encoder over subword ids: token + learned positional
// embeddings, `layers` blocks of masked self-attention and a 4x feed-forward,
// then a mean over non-PAD token states. Templated so the same graph runs
// under f64 for finite-difference checks.
template <typename T>
class MiniEncoderNetT {
 public:
  MiniEncoderNetT(const std::string& name, int vocab, int dim, int layers, int heads, int max_len,
                  int pad_id)
      : tok_(name + "/tok", vocab, dim, pad_id),
        pos_(name + "/pos", max_len, dim),
        dim_(dim),
        max_len_(max_len),
        pad_id_(pad_id) {
    if (layers < 1) throw Error(name + ": needs at least one layer");
    for (int l = 0; l < layers; ++l)
      blocks_.push_back(std::make_unique<Block>(name + "/l" + std::to_string(l), dim, heads));
  }

  void init(Rng& rng) {
    fill_normal(tok_.table(), T(0.02), rng);
    if (pad_id_ >= 0)
      for (int i = 0; i < dim_; ++i) tok_.table().data()[static_cast<size_t>(pad_id_) * dim_ + i] = T(0);
    fill_normal(pos_.table(), T(0.02), rng);
    for (auto& b : blocks_) b->init(rng);
  }

  int dim() const { return dim_; }
  int max_len() const { return max_len_; }

  std::vector<LayerParamsT<T>*> param_sets() {
    std::vector<LayerParamsT<T>*> out{&tok_.params(), &pos_.params()};
    for (auto& b : blocks_) {
      for (auto* p : b->attn.param_sets()) out.push_back(p);
      out.push_back(&b->ln1.params());
      out.push_back(&b->ff1.params());
      out.push_back(&b->ff2.params());
      out.push_back(&b->ln2.params());
    }
    return out;
  }

  // ids: [n, s] row-major, s <= max_len; mask: [n, s] with 1 = real token.
  VarPtr<T> forward(const std::vector<int>& ids, const TensorT<T>& mask, int n, int s,
                    GradTapeT<T>* tape) {
    if (s > max_len_)
      throw Error("encoder: sequence length " + std::to_string(s) + " exceeds max " +
                  std::to_string(max_len_));
    std::vector<int> pos_ids(static_cast<size_t>(n) * s);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < s; ++j) pos_ids[static_cast<size_t>(i) * s + j] = j;
    auto x = add(tok_.forward(ids, n, s, tape), pos_.forward(pos_ids, n, s, tape), tape);
    for (auto& b : blocks_) {
      x = b->ln1.forward(add(x, b->attn.forward(x, mask, tape), tape), tape);
      auto h = b->ff2.forward(relu(b->ff1.forward(x, tape), tape), tape);
      x = b->ln2.forward(add(x, h, tape), tape);
    }
    return masked_mean_rows(x, mask, tape);
  }

 private:
  struct Block {
    MultiHeadAttentionT<T> attn;
    LayerNormT<T> ln1;
    DenseT<T> ff1, ff2;
    LayerNormT<T> ln2;

    Block(const std::string& p, int dim, int heads)
        : attn(p + "/attn", dim, heads),
          ln1(p + "/ln1", dim),
          ff1(p + "/ff1", dim, 4 * dim),
          ff2(p + "/ff2", 4 * dim, dim),
          ln2(p + "/ln2", dim) {}

    void init(Rng& rng) {
      attn.init(rng);
      ff1.init(rng);
      ff2.init(rng);
    }
  };

  EmbeddingT<T> tok_;
  EmbeddingT<T> pos_;
  std::vector<std::unique_ptr<Block>> blocks_;
  int dim_, max_len_, pad_id_;
};

struct MiniEncoderConfig {
  int vocab = 0;  // required; subword vocabulary size
  int dim = 128;
  int layers = 2;
  int heads = 4;
  int max_len = 16;
  int pad_id = 0;  // subword PAD id; its token row stays zero
  uint64_t seed = 1;
};

// Desk-scale stand-in for a pre-trained contextual model. Full-scale weights
// (e.g. 768-dim) load through the same container given a matching config.
class MiniEncoder : public ContextualEmbedder {
 public:
  explicit MiniEncoder(const MiniEncoderConfig& cfg);

  int dim() const override { return cfg_.dim; }
  int max_len() const { return cfg_.max_len; }
  const MiniEncoderConfig& config() const { return cfg_; }

  // Every seq must be exactly max_len ids. Keys are ignored.
  VarPtr<float> embed(const std::vector<SubwordSequence>& seqs, const std::vector<EmbedKey>& keys,
                      GradTape* tape) override;
  std::vector<LayerParams*> param_sets() override { return net_.param_sets(); }

  // Sequences actually run through the network; cache instrumentation.
  int64_t embed_count() const { return embed_count_; }

  void save(const std::string& path);
  void load(const std::string& path);  // strict: arrays must match exactly

 private:
  MiniEncoderConfig cfg_;
  MiniEncoderNetT<float> net_;
  int64_t embed_count_ = 0;
};

// Precomputed embeddings keyed by (transcript id, segment start); start -1
// marks the transcript-level record. On disk:
//
//   ADSEMB 1
//   dim <d>
//   count <n>
//   record <start> <transcript id, to end of line>
//   ...
//   data <payload-bytes>
//   <raw f32 little-endian, one vector per record in listed order>
class EmbeddingFile {
 public:
  explicit EmbeddingFile(int dim);

  int dim() const { return dim_; }
  size_t size() const { return entries_.size(); }
  bool contains(const EmbedKey& key) const { return entries_.count(key) != 0; }
  void put(const EmbedKey& key, const std::vector<float>& vec);  // overwrites
  const std::vector<float>& get(const EmbedKey& key) const;      // throws naming the key

  void save(const std::string& path) const;
  static EmbeddingFile load(const std::string& path);

 private:
  int dim_;
  std::map<EmbedKey, std::vector<float>> entries_;
};

// Lookup-only embedder over an EmbeddingFile; has no parameters.
class FileEmbedder : public ContextualEmbedder {
 public:
  explicit FileEmbedder(EmbeddingFile file) : file_(std::move(file)) {}
  static FileEmbedder load(const std::string& path) { return FileEmbedder(EmbeddingFile::load(path)); }

  int dim() const override { return file_.dim(); }
  VarPtr<float> embed(const std::vector<SubwordSequence>& seqs, const std::vector<EmbedKey>& keys,
                      GradTape* tape) override;
  std::vector<LayerParams*> param_sets() override { return {}; }

  const EmbeddingFile& file() const { return file_; }

 private:
  EmbeddingFile file_;
};

// Transcript-level embedding cache: each key is computed once per fill and
// reused by every segment. Population is single-writer; afterwards lookups
// are const map reads, safe for concurrent readers.
class SentenceCache {
 public:
  explicit SentenceCache(ContextualEmbedder& embedder) : embedder_(&embedder) {}

  const std::vector<float>& get(const EmbedKey& key, const SubwordSequence& seq);
  void clear() { cache_.clear(); }
  size_t size() const { return cache_.size(); }

 private:
  ContextualEmbedder* embedder_;
  std::map<EmbedKey, std::vector<float>> cache_;
};

// Batch-precompute embeddings for a transcript set, e.g. to stage a
// FileEmbedder from a MiniEncoder pass. Segment- and transcript-level
// embeddings go to separate files since their widths may differ.
EmbeddingFile export_segment_embeddings(const std::vector<Transcript>& transcripts,
                                        ContextualEmbedder& ctx, const WordPieceVocab& vocab,
                                        int max_len = 16);
EmbeddingFile export_sentence_embeddings(const std::vector<Transcript>& transcripts,
                                         ContextualEmbedder& sent, const WordPieceVocab& vocab,
                                         int max_len = 256);

}  // namespace adscreen
