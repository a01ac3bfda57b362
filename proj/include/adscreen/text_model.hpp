#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "adscreen/encoder.hpp"
#include "adscreen/nn.hpp"
#include "adscreen/rng.hpp"
#include "adscreen/tensor.hpp"
#include "adscreen/text.hpp"
#include "adscreen/train_common.hpp"
#include "adscreen/word_vectors.hpp"
#include "adscreen/wordpiece.hpp"

namespace adscreen {

// The word-vector CNN branch always projects to this width.
inline constexpr int kCnnEmbedDim = 64;

struct TextModelConfig {
  int d_word = 300;    // word-vector width feeding the CNN branch
  int max_tokens = 8;  // rows per segment matrix
  int d_ctx = 128;     // contextual-embedding width
  int d_sent = 128;    // sentence-embedding width
  std::vector<int> widths{2, 3, 4};
  int filters = 32;  // per filter width
  uint64_t seed = 1;
};

// Segment classifier: CNN over the word-vector matrix (parallel widths, ReLU,
// max-over-time, linear projection to 64), concatenated with the contextual
// and sentence embeddings, then BN and a dense sigmoid head. Templated so the
// same graph runs under f64 for finite-difference checks.
template <typename T>
class TextNetT {
 public:
  TextNetT(int d_word, int max_tokens, int d_ctx, int d_sent, const std::vector<int>& widths,
           int filters)
      : proj_("cnn/proj", static_cast<int>(widths.size()) * filters, kCnnEmbedDim),
        bn_("head/bn", kCnnEmbedDim + d_ctx + d_sent),
        out_("head/out", kCnnEmbedDim + d_ctx + d_sent, 1),
        d_word_(d_word),
        max_tokens_(max_tokens),
        d_ctx_(d_ctx),
        d_sent_(d_sent) {
    if (widths.empty()) throw Error("TextNet: needs at least one filter width");
    for (int w : widths) {
      if (w < 1 || w > max_tokens)
        throw Error("TextNet: filter width " + std::to_string(w) + " outside [1," +
                    std::to_string(max_tokens) + "]");
      convs_.push_back(
          std::make_unique<Conv1dT<T>>("cnn/conv" + std::to_string(w), w, d_word, filters));
    }
  }

  void init(Rng& rng) {
    for (auto& c : convs_) c->init(rng);
    proj_.init(rng);
    out_.init(rng);
  }

  int concat_dim() const { return kCnnEmbedDim + d_ctx_ + d_sent_; }

  std::vector<LayerParamsT<T>*> param_sets() {
    auto out = cnn_param_sets();
    for (auto* p : head_param_sets()) out.push_back(p);
    return out;
  }
  std::vector<LayerParamsT<T>*> cnn_param_sets() {
    std::vector<LayerParamsT<T>*> out;
    for (auto& c : convs_) out.push_back(&c->params());
    out.push_back(&proj_.params());
    return out;
  }
  std::vector<LayerParamsT<T>*> head_param_sets() { return {&bn_.params(), &out_.params()}; }

  // x: [n, max_tokens, d_word] -> [n, 64].
  VarPtr<T> cnn_forward(const VarPtr<T>& x, GradTapeT<T>* tape) {
    const auto& xv = x->value;
    if (xv.rank() != 3 || xv.dim(1) != max_tokens_ || xv.dim(2) != d_word_)
      throw Error("TextNet: expected [n," + std::to_string(max_tokens_) + "," +
                  std::to_string(d_word_) + "] word vectors, got " + xv.shape_str());
    std::vector<VarPtr<T>> pooled;
    for (auto& c : convs_) pooled.push_back(max_over_time(relu(c->forward(x, tape), tape), tape));
    return proj_.forward(concat_last(pooled, tape), tape);
  }

  // cnn [n,64], ctx [n,d_ctx], sent [n,d_sent] -> probabilities [n,1].
  VarPtr<T> head_forward(const VarPtr<T>& cnn, const VarPtr<T>& ctx, const VarPtr<T>& sent,
                         BnMode mode, GradTapeT<T>* tape) {
    check_branch_(cnn, kCnnEmbedDim, "cnn");
    check_branch_(ctx, d_ctx_, "contextual");
    check_branch_(sent, d_sent_, "sentence");
    auto z = concat_last<T>({cnn, ctx, sent}, tape);
    return sigmoid(out_.forward(bn_.forward(z, mode, tape), tape), tape);
  }

  VarPtr<T> forward(const VarPtr<T>& x, const VarPtr<T>& ctx, const VarPtr<T>& sent, BnMode mode,
                    GradTapeT<T>* tape) {
    return head_forward(cnn_forward(x, tape), ctx, sent, mode, tape);
  }

 private:
  void check_branch_(const VarPtr<T>& v, int want, const char* what) const {
    if (v->value.rank() != 2 || v->value.dim(1) != want)
      throw Error("TextNet: " + std::string(what) + " branch must be [n," + std::to_string(want) +
                  "], got " + v->value.shape_str());
  }

  std::vector<std::unique_ptr<Conv1dT<T>>> convs_;
  DenseT<T> proj_;
  BatchNormT<T> bn_;
  DenseT<T> out_;
  int d_word_, max_tokens_, d_ctx_, d_sent_;
};

class TextModel {
 public:
  explicit TextModel(const TextModelConfig& cfg = {});

  const TextModelConfig& config() const { return cfg_; }
  int concat_dim() const { return net_.concat_dim(); }

  std::vector<LayerParams*> param_sets() { return net_.param_sets(); }
  std::vector<LayerParams*> cnn_param_sets() { return net_.cnn_param_sets(); }
  std::vector<LayerParams*> head_param_sets() { return net_.head_param_sets(); }

  VarPtr<float> cnn_forward(const VarPtr<float>& x, GradTape* tape) {
    return net_.cnn_forward(x, tape);
  }
  VarPtr<float> head_forward(const VarPtr<float>& cnn, const VarPtr<float>& ctx,
                             const VarPtr<float>& sent, BnMode mode, GradTape* tape) {
    return net_.head_forward(cnn, ctx, sent, mode, tape);
  }
  VarPtr<float> forward(const VarPtr<float>& x, const VarPtr<float>& ctx, const VarPtr<float>& sent,
                        BnMode mode, GradTape* tape) {
    return net_.forward(x, ctx, sent, mode, tape);
  }

  void save(const std::string& path);
  void load(const std::string& path);  // strict: every array must match

 private:
  TextModelConfig cfg_;
  TextNetT<float> net_;
};

// CNN branch on a single segment matrix [max_tokens, d_word] -> 64 floats.
Tensor fasttext_cnn_forward(TextModel& model, const Tensor& matrix);

// Arithmetic mean of per-segment probabilities. Empty input errors.
float aggregate_text(const std::vector<float>& probabilities);

// Indices of the highest-probability segments, descending; equal
// probabilities order by lower start offset. At most `limit` entries.
std::vector<int> top_segments(const std::vector<TranscriptSegment>& segments,
                              const std::vector<float>& probs, int limit = 5);

struct TextPrediction {
  std::string transcript_id;
  std::vector<TranscriptSegment> segments;
  std::vector<float> segment_probs;
  float p_text = 0.0f;
  std::vector<int> top5;  // indices into segments/segment_probs
};

// Segment tokens joined by single spaces, PAD filler dropped.
std::string segment_text(const TranscriptSegment& segment);

// The flagged segments as (text, probability) pairs, highest first.
std::vector<std::pair<std::string, float>> highlight_top5(const TextPrediction& pred);

// Wires the three branches together: word-vector lookup, subword
// tokenization, contextual and sentence embedders, and the classifier.
// Non-owning; all parts outlive the predictor.
class TextPredictor {
 public:
  TextPredictor(TextModel& model, const WordVectorTable& wordvecs, const WordPieceVocab& vocab,
                ContextualEmbedder& ctx, ContextualEmbedder& sent, int ctx_max_len = 16,
                int sent_max_len = 256);

  TextPrediction predict(const Transcript& transcript);
  // P0 for one segment; `parent` supplies the sentence-level context.
  float classify_segment(const TranscriptSegment& segment, const Transcript& parent);

  TextModel& model() { return *model_; }
  const WordVectorTable& wordvecs() const { return *wordvecs_; }
  const WordPieceVocab& vocab() const { return *vocab_; }
  ContextualEmbedder& ctx() { return *ctx_; }
  ContextualEmbedder& sent() { return *sent_; }
  int ctx_max_len() const { return ctx_max_len_; }
  int sent_max_len() const { return sent_max_len_; }
  SentenceCache& sentence_cache() { return sent_cache_; }

 private:
  TextModel* model_;
  const WordVectorTable* wordvecs_;
  const WordPieceVocab* vocab_;
  ContextualEmbedder* ctx_;
  ContextualEmbedder* sent_;
  int ctx_max_len_, sent_max_len_;
  SentenceCache sent_cache_;
};

struct LabeledTranscript {
  Transcript transcript;
  int label = 0;  // 1 = AD, 0 = HC
};

struct TextTrainConfig {
  float lr = 1e-6f;
  int batch_size = 32;
  int patience = 30;  // epochs without improvement before stopping
  int max_epochs = 100;
  float val_fraction = 0.1f;          // transcript-disjoint validation share
  bool freeze_wordvec_branch = false;  // CNN convs + projection stay fixed
  bool freeze_encoder = false;         // contextual embedder stays fixed
  uint64_t seed = 1;
};

// Adam + BCE over (segment, transcript, label) tuples derived from the
// labeled transcripts; the subject label supervises every segment. The
// sentence embedder is consumed, never gradient-trained: its vectors are
// cached once per transcript per epoch. Early stopping watches validation
// loss (training loss when the split is degenerate) and the best epoch's
// weights are restored.
TrainHistory train_text(TextPredictor& predictor, const std::vector<LabeledTranscript>& data,
                        const TextTrainConfig& cfg);

}  // namespace adscreen
