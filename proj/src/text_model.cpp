#include "adscreen/text_model.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <set>

#include "adscreen/error.hpp"
#include "adscreen/optim.hpp"
#include "adscreen/weights_io.hpp"

namespace adscreen {

TextModel::TextModel(const TextModelConfig& cfg)
    : cfg_(cfg), net_(cfg.d_word, cfg.max_tokens, cfg.d_ctx, cfg.d_sent, cfg.widths, cfg.filters) {
  if (cfg.d_word <= 0 || cfg.max_tokens <= 0 || cfg.d_ctx <= 0 || cfg.d_sent <= 0 ||
      cfg.filters <= 0)
    throw Error("TextModel: dims and filter count must be positive");
  Rng rng(Rng::derive(cfg.seed, "textmodel-init"));
  net_.init(rng);
}

void TextModel::save(const std::string& path) {
  WeightFile file;
  collect_params(param_sets(), file);
  file.save(path);
}

void TextModel::load(const std::string& path) {
  assign_params(WeightFile::load(path), param_sets());
}

Tensor fasttext_cnn_forward(TextModel& model, const Tensor& matrix) {
  const auto& cfg = model.config();
  if (matrix.rank() != 2 || matrix.dim(0) != cfg.max_tokens || matrix.dim(1) != cfg.d_word)
    throw Error("fasttext_cnn_forward: expected [" + std::to_string(cfg.max_tokens) + "," +
                std::to_string(cfg.d_word) + "] matrix, got " + matrix.shape_str());
  Tensor x({1, cfg.max_tokens, cfg.d_word});
  std::copy(matrix.data(), matrix.data() + matrix.size(), x.data());
  auto y = model.cnn_forward(make_var(std::move(x)), nullptr);
  Tensor out({kCnnEmbedDim});
  std::copy(y->value.data(), y->value.data() + kCnnEmbedDim, out.data());
  return out;
}

float aggregate_text(const std::vector<float>& probabilities) {
  if (probabilities.empty())
    throw Error("aggregate_text: no per-segment probabilities (empty transcript)");
  double sum = 0.0;
  for (float p : probabilities) sum += p;
  return static_cast<float>(sum / static_cast<double>(probabilities.size()));
}

std::vector<int> top_segments(const std::vector<TranscriptSegment>& segments,
                              const std::vector<float>& probs, int limit) {
  if (segments.size() != probs.size()) throw Error("top_segments: segment/probability count mismatch");
  std::vector<int> idx(segments.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    if (probs[a] != probs[b]) return probs[a] > probs[b];
    return segments[a].start < segments[b].start;
  });
  if (static_cast<int>(idx.size()) > limit) idx.resize(limit);
  return idx;
}

std::string segment_text(const TranscriptSegment& segment) {
  std::string out;
  for (const auto& tok : segment.tokens) {
    if (tok == kPadToken) continue;
    if (!out.empty()) out += ' ';
    out += tok;
  }
  return out;
}

std::vector<std::pair<std::string, float>> highlight_top5(const TextPrediction& pred) {
  std::vector<std::pair<std::string, float>> out;
  for (int i : pred.top5)
    out.emplace_back(segment_text(pred.segments[i]), pred.segment_probs[i]);
  return out;
}

TextPredictor::TextPredictor(TextModel& model, const WordVectorTable& wordvecs,
                             const WordPieceVocab& vocab, ContextualEmbedder& ctx,
                             ContextualEmbedder& sent, int ctx_max_len, int sent_max_len)
    : model_(&model),
      wordvecs_(&wordvecs),
      vocab_(&vocab),
      ctx_(&ctx),
      sent_(&sent),
      ctx_max_len_(ctx_max_len),
      sent_max_len_(sent_max_len),
      sent_cache_(sent) {
  const auto& cfg = model.config();
  if (wordvecs.dim() != cfg.d_word)
    throw Error("TextPredictor: word vectors are " + std::to_string(wordvecs.dim()) +
                "-dim, model expects " + std::to_string(cfg.d_word));
  if (ctx.dim() != cfg.d_ctx)
    throw Error("TextPredictor: contextual embedder is " + std::to_string(ctx.dim()) +
                "-dim, model expects " + std::to_string(cfg.d_ctx));
  if (sent.dim() != cfg.d_sent)
    throw Error("TextPredictor: sentence embedder is " + std::to_string(sent.dim()) +
                "-dim, model expects " + std::to_string(cfg.d_sent));
}

namespace {

// Rows of the [n, dim] batch tensor for one shared sentence vector.
Tensor tile_rows(const std::vector<float>& vec, int n) {
  Tensor out({n, static_cast<int>(vec.size())});
  for (int i = 0; i < n; ++i)
    std::copy(vec.begin(), vec.end(), out.data() + static_cast<size_t>(i) * vec.size());
  return out;
}

}  // namespace

TextPrediction TextPredictor::predict(const Transcript& transcript) {
  TextPrediction pred;
  pred.transcript_id = transcript.subject_id;
  pred.segments = segment_tokens(transcript.tokens);
  const int n = static_cast<int>(pred.segments.size());

  const auto& cfg = model_->config();
  Tensor x({n, cfg.max_tokens, cfg.d_word});
  std::vector<SubwordSequence> ctx_seqs;
  std::vector<EmbedKey> ctx_keys;
  for (int i = 0; i < n; ++i) {
    Tensor m = encode_segment_wordvecs(pred.segments[i], *wordvecs_, cfg.max_tokens);
    std::copy(m.data(), m.data() + m.size(), x.data() + static_cast<size_t>(i) * m.size());
    ctx_seqs.push_back(wordpiece_tokenize(pred.segments[i].tokens, *vocab_, ctx_max_len_));
    ctx_keys.push_back({transcript.subject_id, pred.segments[i].start});
  }
  const EmbedKey sent_key{transcript.subject_id, -1};
  const auto& sent_vec =
      sent_cache_.get(sent_key, wordpiece_tokenize(transcript.tokens, *vocab_, sent_max_len_));

  auto ctx = ctx_->embed(ctx_seqs, ctx_keys, nullptr);
  auto sent = make_var(tile_rows(sent_vec, n));
  auto probs = model_->forward(make_var(std::move(x)), ctx, sent, BnMode::kInfer, nullptr);

  pred.segment_probs.assign(probs->value.data(), probs->value.data() + n);
  pred.p_text = aggregate_text(pred.segment_probs);
  pred.top5 = top_segments(pred.segments, pred.segment_probs);
  return pred;
}

float TextPredictor::classify_segment(const TranscriptSegment& segment, const Transcript& parent) {
  const auto& cfg = model_->config();
  Tensor m = encode_segment_wordvecs(segment, *wordvecs_, cfg.max_tokens);
  Tensor x({1, cfg.max_tokens, cfg.d_word});
  std::copy(m.data(), m.data() + m.size(), x.data());

  auto ctx = ctx_->embed({wordpiece_tokenize(segment.tokens, *vocab_, ctx_max_len_)},
                         {{parent.subject_id, segment.start}}, nullptr);
  const EmbedKey sent_key{parent.subject_id, -1};
  const auto& sent_vec =
      sent_cache_.get(sent_key, wordpiece_tokenize(parent.tokens, *vocab_, sent_max_len_));
  auto sent = make_var(tile_rows(sent_vec, 1));

  auto probs = model_->forward(make_var(std::move(x)), ctx, sent, BnMode::kInfer, nullptr);
  return probs->value.data()[0];
}

namespace {

struct SegExample {
  size_t transcript_idx;
  Tensor wordvec;  // [max_tokens, d_word]
  SubwordSequence ctx_seq;
  EmbedKey key;
  float target;
};

}  // namespace

TrainHistory train_text(TextPredictor& predictor, const std::vector<LabeledTranscript>& data,
                        const TextTrainConfig& cfg) {
  if (data.empty()) throw Error("train_text: empty dataset");
  if (cfg.batch_size <= 0) throw Error("train_text: batch_size must be positive");
  bool has_ad = false, has_hc = false;
  std::set<std::string> ids;
  for (const auto& lt : data) {
    (lt.label == 1 ? has_ad : has_hc) = true;
    if (!ids.insert(lt.transcript.subject_id).second)
      throw Error("train_text: duplicate transcript id \"" + lt.transcript.subject_id + "\"");
  }
  if (!has_ad || !has_hc) throw Error("train_text: dataset must contain both classes");

  TextModel& model = predictor.model();
  const auto& mcfg = model.config();

  // Word vectors are inputs, not weights, so segment features are fixed for
  // the whole run and computed once.
  std::vector<SegExample> examples;
  std::vector<SubwordSequence> sent_seqs;
  for (size_t t = 0; t < data.size(); ++t) {
    const auto& tr = data[t].transcript;
    sent_seqs.push_back(wordpiece_tokenize(tr.tokens, predictor.vocab(), predictor.sent_max_len()));
    for (const auto& seg : segment_tokens(tr.tokens)) {
      SegExample ex;
      ex.transcript_idx = t;
      ex.wordvec = encode_segment_wordvecs(seg, predictor.wordvecs(), mcfg.max_tokens);
      ex.ctx_seq = wordpiece_tokenize(seg.tokens, predictor.vocab(), predictor.ctx_max_len());
      ex.key = {tr.subject_id, seg.start};
      ex.target = data[t].label == 1 ? 1.0f : 0.0f;
      examples.push_back(std::move(ex));
    }
  }

  // Transcript-disjoint validation split, seeded.
  std::vector<size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::set<size_t> val_transcripts;
  if (order.size() >= 2) {
    Rng split_rng(Rng::derive(cfg.seed, "text-val-split"));
    split_rng.shuffle(order);
    const size_t n_val = std::max<size_t>(
        1, static_cast<size_t>(cfg.val_fraction * static_cast<float>(order.size()) + 0.5f));
    for (size_t i = 0; i < std::min(n_val, order.size() - 1); ++i)
      val_transcripts.insert(order[i]);
  }
  std::vector<size_t> train_idx, val_idx;
  for (size_t i = 0; i < examples.size(); ++i)
    (val_transcripts.count(examples[i].transcript_idx) ? val_idx : train_idx).push_back(i);
  const bool monitor_val = !val_idx.empty();

  const bool enc_frozen = cfg.freeze_encoder || predictor.ctx().param_sets().empty();
  std::vector<LayerParams*> tuned = model.head_param_sets();
  if (!cfg.freeze_wordvec_branch)
    for (auto* p : model.cnn_param_sets()) tuned.push_back(p);
  if (!enc_frozen)
    for (auto* p : predictor.ctx().param_sets()) tuned.push_back(p);

  // Frozen contextual branch: embeddings are constants, computed once.
  Tensor ctx_cache;
  if (enc_frozen) {
    ctx_cache = Tensor({static_cast<int>(examples.size()), predictor.ctx().dim()});
    const size_t chunk = 256;
    for (size_t at = 0; at < examples.size(); at += chunk) {
      const size_t end = std::min(examples.size(), at + chunk);
      std::vector<SubwordSequence> seqs;
      std::vector<EmbedKey> keys;
      for (size_t i = at; i < end; ++i) {
        seqs.push_back(examples[i].ctx_seq);
        keys.push_back(examples[i].key);
      }
      auto emb = predictor.ctx().embed(seqs, keys, nullptr);
      std::copy(emb->value.data(), emb->value.data() + emb->value.size(),
                ctx_cache.data() + at * static_cast<size_t>(predictor.ctx().dim()));
    }
  }

  // Sentence vectors are refreshed once per epoch through the cache; the
  // embedder itself never receives gradients.
  std::vector<std::vector<float>> sent_rows(data.size());
  auto refresh_sentences = [&]() {
    predictor.sentence_cache().clear();
    for (size_t t = 0; t < data.size(); ++t)
      sent_rows[t] =
          predictor.sentence_cache().get({data[t].transcript.subject_id, -1}, sent_seqs[t]);
  };

  const int d_ctx = predictor.ctx().dim();
  const int d_sent = predictor.sent().dim();
  const size_t seg_floats = static_cast<size_t>(mcfg.max_tokens) * mcfg.d_word;

  auto gather = [&](const std::vector<size_t>& idx, Tensor& x, Tensor& sent, Tensor& target) {
    const int b = static_cast<int>(idx.size());
    x = Tensor({b, mcfg.max_tokens, mcfg.d_word});
    sent = Tensor({b, d_sent});
    target = Tensor({b, 1});
    for (int j = 0; j < b; ++j) {
      const auto& ex = examples[idx[j]];
      std::copy(ex.wordvec.data(), ex.wordvec.data() + seg_floats,
                x.data() + static_cast<size_t>(j) * seg_floats);
      const auto& sv = sent_rows[ex.transcript_idx];
      std::copy(sv.begin(), sv.end(), sent.data() + static_cast<size_t>(j) * d_sent);
      target.data()[j] = ex.target;
    }
  };

  auto ctx_var = [&](const std::vector<size_t>& idx, GradTape* tape) -> VarPtr<float> {
    if (enc_frozen) {
      Tensor c({static_cast<int>(idx.size()), d_ctx});
      for (size_t j = 0; j < idx.size(); ++j)
        std::copy(ctx_cache.data() + idx[j] * static_cast<size_t>(d_ctx),
                  ctx_cache.data() + (idx[j] + 1) * static_cast<size_t>(d_ctx),
                  c.data() + j * static_cast<size_t>(d_ctx));
      return make_var(std::move(c));
    }
    std::vector<SubwordSequence> seqs;
    std::vector<EmbedKey> keys;
    for (size_t i : idx) {
      seqs.push_back(examples[i].ctx_seq);
      keys.push_back(examples[i].key);
    }
    return predictor.ctx().embed(seqs, keys, tape);
  };

  auto eval_loss = [&](const std::vector<size_t>& idx) {
    double total = 0.0;
    const size_t chunk = 256;
    for (size_t at = 0; at < idx.size(); at += chunk) {
      std::vector<size_t> part(idx.begin() + at,
                               idx.begin() + std::min(idx.size(), at + chunk));
      Tensor x, sent, target;
      gather(part, x, sent, target);
      auto probs = model.forward(make_var(std::move(x)), ctx_var(part, nullptr),
                                 make_var(std::move(sent)), BnMode::kInfer, nullptr);
      total += static_cast<double>(bce_loss(probs->value, target)) * part.size();
    }
    return static_cast<float>(total / static_cast<double>(idx.size()));
  };

  AdamT<float> adam(cfg.lr);
  Rng order_rng(Rng::derive(cfg.seed, "text-epoch-order"));
  TrainHistory hist;
  ParamSnapshot best;
  float best_loss = 0.0f;
  int bad_epochs = 0;

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    refresh_sentences();
    std::vector<size_t> epoch_order = train_idx;
    order_rng.shuffle(epoch_order);

    double epoch_loss = 0.0;
    size_t epoch_count = 0;
    for (size_t at = 0; at < epoch_order.size(); at += static_cast<size_t>(cfg.batch_size)) {
      std::vector<size_t> batch(
          epoch_order.begin() + at,
          epoch_order.begin() + std::min(epoch_order.size(), at + static_cast<size_t>(cfg.batch_size)));
      GradTape tape;
      Tensor x, sent, target;
      gather(batch, x, sent, target);
      auto probs = model.forward(make_var(std::move(x)), ctx_var(batch, &tape),
                                 make_var(std::move(sent)), BnMode::kTrain, &tape);
      AdamT<float>::zero_grads(tuned);
      const float loss = bce_backward(probs, target);
      tape.backward();
      adam.step(tuned);
      epoch_loss += static_cast<double>(loss) * batch.size();
      epoch_count += batch.size();
    }
    hist.train_loss.push_back(static_cast<float>(epoch_loss / static_cast<double>(epoch_count)));

    float monitored = hist.train_loss.back();
    if (monitor_val) {
      hist.val_loss.push_back(eval_loss(val_idx));
      monitored = hist.val_loss.back();
    }

    if (hist.best_epoch < 0 || monitored < best_loss) {
      best_loss = monitored;
      hist.best_epoch = epoch;
      best.capture(tuned);
      bad_epochs = 0;
    } else {
      ++bad_epochs;
      if (bad_epochs > cfg.patience) break;
    }
  }

  if (best.captured()) best.restore(tuned);
  return hist;
}

}  // namespace adscreen
