#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "adscreen/encoder.hpp"
#include "adscreen/error.hpp"
#include "adscreen/gradcheck.hpp"
#include "adscreen/optim.hpp"
#include "adscreen/rng.hpp"
#include "adscreen/text_model.hpp"
#include "adscreen/weights_io.hpp"
#include "adscreen/word_vectors.hpp"
#include "adscreen/wordpiece.hpp"

using namespace adscreen;

namespace {

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

const std::vector<std::string> kFillers = {"uh", "um", "er", "eh", "hm"};
const std::vector<std::string> kContent = {
    "the",  "boy",   "girl",   "mother",  "cookie",  "jar",      "water",
    "sink", "plate", "window", "curtain", "stool",   "dish",     "is",
    "on",   "and",   "running", "falling", "reaching", "washing"};

// Two-class corpus separated by filler-token rate: one class stammers, the
// other barely does. Labels alternate so any split stays balanced.
std::vector<LabeledTranscript> filler_corpus(int n, uint64_t seed) {
  Rng rng(seed);
  std::vector<LabeledTranscript> out;
  for (int i = 0; i < n; ++i) {
    LabeledTranscript lt;
    lt.label = i % 2;
    const double density = lt.label == 1 ? 0.4 : 0.05;
    const int len = 40 + static_cast<int>(rng.below(21));
    for (int t = 0; t < len; ++t) {
      const auto& pool = rng.uniform() < density ? kFillers : kContent;
      lt.transcript.tokens.push_back(pool[static_cast<size_t>(rng.below(static_cast<int64_t>(pool.size())))]);
    }
    lt.transcript.subject_id = "t" + std::to_string(i);
    out.push_back(std::move(lt));
  }
  return out;
}

WordPieceVocab corpus_vocab() {
  std::vector<std::string> pieces = {"[PAD]", "[UNK]", "[CLS]", "[SEP]"};
  for (const auto& w : kFillers) pieces.push_back(w);
  for (const auto& w : kContent) pieces.push_back(w);
  return WordPieceVocab::from_lines(pieces);
}

MiniEncoderConfig small_encoder_cfg(const WordPieceVocab& vocab, int dim, int max_len,
                                    uint64_t seed) {
  MiniEncoderConfig cfg;
  cfg.vocab = vocab.size();
  cfg.dim = dim;
  cfg.layers = 2;
  cfg.heads = 4;
  cfg.max_len = max_len;
  cfg.pad_id = vocab.pad_id();
  cfg.seed = seed;
  return cfg;
}

std::map<std::string, std::vector<float>> dump_arrays(const std::vector<LayerParams*>& sets) {
  WeightFile file;
  collect_params(sets, file);
  std::map<std::string, std::vector<float>> out;
  for (const auto& e : file.entries()) out[e.name] = e.values;
  return out;
}

bool bits_equal(const std::vector<float>& a, const std::vector<float>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

SubwordSequence make_seq(std::vector<int> ids, int real) {
  SubwordSequence seq;
  seq.mask.assign(ids.size(), 0.0f);
  for (int i = 0; i < real; ++i) seq.mask[static_cast<size_t>(i)] = 1.0f;
  seq.ids = std::move(ids);
  return seq;
}

TranscriptSegment make_segment(std::vector<std::string> tokens, int start) {
  TranscriptSegment seg;
  seg.start = start;
  seg.real_len = static_cast<int>(tokens.size());
  seg.tokens = std::move(tokens);
  while (seg.tokens.size() < static_cast<size_t>(kSegmentLen)) seg.tokens.push_back(kPadToken);
  return seg;
}

}  // namespace

TEST_CASE("cnn branch emits a 64-wide embedding and rejects mismatched input") {
  TextModelConfig cfg;
  cfg.d_word = 12;
  cfg.seed = 5;
  TextModel model(cfg);

  Rng rng(9);
  Tensor m({cfg.max_tokens, cfg.d_word});
  for (auto& v : m.values()) v = static_cast<float>(rng.normal());
  const Tensor out = fasttext_cnn_forward(model, m);
  REQUIRE(out.rank() == 1);
  CHECK(out.dim(0) == 64);

  CHECK_THROWS_AS(fasttext_cnn_forward(model, Tensor({cfg.max_tokens, cfg.d_word + 1})), Error);
  CHECK_THROWS_AS(fasttext_cnn_forward(model, Tensor({cfg.max_tokens + 1, cfg.d_word})), Error);
}

TEST_CASE("cnn branch output on a zero matrix is the bias-only response") {
  TextModelConfig cfg;
  cfg.d_word = 6;
  cfg.seed = 7;
  TextModel model(cfg);

  // Give every bias a nonzero value so the oracle is not trivially zero.
  Rng rng(31);
  std::vector<std::vector<float>> conv_bias;
  for (int w : cfg.widths) {
    auto* set = model.cnn_param_sets()[static_cast<size_t>(w - cfg.widths[0])];
    REQUIRE(set->prefix() == "cnn/conv" + std::to_string(w));
    auto& b = set->find("bias")->value;
    for (auto& v : b.values()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    conv_bias.push_back(b.values());
  }
  auto* proj = model.cnn_param_sets().back();
  REQUIRE(proj->prefix() == "cnn/proj");
  for (auto& v : proj->find("bias")->value.values())
    v = static_cast<float>(rng.uniform(-0.5, 0.5));

  // Every window of a zero matrix produces exactly the filter bias, so
  // max-over-time keeps relu(bias) and the projection is affine on that.
  std::vector<float> pooled;
  for (const auto& b : conv_bias)
    for (float v : b) pooled.push_back(std::max(v, 0.0f));
  const auto& w = proj->find("weight")->value;  // [96, 64]
  const auto& pb = proj->find("bias")->value;
  std::vector<float> expect(64);
  for (int c = 0; c < 64; ++c) {
    float acc = pb.values()[static_cast<size_t>(c)];
    for (size_t r = 0; r < pooled.size(); ++r)
      acc += pooled[r] * w.values()[r * 64 + static_cast<size_t>(c)];
    expect[static_cast<size_t>(c)] = acc;
  }

  const Tensor out = fasttext_cnn_forward(model, Tensor({cfg.max_tokens, cfg.d_word}, 0.0f));
  for (int c = 0; c < 64; ++c)
    CHECK(out.values()[static_cast<size_t>(c)] ==
          doctest::Approx(expect[static_cast<size_t>(c)]).epsilon(1e-5));

  const Tensor again = fasttext_cnn_forward(model, Tensor({cfg.max_tokens, cfg.d_word}, 0.0f));
  CHECK(bits_equal(out.values(), again.values()));
}

TEST_CASE("cnn branch ignores padding rows past the widest filter") {
  // Same seed, different row budget: the weight shapes are independent of
  // max_tokens, so both models hold identical parameters.
  TextModelConfig a_cfg;
  a_cfg.d_word = 10;
  a_cfg.max_tokens = 8;
  a_cfg.seed = 13;
  TextModelConfig b_cfg = a_cfg;
  b_cfg.max_tokens = 12;
  TextModel a(a_cfg), b(b_cfg);

  Rng rng(17);
  Tensor real({4, a_cfg.d_word});
  for (auto& v : real.values()) v = static_cast<float>(rng.normal() * 0.5);

  Tensor ma({8, a_cfg.d_word}, 0.0f), mb({12, a_cfg.d_word}, 0.0f);
  std::copy(real.data(), real.data() + real.size(), ma.data());
  std::copy(real.data(), real.data() + real.size(), mb.data());

  const Tensor ya = fasttext_cnn_forward(a, ma);
  const Tensor yb = fasttext_cnn_forward(b, mb);
  for (int c = 0; c < 64; ++c)
    CHECK(ya.values()[static_cast<size_t>(c)] ==
          doctest::Approx(yb.values()[static_cast<size_t>(c)]).epsilon(1e-6));
}

TEST_CASE("encoder embeddings are deterministic and position sensitive") {
  WordPieceVocab vocab = corpus_vocab();
  MiniEncoder enc(small_encoder_cfg(vocab, 16, 8, 3));

  SubwordSequence seq = make_seq({2, 5, 9, 7, 3, 0, 0, 0}, 5);
  const auto a = enc.embed({seq}, {{"t", 0}}, nullptr);
  const auto b = enc.embed({seq}, {{"t", 0}}, nullptr);
  REQUIRE(a->value.rank() == 2);
  CHECK(a->value.dim(1) == 16);
  CHECK(bits_equal(a->value.values(), b->value.values()));

  // Swapping two real tokens must register through the position table.
  SubwordSequence swapped = make_seq({2, 9, 5, 7, 3, 0, 0, 0}, 5);
  const auto c = enc.embed({swapped}, {{"t", 0}}, nullptr);
  CHECK_FALSE(bits_equal(a->value.values(), c->value.values()));

  // Batch evaluation matches one-at-a-time evaluation.
  const auto batch = enc.embed({seq, swapped}, {{"t", 0}, {"t", 4}}, nullptr);
  for (int j = 0; j < 16; ++j) {
    CHECK(batch->value.at2(0, j) == doctest::Approx(a->value.at2(0, j)).epsilon(1e-6));
    CHECK(batch->value.at2(1, j) == doctest::Approx(c->value.at2(0, j)).epsilon(1e-6));
  }
}

TEST_CASE("encoder forward matches a hand-rolled reference") {
  // Single layer, single head, f64: every stage recomputed with plain loops.
  MiniEncoderNetT<double> net("enc", 6, 4, 1, 1, 3, 0);
  Rng rng(11);
  net.init(rng);

  std::map<std::string, const TensorD*> arr;
  for (auto* set : net.param_sets())
    for (size_t i = 0; i < set->count(); ++i) arr[set->slot(i).name] = &set->slot(i).value;

  const std::vector<int> ids{2, 4, 0};
  TensorD mask({1, 3});
  mask.values() = {1.0, 1.0, 0.0};

  const int d = 4, s = 3;
  auto row = [&](const std::string& name, int r) {
    std::vector<double> out(static_cast<size_t>(d));
    for (int c = 0; c < d; ++c) out[static_cast<size_t>(c)] = arr.at(name)->values()[static_cast<size_t>(r * d + c)];
    return out;
  };
  auto dense = [&](const std::string& prefix, const std::vector<double>& x, int dout) {
    const auto& w = *arr.at(prefix + "/weight");
    const auto& b = *arr.at(prefix + "/bias");
    std::vector<double> out(static_cast<size_t>(dout));
    for (int c = 0; c < dout; ++c) {
      double acc = b.values()[static_cast<size_t>(c)];
      for (size_t r = 0; r < x.size(); ++r) acc += x[r] * w.values()[r * static_cast<size_t>(dout) + static_cast<size_t>(c)];
      out[static_cast<size_t>(c)] = acc;
    }
    return out;
  };
  auto layer_norm = [&](const std::string& prefix, const std::vector<double>& x) {
    double mu = 0.0;
    for (double v : x) mu += v;
    mu /= static_cast<double>(x.size());
    double var = 0.0;
    for (double v : x) var += (v - mu) * (v - mu);
    var /= static_cast<double>(x.size());
    const double istd = 1.0 / std::sqrt(var + 1e-5);
    std::vector<double> out(x.size());
    for (size_t i = 0; i < x.size(); ++i)
      out[i] = arr.at(prefix + "/gamma")->values()[i] * (x[i] - mu) * istd +
               arr.at(prefix + "/beta")->values()[i];
    return out;
  };

  // Token + position rows.
  std::vector<std::vector<double>> e(s);
  for (int i = 0; i < s; ++i) {
    e[static_cast<size_t>(i)] = row("enc/tok/weight", ids[static_cast<size_t>(i)]);
    const auto p = row("enc/pos/weight", i);
    for (int c = 0; c < d; ++c) e[static_cast<size_t>(i)][static_cast<size_t>(c)] += p[static_cast<size_t>(c)];
  }

  // Self-attention, one head: scale 1/sqrt(d).
  std::vector<std::vector<double>> q(s), k(s), v(s), x1(s), x2(s);
  for (int i = 0; i < s; ++i) {
    q[static_cast<size_t>(i)] = dense("enc/l0/attn/wq", e[static_cast<size_t>(i)], d);
    k[static_cast<size_t>(i)] = dense("enc/l0/attn/wk", e[static_cast<size_t>(i)], d);
    v[static_cast<size_t>(i)] = dense("enc/l0/attn/wv", e[static_cast<size_t>(i)], d);
  }
  for (int i = 0; i < s; ++i) {
    std::vector<double> score(static_cast<size_t>(s));
    for (int j = 0; j < s; ++j) {
      double dot = 0.0;
      for (int c = 0; c < d; ++c)
        dot += q[static_cast<size_t>(i)][static_cast<size_t>(c)] * k[static_cast<size_t>(j)][static_cast<size_t>(c)];
      score[static_cast<size_t>(j)] = mask.values()[static_cast<size_t>(j)] == 0.0 ? -1e9 : dot / std::sqrt(4.0);
    }
    const double mx = *std::max_element(score.begin(), score.end());
    double denom = 0.0;
    for (double sc : score) denom += std::exp(sc - mx);
    std::vector<double> ctx(static_cast<size_t>(d), 0.0);
    for (int j = 0; j < s; ++j) {
      const double p = std::exp(score[static_cast<size_t>(j)] - mx) / denom;
      for (int c = 0; c < d; ++c) ctx[static_cast<size_t>(c)] += p * v[static_cast<size_t>(j)][static_cast<size_t>(c)];
    }
    const auto ao = dense("enc/l0/attn/wo", ctx, d);
    std::vector<double> sum(static_cast<size_t>(d));
    for (int c = 0; c < d; ++c) sum[static_cast<size_t>(c)] = e[static_cast<size_t>(i)][static_cast<size_t>(c)] + ao[static_cast<size_t>(c)];
    x1[static_cast<size_t>(i)] = layer_norm("enc/l0/ln1", sum);
  }

  // Feed-forward with ReLU, then the second norm.
  for (int i = 0; i < s; ++i) {
    auto h = dense("enc/l0/ff1", x1[static_cast<size_t>(i)], 4 * d);
    for (auto& hv : h) hv = std::max(hv, 0.0);
    const auto f = dense("enc/l0/ff2", h, d);
    std::vector<double> sum(static_cast<size_t>(d));
    for (int c = 0; c < d; ++c) sum[static_cast<size_t>(c)] = x1[static_cast<size_t>(i)][static_cast<size_t>(c)] + f[static_cast<size_t>(c)];
    x2[static_cast<size_t>(i)] = layer_norm("enc/l0/ln2", sum);
  }

  // Pooling with mask [1,1,0] is exactly the mean of the two real states.
  const auto got = net.forward(ids, mask, 1, s, nullptr);
  for (int c = 0; c < d; ++c) {
    const double want = (x2[0][static_cast<size_t>(c)] + x2[1][static_cast<size_t>(c)]) / 2.0;
    CHECK(got->value.at2(0, c) == doctest::Approx(want).epsilon(1e-10));
  }
}

TEST_CASE("masked positions cannot influence the embedding") {
  WordPieceVocab vocab = corpus_vocab();
  MiniEncoder enc(small_encoder_cfg(vocab, 16, 8, 21));

  // Same real prefix, same mask, arbitrary garbage in the padding region.
  const auto a = enc.embed({make_seq({2, 6, 4, 0, 0, 0, 0, 0}, 3)}, {{"t", 0}}, nullptr);
  const auto b = enc.embed({make_seq({2, 6, 4, 9, 8, 7, 5, 1}, 3)}, {{"t", 0}}, nullptr);
  CHECK(bits_equal(a->value.values(), b->value.values()));
}

TEST_CASE("zeroed encoder forces every token state to the output bias vector") {
  WordPieceVocab vocab = corpus_vocab();
  MiniEncoder enc(small_encoder_cfg(vocab, 8, 8, 2));
  for (auto* set : enc.param_sets())
    for (size_t i = 0; i < set->count(); ++i) set->slot(i).value.zero();

  // With everything zeroed each state is the last norm's beta; pin it to v.
  const std::vector<float> v{0.5f, -1.25f, 2.0f, 0.0f, 3.5f, -0.75f, 1.0f, 0.25f};
  for (auto* set : enc.param_sets())
    if (set->prefix() == "encoder/l1/ln2") set->find("beta")->value.values() = v;

  const auto a = enc.embed({make_seq({2, 6, 4, 3, 0, 0, 0, 0}, 4)}, {{"t", 0}}, nullptr);
  const auto b = enc.embed({make_seq({5, 1, 3, 0, 0, 0, 0, 0}, 3)}, {{"u", 0}}, nullptr);
  for (int c = 0; c < 8; ++c) {
    CHECK(a->value.at2(0, c) == doctest::Approx(v[static_cast<size_t>(c)]).epsilon(1e-6));
    CHECK(b->value.at2(0, c) == doctest::Approx(v[static_cast<size_t>(c)]).epsilon(1e-6));
  }
}

TEST_CASE("distinct transcripts embed distinctly") {
  WordPieceVocab vocab = corpus_vocab();
  MiniEncoder enc(small_encoder_cfg(vocab, 16, 16, 4));
  auto corpus = filler_corpus(4, 19);
  std::vector<std::vector<float>> embs;
  for (const auto& lt : corpus) {
    const auto seq = wordpiece_tokenize(lt.transcript.tokens, vocab, 16);
    const auto e = enc.embed({seq}, {{lt.transcript.subject_id, -1}}, nullptr);
    embs.push_back(e->value.values());
  }
  for (size_t i = 0; i < embs.size(); ++i)
    for (size_t j = i + 1; j < embs.size(); ++j) CHECK_FALSE(bits_equal(embs[i], embs[j]));
}

TEST_CASE("sentence cache computes each transcript once") {
  WordPieceVocab vocab = corpus_vocab();
  MiniEncoder enc(small_encoder_cfg(vocab, 8, 8, 6));
  SentenceCache cache(enc);

  const auto seq_a = make_seq({2, 6, 4, 0, 0, 0, 0, 0}, 3);
  const auto seq_b = make_seq({5, 1, 3, 7, 0, 0, 0, 0}, 4);
  const auto& first = cache.get({"a", -1}, seq_a);
  CHECK(enc.embed_count() == 1);
  const auto& again = cache.get({"a", -1}, seq_a);
  CHECK(enc.embed_count() == 1);
  CHECK(&first == &again);
  cache.get({"b", -1}, seq_b);
  CHECK(enc.embed_count() == 2);
  CHECK(cache.size() == 2);
  cache.clear();
  cache.get({"a", -1}, seq_a);
  CHECK(enc.embed_count() == 3);
}

TEST_CASE("training touches the sentence embedder once per transcript per epoch") {
  auto corpus = filler_corpus(6, 23);
  WordPieceVocab vocab = corpus_vocab();
  WordVectorTable wordvecs(8);

  TextModelConfig mcfg;
  mcfg.d_word = 8;
  mcfg.d_ctx = 8;
  mcfg.d_sent = 8;
  mcfg.seed = 3;
  TextModel model(mcfg);
  MiniEncoder ctx(small_encoder_cfg(vocab, 8, 16, 4));
  MiniEncoder sent(small_encoder_cfg(vocab, 8, 32, 5));
  TextPredictor predictor(model, wordvecs, vocab, ctx, sent, 16, 32);

  TextTrainConfig cfg;
  cfg.lr = 1e-4f;
  cfg.max_epochs = 3;
  cfg.patience = 99;
  cfg.seed = 7;
  train_text(predictor, corpus, cfg);
  CHECK(sent.embed_count() == 6 * 3);
}

TEST_CASE("precomputed embedding files round trip and fail loudly on unknown keys") {
  EmbeddingFile file(3);
  file.put({"subj one", 0}, {1.0f, 2.0f, 3.0f});
  file.put({"subj one", 4}, {4.0f, 5.0f, 6.0f});
  file.put({"subj one", -1}, {7.0f, 8.0f, 9.0f});
  file.put({"other", -1}, {0.5f, 0.25f, -0.125f});
  CHECK_THROWS_AS(file.put({"bad", 0}, {1.0f}), Error);

  const std::string path = tmp_path("adscreen_emb_test.bin");
  file.save(path);
  EmbeddingFile back = EmbeddingFile::load(path);
  CHECK(back.dim() == 3);
  CHECK(back.size() == 4);
  CHECK(back.get({"subj one", 4}) == std::vector<float>{4.0f, 5.0f, 6.0f});
  CHECK(back.get({"subj one", -1}) == std::vector<float>{7.0f, 8.0f, 9.0f});

  FileEmbedder embedder(std::move(back));
  CHECK(embedder.dim() == 3);
  const auto out = embedder.embed({}, {{"subj one", 0}, {"other", -1}}, nullptr);
  CHECK(out->value.at2(0, 0) == 1.0f);
  CHECK(out->value.at2(1, 2) == -0.125f);

  CHECK_THROWS_WITH_AS(embedder.embed({}, {{"missing", 12}}, nullptr),
                       doctest::Contains("missing"), Error);
  CHECK_THROWS_WITH_AS(embedder.embed({}, {{"subj one", 12}}, nullptr), doctest::Contains("12"),
                       Error);
  std::filesystem::remove(path);
}

TEST_CASE("file-backed and computed embedders are interchangeable in the predictor") {
  auto corpus = filler_corpus(4, 29);
  WordPieceVocab vocab = corpus_vocab();
  WordVectorTable wordvecs(8);

  TextModelConfig mcfg;
  mcfg.d_word = 8;
  mcfg.d_ctx = 8;
  mcfg.d_sent = 8;
  mcfg.seed = 9;
  TextModel model(mcfg);
  MiniEncoder ctx(small_encoder_cfg(vocab, 8, 16, 14));
  MiniEncoder sent(small_encoder_cfg(vocab, 8, 32, 15));

  std::vector<Transcript> transcripts;
  for (const auto& lt : corpus) transcripts.push_back(lt.transcript);
  FileEmbedder ctx_file(export_segment_embeddings(transcripts, ctx, vocab, 16));
  FileEmbedder sent_file(export_sentence_embeddings(transcripts, sent, vocab, 32));

  TextPredictor live(model, wordvecs, vocab, ctx, sent, 16, 32);
  TextPredictor canned(model, wordvecs, vocab, ctx_file, sent_file, 16, 32);

  for (const auto& lt : corpus) {
    const auto a = live.predict(lt.transcript);
    const auto b = canned.predict(lt.transcript);
    REQUIRE(a.segment_probs.size() == b.segment_probs.size());
    for (size_t i = 0; i < a.segment_probs.size(); ++i)
      CHECK(a.segment_probs[i] == doctest::Approx(b.segment_probs[i]).epsilon(1e-6));
    CHECK(a.p_text == doctest::Approx(b.p_text).epsilon(1e-6));
    CHECK(a.top5 == b.top5);
  }
}

TEST_CASE("segment probabilities stay inside the open unit interval") {
  auto corpus = filler_corpus(3, 33);
  WordPieceVocab vocab = corpus_vocab();
  WordVectorTable wordvecs(8);

  TextModelConfig mcfg;
  mcfg.d_word = 8;
  mcfg.d_ctx = 8;
  mcfg.d_sent = 8;
  mcfg.seed = 11;
  TextModel model(mcfg);
  MiniEncoder ctx(small_encoder_cfg(vocab, 8, 16, 24));
  MiniEncoder sent(small_encoder_cfg(vocab, 8, 32, 25));
  TextPredictor predictor(model, wordvecs, vocab, ctx, sent, 16, 32);

  for (const auto& lt : corpus) {
    const auto pred = predictor.predict(lt.transcript);
    for (float p : pred.segment_probs) {
      CHECK(p > 0.0f);
      CHECK(p < 1.0f);
    }
    CHECK(pred.p_text > 0.0f);
    CHECK(pred.p_text < 1.0f);
  }

  // Zeroed final dense: the head collapses to sigmoid(bias) for any input.
  auto* out = model.head_param_sets().back();
  REQUIRE(out->prefix() == "head/out");
  out->find("weight")->value.zero();
  out->find("bias")->value.values() = {0.7f};
  const float want = 1.0f / (1.0f + std::exp(-0.7f));
  const auto pred = predictor.predict(corpus[0].transcript);
  for (float p : pred.segment_probs) CHECK(p == doctest::Approx(want).epsilon(1e-6));

  out->find("bias")->value.values() = {0.0f};
  const auto mid = predictor.predict(corpus[1].transcript);
  for (float p : mid.segment_probs) CHECK(p == 0.5f);
}

TEST_CASE("concatenation width tracks the three branch dims") {
  TextModel def;
  CHECK(def.concat_dim() == 64 + 128 + 128);
  CHECK(def.concat_dim() == 320);

  TextModelConfig cfg;
  cfg.d_word = 8;
  cfg.d_ctx = 5;
  cfg.d_sent = 9;
  TextModel odd(cfg);
  CHECK(odd.concat_dim() == 64 + 5 + 9);

  // Predictor wiring rejects branch width mismatches up front.
  WordPieceVocab vocab = corpus_vocab();
  WordVectorTable narrow(7);
  auto cfg5 = small_encoder_cfg(vocab, 5, 16, 1);
  auto cfg9 = small_encoder_cfg(vocab, 9, 32, 1);
  cfg5.heads = cfg9.heads = 1;  // odd dims
  MiniEncoder enc5(cfg5);
  MiniEncoder enc9(cfg9);
  CHECK_THROWS_WITH_AS(TextPredictor(odd, narrow, vocab, enc5, enc9, 16, 32),
                       doctest::Contains("word vectors"), Error);
  WordVectorTable wide(8);
  CHECK_THROWS_WITH_AS(TextPredictor(odd, wide, vocab, enc9, enc9, 16, 32),
                       doctest::Contains("contextual"), Error);
  CHECK_THROWS_WITH_AS(TextPredictor(odd, wide, vocab, enc5, enc5, 16, 32),
                       doctest::Contains("sentence"), Error);
}

TEST_CASE("transcript aggregation is the arithmetic mean") {
  CHECK(aggregate_text({0.9f}) == doctest::Approx(0.9f));
  CHECK(aggregate_text({0.0f, 1.0f}) == doctest::Approx(0.5f));
  CHECK(aggregate_text({0.2f, 0.4f, 0.9f}) == doctest::Approx(0.5f));

  Rng rng(41);
  std::vector<float> probs(11);
  for (auto& p : probs) p = static_cast<float>(rng.uniform());
  const float mean = aggregate_text(probs);
  auto shuffled = probs;
  rng.shuffle(shuffled);
  CHECK(aggregate_text(shuffled) == doctest::Approx(mean).epsilon(1e-6));
  CHECK(mean >= *std::min_element(probs.begin(), probs.end()));
  CHECK(mean <= *std::max_element(probs.begin(), probs.end()));

  CHECK_THROWS_AS(aggregate_text({}), Error);
}

TEST_CASE("top segment ranking is descending with start-index tie-break") {
  std::vector<TranscriptSegment> segs;
  for (int i = 0; i < 7; ++i) segs.push_back(make_segment({"w" + std::to_string(i)}, i * 4));

  const std::vector<float> distinct{0.10f, 0.95f, 0.40f, 0.80f, 0.20f, 0.60f, 0.05f};
  CHECK(top_segments(segs, distinct) == std::vector<int>{1, 3, 5, 2, 4});

  std::vector<TranscriptSegment> three(segs.begin(), segs.begin() + 3);
  CHECK(top_segments(three, {0.3f, 0.1f, 0.2f}) == std::vector<int>{0, 2, 1});

  // Equal probabilities fall back to the earlier start offset.
  const std::vector<float> tied{0.3f, 0.9f, 0.3f, 0.5f, 0.9f, 0.1f, 0.2f};
  CHECK(top_segments(segs, tied) == std::vector<int>{1, 4, 3, 0, 2});

  CHECK_THROWS_AS(top_segments(segs, {0.1f}), Error);
}

TEST_CASE("highlight report pairs segment text with probabilities") {
  TextPrediction pred;
  pred.segments.push_back(make_segment({"the", "boy", "falls"}, 0));
  pred.segments.push_back(make_segment({"uh", "um", "the", "uh", "cookie", "jar", "and"}, 4));
  pred.segments.push_back(make_segment({"water", "runs"}, 8));
  pred.segment_probs = {0.2f, 0.9f, 0.5f};
  pred.top5 = top_segments(pred.segments, pred.segment_probs);

  const auto report = highlight_top5(pred);
  REQUIRE(report.size() == 3);
  CHECK(report[0].first == "uh um the uh cookie jar and");
  CHECK(report[0].second == 0.9f);
  CHECK(report[1].first == "water runs");                // padding dropped
  CHECK(report[2].first == "the boy falls");
  CHECK(report[2].second == 0.2f);
}

TEST_CASE("filler-dense transcripts are separated within fifty epochs") {
  auto corpus = filler_corpus(100, 11);
  std::vector<LabeledTranscript> train(corpus.begin(), corpus.begin() + 80);
  std::vector<LabeledTranscript> heldout(corpus.begin() + 80, corpus.end());

  WordPieceVocab vocab = corpus_vocab();
  WordVectorTable wordvecs(16);

  TextModelConfig mcfg;
  mcfg.d_word = 16;
  mcfg.d_ctx = 32;
  mcfg.d_sent = 32;
  mcfg.seed = 3;
  TextModel model(mcfg);
  MiniEncoder ctx(small_encoder_cfg(vocab, 32, 16, 4));
  MiniEncoder sent(small_encoder_cfg(vocab, 32, 64, 5));
  TextPredictor predictor(model, wordvecs, vocab, ctx, sent, 16, 64);

  TextTrainConfig cfg;
  cfg.lr = 1e-3f;
  cfg.max_epochs = 50;
  cfg.patience = 50;
  cfg.val_fraction = 0.2f;
  cfg.seed = 3;
  const TrainHistory hist = train_text(predictor, train, cfg);
  REQUIRE(hist.train_loss.size() <= 50);
  CHECK(hist.best_epoch >= 0);
  CHECK(hist.val_loss.size() == hist.train_loss.size());

  int correct = 0;
  for (const auto& lt : heldout) {
    const auto pred = predictor.predict(lt.transcript);
    correct += (pred.p_text >= 0.5f ? 1 : 0) == lt.label;
  }
  CHECK(static_cast<double>(correct) / static_cast<double>(heldout.size()) >= 0.95);
}

TEST_CASE("equal seeds reproduce identical trained weights") {
  auto run = [&]() {
    auto corpus = filler_corpus(10, 37);
    WordPieceVocab vocab = corpus_vocab();
    WordVectorTable wordvecs(8);
    TextModelConfig mcfg;
    mcfg.d_word = 8;
    mcfg.d_ctx = 8;
    mcfg.d_sent = 8;
    mcfg.seed = 21;
    TextModel model(mcfg);
    MiniEncoder ctx(small_encoder_cfg(vocab, 8, 16, 22));
    MiniEncoder sent(small_encoder_cfg(vocab, 8, 32, 23));
    TextPredictor predictor(model, wordvecs, vocab, ctx, sent, 16, 32);
    TextTrainConfig cfg;
    cfg.lr = 1e-3f;
    cfg.max_epochs = 4;
    cfg.patience = 99;
    cfg.seed = 31;
    train_text(predictor, corpus, cfg);
    auto arrays = dump_arrays(model.param_sets());
    for (const auto& [name, values] : dump_arrays(ctx.param_sets())) arrays["ctx:" + name] = values;
    return arrays;
  };
  const auto a = run();
  const auto b = run();
  REQUIRE(a.size() == b.size());
  for (const auto& [name, values] : a) {
    REQUIRE(b.count(name) == 1);
    CHECK(bits_equal(values, b.at(name)));
  }
}

TEST_CASE("freezing all branches leaves only normalization and head arrays moving") {
  auto corpus = filler_corpus(8, 43);
  WordPieceVocab vocab = corpus_vocab();
  WordVectorTable wordvecs(8);
  TextModelConfig mcfg;
  mcfg.d_word = 8;
  mcfg.d_ctx = 8;
  mcfg.d_sent = 8;
  mcfg.seed = 27;
  TextModel model(mcfg);
  MiniEncoder ctx(small_encoder_cfg(vocab, 8, 16, 28));
  MiniEncoder sent(small_encoder_cfg(vocab, 8, 32, 29));
  TextPredictor predictor(model, wordvecs, vocab, ctx, sent, 16, 32);

  auto before = dump_arrays(model.param_sets());
  for (const auto& [name, values] : dump_arrays(ctx.param_sets())) before["ctx:" + name] = values;
  for (const auto& [name, values] : dump_arrays(sent.param_sets())) before["sent:" + name] = values;

  TextTrainConfig cfg;
  cfg.lr = 1e-3f;
  cfg.max_epochs = 3;
  cfg.patience = 99;
  cfg.freeze_wordvec_branch = true;
  cfg.freeze_encoder = true;
  cfg.seed = 5;
  train_text(predictor, corpus, cfg);

  auto after = dump_arrays(model.param_sets());
  for (const auto& [name, values] : dump_arrays(ctx.param_sets())) after["ctx:" + name] = values;
  for (const auto& [name, values] : dump_arrays(sent.param_sets())) after["sent:" + name] = values;

  REQUIRE(before.size() == after.size());
  int head_changed = 0;
  for (const auto& [name, values] : before) {
    const bool is_head = name.rfind("head/", 0) == 0;
    if (is_head) {
      head_changed += bits_equal(values, after.at(name)) ? 0 : 1;
    } else {
      CHECK_MESSAGE(bits_equal(values, after.at(name)), name);
    }
  }
  // BN gamma/beta/stats and the output dense all moved.
  CHECK(head_changed >= 5);
}

TEST_CASE("training validates labels, ids, and batch size") {
  WordPieceVocab vocab = corpus_vocab();
  WordVectorTable wordvecs(8);
  TextModelConfig mcfg;
  mcfg.d_word = 8;
  mcfg.d_ctx = 8;
  mcfg.d_sent = 8;
  TextModel model(mcfg);
  MiniEncoder ctx(small_encoder_cfg(vocab, 8, 16, 2));
  MiniEncoder sent(small_encoder_cfg(vocab, 8, 32, 3));
  TextPredictor predictor(model, wordvecs, vocab, ctx, sent, 16, 32);

  CHECK_THROWS_WITH_AS(train_text(predictor, {}, {}), doctest::Contains("empty"), Error);

  auto corpus = filler_corpus(4, 47);
  for (auto& lt : corpus) lt.label = 1;
  CHECK_THROWS_WITH_AS(train_text(predictor, corpus, {}), doctest::Contains("both classes"),
                       Error);

  auto dup = filler_corpus(4, 47);
  dup[2].transcript.subject_id = dup[0].transcript.subject_id;
  CHECK_THROWS_WITH_AS(train_text(predictor, dup, {}), doctest::Contains("duplicate"), Error);

  TextTrainConfig bad;
  bad.batch_size = 0;
  CHECK_THROWS_WITH_AS(train_text(predictor, filler_corpus(4, 47), bad),
                       doctest::Contains("batch_size"), Error);
}

TEST_CASE("gradients match finite differences through all three branches") {
  Rng rng(61);

  TextNetT<double> net(3, 5, 4, 2, {2, 3}, 2);
  net.init(rng);
  MiniEncoderNetT<double> enc("enc", 7, 4, 1, 2, 4, 0);
  enc.init(rng);

  const int n = 3;
  TensorD x({n, 5, 3});
  for (auto& v : x.values()) v = rng.normal();
  TensorD sent({n, 2});
  for (auto& v : sent.values()) v = rng.normal();
  // Pad id 0 appears only at masked positions: the embedding backward skips
  // the pad row, which is only consistent when that row cannot reach the loss.
  const std::vector<int> ids{2, 5, 1, 0, 3, 4, 6, 5, 1, 2, 5, 0};
  TensorD mask({n, 4});
  mask.values() = {1, 1, 1, 0, 1, 1, 1, 1, 1, 1, 1, 0};
  TensorD target({n, 1});
  target.values() = {1.0, 0.0, 1.0};

  std::vector<LayerParamsT<double>*> ps = net.param_sets();
  for (auto* p : enc.param_sets()) ps.push_back(p);

  auto run = [&](GradTapeT<double>* tape) {
    auto ctx = enc.forward(ids, mask, n, 4, tape);
    auto probs = net.forward(make_var(x), ctx, make_var(sent), BnMode::kTrain, tape);
    if (!tape) return static_cast<double>(bce_loss(probs->value, target));
    const double loss = bce_backward(probs, target);
    tape->backward();
    return loss;
  };
  auto report = grad_check(
      ps, [&] { return run(nullptr); },
      [&] {
        AdamT<double>::zero_grads(ps);
        GradTapeT<double> tape;
        return run(&tape);
      });
  CHECK(report.max_rel_err <= 1e-4);
}

TEST_CASE("model and encoder weight files round trip") {
  WordPieceVocab vocab = corpus_vocab();
  TextModelConfig mcfg;
  mcfg.d_word = 8;
  mcfg.d_ctx = 8;
  mcfg.d_sent = 8;
  mcfg.seed = 51;
  TextModel a(mcfg);
  mcfg.seed = 52;
  TextModel b(mcfg);

  Rng rng(71);
  Tensor m({mcfg.max_tokens, mcfg.d_word});
  for (auto& v : m.values()) v = static_cast<float>(rng.normal());
  const Tensor ya = fasttext_cnn_forward(a, m);
  CHECK_FALSE(bits_equal(ya.values(), fasttext_cnn_forward(b, m).values()));

  const std::string model_path = tmp_path("adscreen_textmodel_test.bin");
  a.save(model_path);
  b.load(model_path);
  CHECK(bits_equal(ya.values(), fasttext_cnn_forward(b, m).values()));
  std::filesystem::remove(model_path);

  MiniEncoder e1(small_encoder_cfg(vocab, 8, 8, 61));
  MiniEncoder e2(small_encoder_cfg(vocab, 8, 8, 62));
  const auto seq = make_seq({2, 6, 4, 3, 0, 0, 0, 0}, 4);
  const auto before = e1.embed({seq}, {{"t", 0}}, nullptr);
  CHECK_FALSE(bits_equal(before->value.values(),
                         e2.embed({seq}, {{"t", 0}}, nullptr)->value.values()));

  const std::string enc_path = tmp_path("adscreen_encoder_test.bin");
  e1.save(enc_path);
  e2.load(enc_path);
  CHECK(bits_equal(before->value.values(),
                   e2.embed({seq}, {{"t", 0}}, nullptr)->value.values()));
  std::filesystem::remove(enc_path);
}
