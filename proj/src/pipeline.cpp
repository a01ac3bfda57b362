#include "adscreen/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "adscreen/audio.hpp"
#include "adscreen/audio_model.hpp"
#include "adscreen/crossval.hpp"
#include "adscreen/denoise.hpp"
#include "adscreen/error.hpp"
#include "adscreen/fusion.hpp"
#include "adscreen/logmel.hpp"
#include "adscreen/parallel.hpp"
#include "adscreen/rng.hpp"
#include "adscreen/synth.hpp"
#include "adscreen/version.hpp"

namespace adscreen {
namespace {

namespace fs = std::filesystem;

void log_run(const RunConfig& cfg, std::ostream& log, const char* command) {
  char hash[19];
  std::snprintf(hash, sizeof(hash), "0x%016llx", static_cast<unsigned long long>(cfg.hash()));
  log << command << ": seed " << cfg.get_seed("seed") << ", config hash " << hash
      << ", resolved config:\n";
  std::istringstream lines(cfg.resolved_text());
  std::string line;
  while (std::getline(lines, line)) log << "  " << line << "\n";
}

void require(const RunConfig& cfg, const std::string& key, const char* command) {
  if (cfg.get(key).empty())
    throw Error(std::string(command) + ": config key \"" + key + "\" is required");
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::string cache_file(const std::string& cache_dir, const std::string& subject_id, bool denoise) {
  return (fs::path(cache_dir) / (subject_id + (denoise ? ".dn" : ".raw") + ".logmel.bin")).string();
}

const std::string& transcript_column(const SubjectRecord& r, TranscriptSource source) {
  return source == TranscriptSource::kManual ? r.transcript_path : r.asr_transcript_path;
}

AudioTrainConfig audio_train_config(const RunConfig& cfg, uint64_t seed) {
  AudioTrainConfig out;
  out.lr = static_cast<float>(cfg.get_double("audio.lr"));
  out.batch_size = cfg.get_int("audio.batch");
  out.patience = cfg.get_int("audio.patience");
  out.max_epochs = cfg.get_int("audio.max_epochs");
  out.val_fraction = static_cast<float>(cfg.get_double("audio.val_fraction"));
  out.freeze_backbone = cfg.get_bool("audio.freeze_backbone");
  out.seed = seed;
  return out;
}

TextTrainConfig text_train_config(const RunConfig& cfg, uint64_t seed) {
  TextTrainConfig out;
  out.lr = static_cast<float>(cfg.get_double("text.lr"));
  out.batch_size = cfg.get_int("text.batch");
  out.patience = cfg.get_int("text.patience");
  out.max_epochs = cfg.get_int("text.max_epochs");
  out.val_fraction = static_cast<float>(cfg.get_double("text.val_fraction"));
  out.freeze_wordvec_branch = cfg.get_bool("text.freeze_wordvec");
  out.freeze_encoder = cfg.get_bool("text.freeze_encoder");
  out.seed = seed;
  return out;
}

std::vector<int> config_widths(const RunConfig& cfg) {
  std::vector<int> widths;
  for (double w : cfg.get_list("text.widths")) {
    if (w != static_cast<int>(w))
      throw Error("config: text.widths entry " + format_double(w) + " is not an integer");
    widths.push_back(static_cast<int>(w));
  }
  if (widths.empty()) throw Error("config: text.widths is empty");
  return widths;
}

TextModelConfig text_model_config(const RunConfig& cfg, int d_ctx, int d_sent, uint64_t seed) {
  TextModelConfig out;
  out.d_word = cfg.get_int("text.d_word");
  out.max_tokens = cfg.get_int("text.max_tokens");
  out.d_ctx = d_ctx;
  out.d_sent = d_sent;
  out.widths = config_widths(cfg);
  out.filters = cfg.get_int("text.filters");
  out.seed = seed;
  return out;
}

std::unique_ptr<WordVectorTable> make_wordvecs(const RunConfig& cfg) {
  const std::string& file = cfg.get("text.wordvec_file");
  const int d_word = cfg.get_int("text.d_word");
  // Hashed stand-in vectors are seeded independently of the run seed so a
  // model trained under one seed predicts identically under another.
  if (file.empty()) return std::make_unique<WordVectorTable>(d_word);
  auto table = std::make_unique<WordVectorTable>(WordVectorTable::load(file));
  if (table->dim() != d_word)
    throw Error("config: text.d_word = " + std::to_string(d_word) + " but " + file + " holds " +
                std::to_string(table->dim()) + "-d vectors");
  return table;
}

void save_vocab(const WordPieceVocab& vocab, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write vocabulary: " + path);
  for (int i = 0; i < vocab.size(); ++i) f << vocab.piece(i) << '\n';
}

void finish_stack(TextStack& stack, const RunConfig& cfg) {
  stack.predictor = std::make_unique<TextPredictor>(
      *stack.model, *stack.wordvecs, *stack.vocab, *stack.ctx, *stack.sent,
      cfg.get_int("text.ctx_max_len"), cfg.get_int("text.sent_max_len"));
}

int first_max_accuracy(const std::vector<WeightRow>& sweep) {
  int best = 0;
  for (size_t i = 1; i < sweep.size(); ++i)
    if (sweep[i].metrics.accuracy > sweep[static_cast<size_t>(best)].metrics.accuracy)
      best = static_cast<int>(i);
  return best;
}

}  // namespace

int patch_frames(const RunConfig& cfg) {
  const std::string& v = cfg.get("segment");
  if (v == "short") return 96;
  if (v == "long") return 496;
  throw Error("config: segment = \"" + v + "\" is not short or long");
}

TranscriptSource transcript_source(const RunConfig& cfg) {
  const std::string& v = cfg.get("source");
  if (v == "manual") return TranscriptSource::kManual;
  if (v == "asr") return TranscriptSource::kAsr;
  throw Error("config: source = \"" + v + "\" is not manual or asr");
}

bool denoise_enabled(const RunConfig& cfg) {
  const std::string& v = cfg.get("denoise");
  if (v == "auto") return transcript_source(cfg) == TranscriptSource::kAsr;
  return cfg.get_bool("denoise");
}

std::string features_dir(const RunConfig& cfg) {
  const std::string& v = cfg.get("features");
  if (!v.empty()) return v;
  return (fs::path(cfg.get("out")) / "features").string();
}

std::string models_dir(const RunConfig& cfg) {
  const std::string& v = cfg.get("models");
  return v.empty() ? cfg.get("out") : v;
}

Transcript load_subject_transcript(const Manifest& m, const SubjectRecord& r,
                                   TranscriptSource source) {
  const std::string& rel = transcript_column(r, source);
  if (rel.empty())
    throw Error("subject " + r.subject_id + " has no " +
                (source == TranscriptSource::kManual ? "manual" : "asr") + " transcript");
  const std::string path = resolve_manifest_path(m, rel);
  if (ends_with(path, ".cha")) return transcript_from_cha(r.subject_id, path, {"PAR"}, source);
  return transcript_from_text(r.subject_id, read_file(path), source);
}

Tensor subject_spectrogram(const Manifest& m, const SubjectRecord& r, bool denoise,
                           const std::string& cache_dir) {
  if (r.audio_path.empty()) throw Error("subject " + r.subject_id + " has no audio");
  if (!cache_dir.empty()) {
    const std::string cached = cache_file(cache_dir, r.subject_id, denoise);
    if (fs::exists(cached)) return load_feature_cache(cached);
  }
  AudioClip clip = load_wav(resolve_manifest_path(m, r.audio_path));
  if (denoise) clip = denoise_mmse_lsa(clip);
  if (clip.sample_rate != kAnalysisRate) clip = resample(clip, kAnalysisRate);
  return logmel_spectrogram(clip);
}

TextStack make_text_stack(const RunConfig& cfg, const std::vector<Transcript>& vocab_source,
                          uint64_t seed) {
  TextStack stack;
  std::set<std::string> words;
  for (const auto& t : vocab_source)
    for (const auto& tok : t.tokens) words.insert(tok);
  std::vector<std::string> pieces{"[PAD]", "[UNK]", "[CLS]", "[SEP]"};
  pieces.insert(pieces.end(), words.begin(), words.end());
  stack.vocab = std::make_unique<WordPieceVocab>(WordPieceVocab::from_lines(pieces));
  stack.wordvecs = make_wordvecs(cfg);

  const std::string& embedder = cfg.get("embedder");
  int d_ctx = cfg.get_int("text.d_ctx");
  int d_sent = cfg.get_int("text.d_sent");
  if (embedder == "mini") {
    MiniEncoderConfig ctx_cfg;
    ctx_cfg.vocab = stack.vocab->size();
    ctx_cfg.dim = d_ctx;
    ctx_cfg.layers = cfg.get_int("text.encoder_layers");
    ctx_cfg.heads = cfg.get_int("text.encoder_heads");
    ctx_cfg.max_len = cfg.get_int("text.ctx_max_len");
    ctx_cfg.pad_id = stack.vocab->pad_id();
    ctx_cfg.seed = Rng::derive(seed, "ctx-encoder");
    MiniEncoderConfig sent_cfg = ctx_cfg;
    sent_cfg.dim = d_sent;
    sent_cfg.max_len = cfg.get_int("text.sent_max_len");
    sent_cfg.seed = Rng::derive(seed, "sent-encoder");
    stack.ctx = std::make_unique<MiniEncoder>(ctx_cfg);
    stack.sent = std::make_unique<MiniEncoder>(sent_cfg);
  } else if (embedder == "file") {
    require(cfg, "embeddings.segments", "embedder=file");
    require(cfg, "embeddings.sentences", "embedder=file");
    stack.ctx = std::make_unique<FileEmbedder>(FileEmbedder::load(cfg.get("embeddings.segments")));
    stack.sent =
        std::make_unique<FileEmbedder>(FileEmbedder::load(cfg.get("embeddings.sentences")));
    d_ctx = stack.ctx->dim();
    d_sent = stack.sent->dim();
  } else {
    throw Error("config: embedder = \"" + embedder + "\" is not mini or file");
  }

  stack.model = std::make_unique<TextModel>(
      text_model_config(cfg, d_ctx, d_sent, Rng::derive(seed, "text-init")));
  finish_stack(stack, cfg);
  return stack;
}

TextStack load_text_stack(const RunConfig& cfg, const std::string& dir) {
  TextStack stack;
  stack.vocab = std::make_unique<WordPieceVocab>(WordPieceVocab::load((fs::path(dir) / "vocab.txt").string()));
  stack.wordvecs = make_wordvecs(cfg);

  const std::string& embedder = cfg.get("embedder");
  int d_ctx = cfg.get_int("text.d_ctx");
  int d_sent = cfg.get_int("text.d_sent");
  if (embedder == "mini") {
    MiniEncoderConfig ctx_cfg;
    ctx_cfg.vocab = stack.vocab->size();
    ctx_cfg.dim = d_ctx;
    ctx_cfg.layers = cfg.get_int("text.encoder_layers");
    ctx_cfg.heads = cfg.get_int("text.encoder_heads");
    ctx_cfg.max_len = cfg.get_int("text.ctx_max_len");
    ctx_cfg.pad_id = stack.vocab->pad_id();
    MiniEncoderConfig sent_cfg = ctx_cfg;
    sent_cfg.dim = d_sent;
    sent_cfg.max_len = cfg.get_int("text.sent_max_len");
    auto ctx = std::make_unique<MiniEncoder>(ctx_cfg);
    ctx->load((fs::path(dir) / "ctx_encoder.bin").string());
    auto sent = std::make_unique<MiniEncoder>(sent_cfg);
    sent->load((fs::path(dir) / "sent_encoder.bin").string());
    stack.ctx = std::move(ctx);
    stack.sent = std::move(sent);
  } else if (embedder == "file") {
    require(cfg, "embeddings.segments", "embedder=file");
    require(cfg, "embeddings.sentences", "embedder=file");
    stack.ctx = std::make_unique<FileEmbedder>(FileEmbedder::load(cfg.get("embeddings.segments")));
    stack.sent =
        std::make_unique<FileEmbedder>(FileEmbedder::load(cfg.get("embeddings.sentences")));
    d_ctx = stack.ctx->dim();
    d_sent = stack.sent->dim();
  } else {
    throw Error("config: embedder = \"" + embedder + "\" is not mini or file");
  }

  stack.model = std::make_unique<TextModel>(text_model_config(cfg, d_ctx, d_sent, 1));
  stack.model->load((fs::path(dir) / "text_model.bin").string());
  finish_stack(stack, cfg);
  return stack;
}

void run_synth(const RunConfig& cfg, std::ostream& log) {
  log_run(cfg, log, "synth");
  const int n = cfg.get_int("synth.n");
  const uint64_t seed = cfg.get_seed("seed");
  const std::string out = cfg.get("out");
  Manifest m = synth_corpus(n, seed, out);
  const uint64_t hash = cfg.hash();
  write_sidecar((fs::path(out) / "manifest.csv").string(), hash, seed);
  for (const auto& r : m.subjects) {
    write_sidecar(resolve_manifest_path(m, r.audio_path), hash, seed);
    write_sidecar(resolve_manifest_path(m, r.transcript_path), hash, seed);
    write_sidecar(resolve_manifest_path(m, r.asr_transcript_path), hash, seed);
  }
  log << "synth: wrote " << m.subjects.size() << " subjects under " << out << "\n";
}

void run_features(const RunConfig& cfg, std::ostream& log) {
  log_run(cfg, log, "features");
  require(cfg, "manifest", "features");
  Manifest m = ingest_manifest(cfg.get("manifest"));
  const bool denoise = denoise_enabled(cfg);
  const std::string fdir = features_dir(cfg);
  fs::create_directories(fdir);
  const uint64_t hash = cfg.hash();
  const uint64_t seed = cfg.get_seed("seed");

  std::vector<const SubjectRecord*> with_audio;
  for (const auto& r : m.subjects) {
    if (r.audio_path.empty())
      log << "features: subject " << r.subject_id << " has no audio, skipped\n";
    else
      with_audio.push_back(&r);
  }
  parallel_for(with_audio.size(), cfg.get_int("jobs"), [&](size_t i) {
    const SubjectRecord& r = *with_audio[i];
    Tensor spec = subject_spectrogram(m, r, denoise, "");
    const std::string path = cache_file(fdir, r.subject_id, denoise);
    save_feature_cache(path, spec);
    write_sidecar(path, hash, seed);
  });
  log << "features: cached " << with_audio.size() << " spectrograms under " << fdir << "\n";
}

void run_train_audio(const RunConfig& cfg, std::ostream& log) {
  log_run(cfg, log, "train-audio");
  require(cfg, "manifest", "train-audio");
  Manifest m = ingest_manifest(cfg.get("manifest"));
  const int k = patch_frames(cfg);
  const bool denoise = denoise_enabled(cfg);
  const std::string fdir = features_dir(cfg);
  const uint64_t seed = cfg.get_seed("seed");

  std::vector<AudioExample> examples;
  for (const auto& r : m.subjects) {
    if (r.audio_path.empty()) continue;
    Tensor spec = subject_spectrogram(m, r, denoise, fdir);
    auto patches = partition_patches(spec, k, r.subject_id);
    if (patches.empty()) {
      log << "train-audio: subject " << r.subject_id << " is shorter than one patch, skipped\n";
      continue;
    }
    for (auto& p : patches) examples.push_back({std::move(p), r.label});
  }

  MVGGish model(Rng::derive(seed, "audio-init"));
  const std::string& backbone = cfg.get("audio.backbone_weights");
  if (!backbone.empty()) model.load_backbone(backbone, true);
  TrainHistory h = train_audio(model, examples, audio_train_config(cfg, Rng::derive(seed, "audio-train")));

  const std::string out = cfg.get("out");
  fs::create_directories(out);
  const uint64_t hash = cfg.hash();
  const std::string model_path = (fs::path(out) / "audio_model.bin").string();
  model.save(model_path);
  write_sidecar(model_path, hash, seed);
  const std::string hist_path = (fs::path(out) / "audio_history.csv").string();
  save_history_csv(h, hist_path);
  write_sidecar(hist_path, hash, seed);
  log << "train-audio: " << examples.size() << " patches, " << h.train_loss.size()
      << " epochs (best " << h.best_epoch + 1 << "), model at " << model_path << "\n";
}

void run_train_text(const RunConfig& cfg, std::ostream& log) {
  log_run(cfg, log, "train-text");
  require(cfg, "manifest", "train-text");
  Manifest m = ingest_manifest(cfg.get("manifest"));
  const TranscriptSource source = transcript_source(cfg);
  const uint64_t seed = cfg.get_seed("seed");

  std::vector<LabeledTranscript> data;
  std::vector<Transcript> transcripts;
  for (const auto& r : m.subjects) {
    if (transcript_column(r, source).empty()) {
      log << "train-text: subject " << r.subject_id << " has no transcript, skipped\n";
      continue;
    }
    Transcript t = load_subject_transcript(m, r, source);
    transcripts.push_back(t);
    data.push_back({std::move(t), r.label});
  }

  TextStack stack = make_text_stack(cfg, transcripts, Rng::derive(seed, "text"));
  TrainHistory h =
      train_text(*stack.predictor, data, text_train_config(cfg, Rng::derive(seed, "text-train")));

  const std::string out = cfg.get("out");
  fs::create_directories(out);
  const uint64_t hash = cfg.hash();
  auto artifact = [&](const std::string& name) { return (fs::path(out) / name).string(); };
  stack.model->save(artifact("text_model.bin"));
  write_sidecar(artifact("text_model.bin"), hash, seed);
  save_vocab(*stack.vocab, artifact("vocab.txt"));
  write_sidecar(artifact("vocab.txt"), hash, seed);
  if (auto* mini = dynamic_cast<MiniEncoder*>(stack.ctx.get())) {
    mini->save(artifact("ctx_encoder.bin"));
    write_sidecar(artifact("ctx_encoder.bin"), hash, seed);
  }
  if (auto* mini = dynamic_cast<MiniEncoder*>(stack.sent.get())) {
    mini->save(artifact("sent_encoder.bin"));
    write_sidecar(artifact("sent_encoder.bin"), hash, seed);
  }
  save_history_csv(h, artifact("text_history.csv"));
  write_sidecar(artifact("text_history.csv"), hash, seed);
  log << "train-text: " << data.size() << " transcripts, " << h.train_loss.size()
      << " epochs (best " << h.best_epoch + 1 << "), model at " << artifact("text_model.bin")
      << "\n";
}

void run_predict(const RunConfig& cfg, std::ostream& log) {
  log_run(cfg, log, "predict");
  require(cfg, "manifest", "predict");
  Manifest m = ingest_manifest(cfg.get("manifest"));
  const int k = patch_frames(cfg);
  const bool denoise = denoise_enabled(cfg);
  const TranscriptSource source = transcript_source(cfg);
  const std::string fdir = features_dir(cfg);
  const std::string mdir = models_dir(cfg);

  bool need_audio = false, need_text = false;
  for (const auto& r : m.subjects) {
    need_audio |= !r.audio_path.empty();
    need_text |= !transcript_column(r, source).empty();
  }

  std::unique_ptr<MVGGish> audio;
  if (need_audio) {
    const std::string path = (fs::path(mdir) / "audio_model.bin").string();
    if (!fs::exists(path)) throw Error("predict: no audio model at " + path + "; run train-audio");
    audio = std::make_unique<MVGGish>(1);
    audio->load(path);
  }
  TextStack stack;
  if (need_text) {
    if (!fs::exists(fs::path(mdir) / "text_model.bin"))
      throw Error("predict: no text model under " + mdir + "; run train-text");
    stack = load_text_stack(cfg, mdir);
  }

  std::vector<SubjectPrediction> preds;
  for (const auto& r : m.subjects) {
    SubjectPrediction p;
    p.subject_id = r.subject_id;
    p.label = r.label;
    p.age = r.age;
    p.gender = r.gender;
    if (!r.audio_path.empty()) {
      auto patches = partition_patches(subject_spectrogram(m, r, denoise, fdir), k, r.subject_id);
      if (patches.empty())
        log << "predict: subject " << r.subject_id << " is shorter than one patch, no p_a\n";
      else
        p.p_a = predict_clip(*audio, r.subject_id, patches).p_audio;
    }
    if (!transcript_column(r, source).empty())
      p.p_t = stack.predictor->predict(load_subject_transcript(m, r, source)).p_text;
    preds.push_back(std::move(p));
  }

  const std::string out = cfg.get("out");
  fs::create_directories(out);
  const std::string path = (fs::path(out) / "predictions.csv").string();
  save_predictions(path, preds, cfg.get("source"));
  write_sidecar(path, cfg.hash(), cfg.get_seed("seed"));
  log << "predict: wrote " << preds.size() << " rows to " << path << "\n";
}

void run_fuse(const RunConfig& cfg, std::ostream& log) {
  log_run(cfg, log, "fuse");
  std::string path = cfg.get("predictions");
  if (path.empty()) path = (fs::path(cfg.get("out")) / "predictions.csv").string();
  if (!fs::exists(path)) throw Error("fuse: no predictions file at " + path + "; run predict");
  auto preds = load_predictions(path);
  const auto rows = weight_sweep(preds, cfg.get_list("weights"), cfg.get_double("threshold"));

  log << "fuse: " << preds.size() << " subjects from " << path << "\n";
  log << "    w    accuracy          f1    specificity  sensitivity\n";
  for (const auto& r : rows) {
    auto cell = [](const std::optional<double>& v) {
      if (!v) return std::string("     -");
      char buf[16];
      std::snprintf(buf, sizeof(buf), "%.4f", *v);
      return std::string(buf);
    };
    char wbuf[24];
    if (r.w >= kTextOnlyWeight)
      std::snprintf(wbuf, sizeof(wbuf), "%9s", "text");
    else
      std::snprintf(wbuf, sizeof(wbuf), "%9.3f", r.w);
    log << wbuf << "    " << cell(r.metrics.accuracy) << "      " << cell(r.metrics.f1) << "       "
        << cell(r.metrics.specificity) << "       " << cell(r.metrics.sensitivity) << "\n";
  }

  const std::string out = cfg.get("out");
  fs::create_directories(out);
  const std::string sweep_path = (fs::path(out) / "sweep.csv").string();
  save_sweep_csv(rows, sweep_path);
  write_sidecar(sweep_path, cfg.hash(), cfg.get_seed("seed"));
  log << "fuse: table at " << sweep_path << "\n";
}

EvalReport run_evaluate(const RunConfig& cfg, std::ostream& log) {
  log_run(cfg, log, "evaluate");
  require(cfg, "manifest", "evaluate");
  Manifest m = ingest_manifest(cfg.get("manifest"));
  const int k = patch_frames(cfg);
  const bool denoise = denoise_enabled(cfg);
  const TranscriptSource source = transcript_source(cfg);
  const std::string fdir = features_dir(cfg);
  const uint64_t seed = cfg.get_seed("seed");
  const double threshold = cfg.get_double("threshold");
  const int jobs = cfg.get_int("jobs");
  const size_t n = m.subjects.size();

  {
    std::string missing;
    for (const auto& r : m.subjects)
      if (r.audio_path.empty() || transcript_column(r, source).empty())
        missing += (missing.empty() ? "" : ", ") + r.subject_id;
    if (!missing.empty())
      throw Error("evaluate: fusion needs audio and a transcript for every subject; missing for " +
                  missing);
  }

  // Features and transcripts once per subject; folds reuse them.
  std::vector<std::vector<LogMelPatch>> patches(n);
  parallel_for(n, jobs, [&](size_t i) {
    const auto& r = m.subjects[i];
    patches[i] = partition_patches(subject_spectrogram(m, r, denoise, fdir), k, r.subject_id);
  });
  std::vector<Transcript> transcripts(n);
  for (size_t i = 0; i < n; ++i) transcripts[i] = load_subject_transcript(m, m.subjects[i], source);
  {
    std::string short_clips;
    for (size_t i = 0; i < n; ++i)
      if (patches[i].empty())
        short_clips += (short_clips.empty() ? "" : ", ") + m.subjects[i].subject_id;
    if (!short_clips.empty())
      throw Error("evaluate: audio shorter than one " + std::to_string(k) +
                  "-frame patch for " + short_clips);
  }

  std::vector<int> labels;
  for (const auto& r : m.subjects) labels.push_back(r.label);
  std::vector<std::string> warnings;
  const auto splits = kfold_split(labels, cfg.get_int("folds"), seed, &warnings);
  for (const auto& w : warnings) log << "evaluate: " << w << "\n";

  std::vector<SubjectPrediction> pooled(n);
  std::vector<TextPrediction> text_preds(n);
  std::vector<int> fold_of(n, -1);

  for (size_t f = 0; f < splits.size(); ++f) {
    const auto& split = splits[f];
    {
      std::set<int> test_set(split.test.begin(), split.test.end());
      for (int idx : split.train)
        if (test_set.count(idx))
          throw Error("internal: fold " + std::to_string(f + 1) + " trains and tests subject " +
                      m.subjects[static_cast<size_t>(idx)].subject_id);
    }
    const std::string tag = "-fold-" + std::to_string(f);

    std::vector<AudioExample> examples;
    for (int idx : split.train)
      for (const auto& p : patches[static_cast<size_t>(idx)])
        examples.push_back({p, labels[static_cast<size_t>(idx)]});
    MVGGish audio(Rng::derive(seed, "audio-init" + tag));
    const std::string& backbone = cfg.get("audio.backbone_weights");
    if (!backbone.empty()) audio.load_backbone(backbone, true);
    TrainHistory ah =
        train_audio(audio, examples, audio_train_config(cfg, Rng::derive(seed, "audio-train" + tag)));

    std::vector<LabeledTranscript> train_texts;
    for (int idx : split.train)
      train_texts.push_back({transcripts[static_cast<size_t>(idx)], labels[static_cast<size_t>(idx)]});
    TextStack stack = make_text_stack(cfg, transcripts, Rng::derive(seed, "text" + tag));
    TrainHistory th = train_text(*stack.predictor, train_texts,
                                 text_train_config(cfg, Rng::derive(seed, "text-train" + tag)));

    for (int idx : split.test) {
      const size_t i = static_cast<size_t>(idx);
      const auto& r = m.subjects[i];
      SubjectPrediction p;
      p.subject_id = r.subject_id;
      p.label = r.label;
      p.age = r.age;
      p.gender = r.gender;
      p.p_a = predict_clip(audio, r.subject_id, patches[i]).p_audio;
      text_preds[i] = stack.predictor->predict(transcripts[i]);
      p.p_t = text_preds[i].p_text;
      pooled[i] = std::move(p);
      fold_of[i] = static_cast<int>(f);
    }
    log << "evaluate: fold " << f + 1 << "/" << splits.size() << ": train " << split.train.size()
        << ", test " << split.test.size() << ", audio epochs " << ah.train_loss.size()
        << " (best " << ah.best_epoch + 1 << "), text epochs " << th.train_loss.size() << " (best "
        << th.best_epoch + 1 << ")\n";
  }

  EvalReport report;
  report.version = kVersion;
  report.seed = seed;
  report.config_hash = cfg.hash();
  report.sweep = weight_sweep(pooled, cfg.get_list("weights"), threshold);
  report.best_weight = report.sweep[static_cast<size_t>(first_max_accuracy(report.sweep))].w;
  fuse_all(pooled, report.best_weight);

  auto fused = [&](const std::vector<int>& idx) {
    std::vector<int> sub_labels;
    std::vector<double> sub_probs;
    for (int i : idx) {
      sub_labels.push_back(pooled[static_cast<size_t>(i)].label);
      sub_probs.push_back(*pooled[static_cast<size_t>(i)].p_c);
    }
    return std::pair(sub_labels, sub_probs);
  };
  auto has_both_classes = [](const std::vector<int>& ls) {
    bool pos = false, neg = false;
    for (int l : ls) (l == 1 ? pos : neg) = true;
    return pos && neg;
  };

  for (size_t f = 0; f < splits.size(); ++f) {
    FoldResult fr;
    fr.fold = static_cast<int>(f) + 1;
    std::vector<int> idx;
    for (size_t i = 0; i < n; ++i)
      if (fold_of[i] == static_cast<int>(f)) idx.push_back(static_cast<int>(i));
    for (int i : idx) fr.test_subjects.push_back(pooled[static_cast<size_t>(i)].subject_id);
    auto [ls, ps] = fused(idx);
    fr.metrics = compute_metrics(ls, ps, threshold);
    if (has_both_classes(ls)) {
      RocResult roc = roc_auc(ls, ps);
      fr.auc = roc.auc;
      fr.roc = std::move(roc.points);
    } else {
      log << "evaluate: fold " << fr.fold << " has one class, no AUC\n";
    }
    report.folds.push_back(std::move(fr));
  }

  std::vector<int> all_idx(n);
  for (size_t i = 0; i < n; ++i) all_idx[i] = static_cast<int>(i);
  auto [all_labels, all_probs] = fused(all_idx);
  report.pooled = compute_metrics(all_labels, all_probs, threshold);
  {
    RocResult roc = roc_auc(all_labels, all_probs);
    report.pooled_auc = roc.auc;
    report.pooled_roc = std::move(roc.points);
  }

  const int resamples = cfg.get_int("bootstrap.resamples");
  const double level = cfg.get_double("bootstrap.level");
  auto metric_ci = [&](const char* name, auto pick) {
    report.intervals[name] = bootstrap_ci(
        [&](const std::vector<int>& idx) -> std::optional<double> {
          auto [ls, ps] = fused(idx);
          return pick(ls, ps);
        },
        static_cast<int>(n), resamples, level, seed);
  };
  metric_ci("accuracy", [&](const std::vector<int>& ls, const std::vector<double>& ps) {
    return std::optional<double>(compute_metrics(ls, ps, threshold).accuracy);
  });
  metric_ci("f1", [&](const std::vector<int>& ls, const std::vector<double>& ps) {
    return compute_metrics(ls, ps, threshold).f1;
  });
  metric_ci("specificity", [&](const std::vector<int>& ls, const std::vector<double>& ps) {
    return compute_metrics(ls, ps, threshold).specificity;
  });
  metric_ci("sensitivity", [&](const std::vector<int>& ls, const std::vector<double>& ps) {
    return compute_metrics(ls, ps, threshold).sensitivity;
  });
  metric_ci("auc", [&](const std::vector<int>& ls,
                       const std::vector<double>& ps) -> std::optional<double> {
    if (!has_both_classes(ls)) return std::nullopt;
    return roc_auc(ls, ps).auc;
  });

  report.subgroups = subgroup_report(pooled, threshold);

  const std::string out = cfg.get("out");
  fs::create_directories(out);
  fs::create_directories(fs::path(out) / "highlights");
  const uint64_t hash = cfg.hash();
  auto artifact = [&](const std::string& name) { return (fs::path(out) / name).string(); };

  save_report(report, artifact("report.json"));
  write_sidecar(artifact("report.json"), hash, seed);
  save_roc_csv(report, artifact("roc.csv"));
  write_sidecar(artifact("roc.csv"), hash, seed);
  save_predictions(artifact("predictions.csv"), pooled, cfg.get("source"));
  write_sidecar(artifact("predictions.csv"), hash, seed);
  save_sweep_csv(report.sweep, artifact("sweep.csv"));
  write_sidecar(artifact("sweep.csv"), hash, seed);
  for (size_t i = 0; i < n; ++i) {
    const std::string path =
        (fs::path(out) / "highlights" / (m.subjects[i].subject_id + ".txt")).string();
    std::ofstream hf(path, std::ios::binary);
    if (!hf) throw Error("cannot write highlight report: " + path);
    hf << render_highlights(transcripts[i], text_preds[i]);
    hf.close();
    write_sidecar(path, hash, seed);
  }

  char best[24];
  if (report.best_weight >= kTextOnlyWeight)
    std::snprintf(best, sizeof(best), "text-only");
  else
    std::snprintf(best, sizeof(best), "%g", report.best_weight);
  log << "evaluate: pooled accuracy " << report.pooled.accuracy << " at w = " << best
      << ", report at " << artifact("report.json") << "\n";
  return report;
}

}  // namespace adscreen
