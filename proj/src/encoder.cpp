#include "adscreen/encoder.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "adscreen/error.hpp"
#include "adscreen/weights_io.hpp"

namespace adscreen {

std::string to_string(const EmbedKey& key) {
  return "transcript \"" + key.transcript_id + "\" " +
         (key.start < 0 ? std::string("(transcript level)") : "start " + std::to_string(key.start));
}

MiniEncoder::MiniEncoder(const MiniEncoderConfig& cfg)
    : cfg_(cfg),
      net_("encoder", cfg.vocab, cfg.dim, cfg.layers, cfg.heads, cfg.max_len, cfg.pad_id) {
  if (cfg.vocab <= 0) throw Error("MiniEncoder: vocab size must be positive");
  Rng rng(Rng::derive(cfg.seed, "encoder-init"));
  net_.init(rng);
}

VarPtr<float> MiniEncoder::embed(const std::vector<SubwordSequence>& seqs,
                                 const std::vector<EmbedKey>& keys, GradTape* tape) {
  if (seqs.empty()) throw Error("MiniEncoder: no sequences");
  if (!keys.empty() && keys.size() != seqs.size())
    throw Error("MiniEncoder: keys/sequences count mismatch");
  const int n = static_cast<int>(seqs.size());
  const int s = cfg_.max_len;
  std::vector<int> ids(static_cast<size_t>(n) * s);
  Tensor mask({n, s});
  for (int i = 0; i < n; ++i) {
    const auto& seq = seqs[i];
    if (static_cast<int>(seq.ids.size()) != s || static_cast<int>(seq.mask.size()) != s)
      throw Error("MiniEncoder: sequence " + std::to_string(i) + " has length " +
                  std::to_string(seq.ids.size()) + ", expected " + std::to_string(s));
    std::copy(seq.ids.begin(), seq.ids.end(), ids.begin() + static_cast<size_t>(i) * s);
    std::copy(seq.mask.begin(), seq.mask.end(), mask.data() + static_cast<size_t>(i) * s);
  }
  embed_count_ += n;
  return net_.forward(ids, mask, n, s, tape);
}

void MiniEncoder::save(const std::string& path) {
  WeightFile file;
  collect_params(param_sets(), file);
  file.save(path);
}

void MiniEncoder::load(const std::string& path) {
  assign_params(WeightFile::load(path), param_sets());
}

EmbeddingFile::EmbeddingFile(int dim) : dim_(dim) {
  if (dim <= 0) throw Error("EmbeddingFile: dim must be positive");
}

void EmbeddingFile::put(const EmbedKey& key, const std::vector<float>& vec) {
  if (static_cast<int>(vec.size()) != dim_)
    throw Error("EmbeddingFile: vector for " + to_string(key) + " has dim " +
                std::to_string(vec.size()) + ", expected " + std::to_string(dim_));
  entries_[key] = vec;
}

const std::vector<float>& EmbeddingFile::get(const EmbedKey& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw Error("EmbeddingFile: no entry for " + to_string(key));
  return it->second;
}

void EmbeddingFile::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("EmbeddingFile: cannot write " + path);
  out << "ADSEMB 1\n";
  out << "dim " << dim_ << "\n";
  out << "count " << entries_.size() << "\n";
  for (const auto& [key, vec] : entries_) {
    if (key.transcript_id.find('\n') != std::string::npos)
      throw Error("EmbeddingFile: transcript id contains a newline");
    out << "record " << key.start << " " << key.transcript_id << "\n";
  }
  out << "data " << entries_.size() * dim_ * sizeof(float) << "\n";
  for (const auto& [key, vec] : entries_)
    out.write(reinterpret_cast<const char*>(vec.data()),
              static_cast<std::streamsize>(vec.size() * sizeof(float)));
  if (!out) throw Error("EmbeddingFile: write failed for " + path);
}

EmbeddingFile EmbeddingFile::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("EmbeddingFile: cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != "ADSEMB 1")
    throw Error("EmbeddingFile: bad magic in " + path);
  auto read_kv = [&](const std::string& want) {
    if (!std::getline(in, line)) throw Error("EmbeddingFile: truncated header in " + path);
    std::istringstream ss(line);
    std::string k;
    long long v = -1;
    ss >> k >> v;
    if (k != want || v < 0) throw Error("EmbeddingFile: expected \"" + want + "\" line in " + path);
    return v;
  };
  const int dim = static_cast<int>(read_kv("dim"));
  const long long count = read_kv("count");
  EmbeddingFile file(dim);
  std::vector<EmbedKey> order;
  order.reserve(static_cast<size_t>(count));
  for (long long i = 0; i < count; ++i) {
    if (!std::getline(in, line)) throw Error("EmbeddingFile: truncated record list in " + path);
    std::istringstream ss(line);
    std::string tag;
    int start = 0;
    ss >> tag >> start;
    if (tag != "record" || !ss) throw Error("EmbeddingFile: bad record line in " + path);
    ss.get();  // the single separator space; the id runs to end of line
    std::string id;
    std::getline(ss, id);
    if (id.empty()) throw Error("EmbeddingFile: empty transcript id in " + path);
    order.push_back({id, start});
  }
  const long long bytes = read_kv("data");
  if (bytes != count * dim * static_cast<long long>(sizeof(float)))
    throw Error("EmbeddingFile: payload size mismatch in " + path);
  std::vector<float> vec(static_cast<size_t>(dim));
  for (const auto& key : order) {
    in.read(reinterpret_cast<char*>(vec.data()),
            static_cast<std::streamsize>(vec.size() * sizeof(float)));
    if (!in) throw Error("EmbeddingFile: truncated payload in " + path);
    file.put(key, vec);
  }
  return file;
}

VarPtr<float> FileEmbedder::embed(const std::vector<SubwordSequence>& seqs,
                                  const std::vector<EmbedKey>& keys, GradTape*) {
  if (keys.empty()) throw Error("FileEmbedder: keys required");
  if (!seqs.empty() && seqs.size() != keys.size())
    throw Error("FileEmbedder: keys/sequences count mismatch");
  const int n = static_cast<int>(keys.size());
  Tensor out({n, file_.dim()});
  for (int i = 0; i < n; ++i) {
    const auto& vec = file_.get(keys[i]);
    std::copy(vec.begin(), vec.end(), out.data() + static_cast<size_t>(i) * file_.dim());
  }
  return make_var(std::move(out));
}

const std::vector<float>& SentenceCache::get(const EmbedKey& key, const SubwordSequence& seq) {
  auto it = cache_.find(key);
  if (it != cache_.end()) return it->second;
  auto emb = embedder_->embed({seq}, {key}, nullptr);
  std::vector<float> vec(emb->value.data(), emb->value.data() + embedder_->dim());
  return cache_.emplace(key, std::move(vec)).first->second;
}

EmbeddingFile export_segment_embeddings(const std::vector<Transcript>& transcripts,
                                        ContextualEmbedder& ctx, const WordPieceVocab& vocab,
                                        int max_len) {
  EmbeddingFile out(ctx.dim());
  for (const auto& t : transcripts) {
    std::vector<SubwordSequence> seqs;
    std::vector<EmbedKey> keys;
    for (const auto& seg : segment_tokens(t.tokens)) {
      seqs.push_back(wordpiece_tokenize(seg.tokens, vocab, max_len));
      keys.push_back({t.subject_id, seg.start});
    }
    auto emb = ctx.embed(seqs, keys, nullptr);
    for (size_t i = 0; i < keys.size(); ++i)
      out.put(keys[i], std::vector<float>(emb->value.data() + i * ctx.dim(),
                                          emb->value.data() + (i + 1) * ctx.dim()));
  }
  return out;
}

EmbeddingFile export_sentence_embeddings(const std::vector<Transcript>& transcripts,
                                         ContextualEmbedder& sent, const WordPieceVocab& vocab,
                                         int max_len) {
  EmbeddingFile out(sent.dim());
  for (const auto& t : transcripts) {
    const EmbedKey key{t.subject_id, -1};
    auto emb = sent.embed({wordpiece_tokenize(t.tokens, vocab, max_len)}, {key}, nullptr);
    out.put(key, std::vector<float>(emb->value.data(), emb->value.data() + sent.dim()));
  }
  return out;
}

}  // namespace adscreen
