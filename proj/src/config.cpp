#include "adscreen/config.hpp"

#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "adscreen/error.hpp"

namespace adscreen {
namespace {

const std::vector<ConfigKey> kKeys = {
    {"manifest", "", "corpus manifest CSV"},
    {"out", "out", "artifact output directory"},
    {"models", "", "directory with trained model files; empty = out"},
    {"features", "", "feature cache directory; empty = <out>/features"},
    {"predictions", "", "predictions CSV consumed by fuse; empty = <out>/predictions.csv"},
    {"synth.n", "40", "synthetic corpus size"},
    {"seed", "1", "master seed; every stage derives from it"},
    {"jobs", "1", "worker threads; 1 = fully serial"},
    {"folds", "10", "cross-validation folds"},
    {"threshold", "0.5", "AD decision threshold"},
    {"segment", "short", "audio patch length: short = 96 frames, long = 496"},
    {"source", "manual", "transcript column: manual | asr"},
    {"embedder", "mini", "contextual/sentence embedder: mini | file"},
    {"denoise", "auto", "speech enhancement: auto (on for asr) | true | false"},
    {"weights", "0,1,1.5,2,1e14", "fusion weight sweep"},
    {"bootstrap.resamples", "1000", "bootstrap resample count"},
    {"bootstrap.level", "0.95", "bootstrap confidence level"},
    {"audio.lr", "1e-6", "audio Adam learning rate"},
    {"audio.batch", "32", "audio mini-batch size"},
    {"audio.patience", "30", "audio early-stopping patience, epochs"},
    {"audio.max_epochs", "100", "audio epoch cap"},
    {"audio.val_fraction", "0.1", "audio validation clip share"},
    {"audio.freeze_backbone", "false", "train only the audio head"},
    {"audio.backbone_weights", "", "pre-trained backbone file; empty = random init"},
    {"text.lr", "1e-6", "text Adam learning rate"},
    {"text.batch", "32", "text mini-batch size"},
    {"text.patience", "30", "text early-stopping patience, epochs"},
    {"text.max_epochs", "100", "text epoch cap"},
    {"text.val_fraction", "0.1", "text validation transcript share"},
    {"text.freeze_wordvec", "false", "freeze the word-vector CNN branch"},
    {"text.freeze_encoder", "false", "freeze the contextual encoder"},
    {"text.wordvec_file", "", "pre-trained word vectors; empty = hashed stand-ins"},
    {"text.max_tokens", "8", "word-vector rows per segment"},
    {"text.d_word", "300", "word-vector width"},
    {"text.d_ctx", "128", "contextual embedding width"},
    {"text.d_sent", "128", "sentence embedding width"},
    {"text.widths", "2,3,4", "CNN filter widths"},
    {"text.filters", "32", "CNN filters per width"},
    {"text.encoder_layers", "2", "encoder blocks (both embedders)"},
    {"text.encoder_heads", "4", "attention heads (both embedders)"},
    {"text.ctx_max_len", "16", "subword length for segment encoding"},
    {"text.sent_max_len", "256", "subword length for transcript encoding"},
    {"embeddings.segments", "", "precomputed segment embeddings (embedder = file)"},
    {"embeddings.sentences", "", "precomputed sentence embeddings (embedder = file)"},
};

std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

void load_file_rec(RunConfig& cfg, const std::string& path, int depth) {
  if (depth > 16) throw Error("config: include depth exceeds 16 (cycle?) at " + path);
  std::ifstream in(path);
  if (!in) throw Error("config: cannot open " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto where = [&] { return "config: " + path + ":" + std::to_string(lineno) + ": "; };
    size_t eq = t.find('=');
    if (eq == std::string::npos) {
      if (t.rfind("include ", 0) == 0) {
        std::filesystem::path inc(trim(t.substr(8)));
        if (inc.is_relative()) inc = std::filesystem::path(path).parent_path() / inc;
        load_file_rec(cfg, inc.string(), depth + 1);
        continue;
      }
      throw Error(where() + "expected key = value or include, got \"" + t + "\"");
    }
    std::string key = trim(t.substr(0, eq));
    if (key.empty()) throw Error(where() + "empty key");
    try {
      cfg.set(key, trim(t.substr(eq + 1)));
    } catch (const Error& e) {
      throw Error(where() + e.what());
    }
  }
}

}  // namespace

RunConfig::RunConfig() {
  for (const auto& k : kKeys) values_[k.key] = k.fallback;
}

const std::vector<ConfigKey>& RunConfig::keys() { return kKeys; }

bool RunConfig::known(const std::string& key) {
  for (const auto& k : kKeys)
    if (key == k.key) return true;
  return false;
}

std::string RunConfig::env_name(const std::string& key) {
  std::string out = "ADSCREEN_";
  for (char c : key) {
    if (c == '.' || c == '-')
      out += '_';
    else
      out += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  }
  return out;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!known(key)) throw Error("config: unknown key \"" + key + "\"");
  values_[key] = value;
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw Error("config: unknown key \"" + key + "\"");
  return it->second;
}

int RunConfig::get_int(const std::string& key) const {
  const std::string& v = get(key);
  try {
    size_t used = 0;
    int out = std::stoi(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw Error("config: " + key + " = \"" + v + "\" is not an integer");
  }
}

double RunConfig::get_double(const std::string& key) const {
  const std::string& v = get(key);
  try {
    size_t used = 0;
    double out = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw Error("config: " + key + " = \"" + v + "\" is not a number");
  }
}

bool RunConfig::get_bool(const std::string& key) const {
  const std::string& v = get(key);
  if (v == "true") return true;
  if (v == "false") return false;
  throw Error("config: " + key + " = \"" + v + "\" is not true or false");
}

uint64_t RunConfig::get_seed(const std::string& key) const {
  const std::string& v = get(key);
  try {
    size_t used = 0;
    unsigned long long out = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw Error("config: " + key + " = \"" + v + "\" is not a seed");
  }
}

std::vector<double> RunConfig::get_list(const std::string& key) const {
  const std::string& v = get(key);
  std::vector<double> out;
  size_t pos = 0;
  while (pos <= v.size()) {
    size_t comma = v.find(',', pos);
    std::string item = trim(v.substr(pos, comma == std::string::npos ? comma : comma - pos));
    if (!item.empty()) {
      try {
        size_t used = 0;
        out.push_back(std::stod(item, &used));
        if (used != item.size()) throw std::invalid_argument(item);
      } catch (const std::exception&) {
        throw Error("config: " + key + " entry \"" + item + "\" is not a number");
      }
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return out;
}

uint64_t RunConfig::hash() const {
  uint64_t h = 1469598103934665603ull;  // FNV-1a 64
  auto mix = [&](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ull;
    }
  };
  for (const auto& [k, v] : values_) {
    mix(k);
    mix("=");
    mix(v);
    mix("\n");
  }
  return h;
}

std::string RunConfig::resolved_text() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

void load_config_file(RunConfig& cfg, const std::string& path) { load_file_rec(cfg, path, 0); }

void apply_env_overrides(RunConfig& cfg) {
  for (const auto& k : kKeys) {
    const char* v = std::getenv(RunConfig::env_name(k.key).c_str());
    if (v != nullptr) cfg.set(k.key, v);
  }
}

}  // namespace adscreen
