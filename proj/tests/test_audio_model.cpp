#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "adscreen/audio_model.hpp"
#include "adscreen/error.hpp"
#include "adscreen/rng.hpp"
#include "adscreen/weights_io.hpp"

using namespace adscreen;

namespace {

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

LogMelPatch make_patch(int k, uint64_t seed, const std::string& clip = "clip") {
  LogMelPatch p;
  p.frames = Tensor({k, 64});
  p.clip_id = clip;
  Rng rng(seed);
  for (auto& v : p.frames.values()) v = static_cast<float>(rng.uniform(-2.0, 2.0));
  return p;
}

// Linearly separable toy set: class means sit at +/-gap with unit-ish noise,
// so the decision is learnable but not solved within a single step.
std::vector<AudioExample> separable_set(int n, int k, uint64_t seed, float gap = 0.1f) {
  std::vector<AudioExample> out;
  Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    AudioExample ex;
    ex.label = i % 2;
    const float base = ex.label == 1 ? gap : -gap;
    ex.patch.frames = Tensor({k, 64});
    for (auto& v : ex.patch.frames.values())
      v = base + static_cast<float>(rng.normal() * 0.3);
    ex.patch.clip_id = "s" + std::to_string(i);
    out.push_back(std::move(ex));
  }
  return out;
}

// Separable set with per-example label margins along a mid-band direction:
// random patches labeled by the sign of their projection, pushed `margin`
// further out. The small overall scale keeps optimization in the smooth
// descent regime for several epochs instead of saturating immediately.
std::vector<AudioExample> margin_set(int n, int k, uint64_t seed, float margin, float scale) {
  Tensor dir({k, 64}, 0.0f);
  int cells = 0;
  for (int r = 0; r < k; ++r)
    for (int b = 8; b < 24; ++b) {
      dir.at2(r, b) = 1.0f;
      ++cells;
    }
  for (auto& v : dir.values()) v /= std::sqrt(static_cast<float>(cells));

  Rng rng(seed);
  std::vector<AudioExample> out;
  for (int i = 0; i < n; ++i) {
    AudioExample ex;
    ex.patch.frames = Tensor({k, 64});
    for (auto& v : ex.patch.frames.values()) v = static_cast<float>(rng.normal());
    double proj = 0.0;
    for (size_t c = 0; c < dir.size(); ++c)
      proj += static_cast<double>(ex.patch.frames.data()[c]) * dir.data()[c];
    ex.label = proj > 0 ? 1 : 0;
    const float push = (proj > 0 ? 1.0f : -1.0f) * margin;
    for (size_t c = 0; c < dir.size(); ++c)
      ex.patch.frames.data()[c] = scale * (ex.patch.frames.data()[c] + push * dir.data()[c]);
    ex.patch.clip_id = "s" + std::to_string(i);
    out.push_back(std::move(ex));
  }
  return out;
}

WeightFile snapshot(MVGGish& m) {
  WeightFile f;
  collect_params(m.param_sets(), f);
  return f;
}

bool same_values(const WeightFile& a, const WeightFile& b) {
  if (a.entries().size() != b.entries().size()) return false;
  for (size_t i = 0; i < a.entries().size(); ++i) {
    const auto& ea = a.entries()[i];
    const auto& eb = b.entries()[i];
    if (ea.name != eb.name || ea.shape != eb.shape) return false;
    if (std::memcmp(ea.values.data(), eb.values.data(), ea.values.size() * sizeof(float)) != 0)
      return false;
  }
  return true;
}

}  // namespace

TEST_CASE("parameter count sits in the documented band") {
  MVGGish model(1);
  const int64_t n = model.trainable_param_count();
  CHECK(n == 4766850);
  CHECK(n >= 4700000);
  CHECK(n <= 4900000);
}

TEST_CASE("equal seeds build bit-identical models") {
  MVGGish a(42), b(42), c(43);
  CHECK(same_values(snapshot(a), snapshot(b)));
  CHECK_FALSE(same_values(snapshot(a), snapshot(c)));
}

TEST_CASE("one parameter set serves both patch lengths") {
  MVGGish model(3);
  const WeightFile before = snapshot(model);
  const float p96 = model.predict_segment(make_patch(96, 11));
  const float p496 = model.predict_segment(make_patch(496, 12));
  CHECK(p96 > 0.0f);
  CHECK(p96 < 1.0f);
  CHECK(p496 > 0.0f);
  CHECK(p496 < 1.0f);
  // Inference must not touch any parameter, running stats included.
  CHECK(same_values(before, snapshot(model)));
}

TEST_CASE("zeroed output layer gives exactly one half") {
  MVGGish model(5);
  for (auto* set : model.head_param_sets()) {
    if (set->prefix() != "fc2") continue;
    for (size_t i = 0; i < set->count(); ++i) set->slot(i).value.fill(0.0f);
  }
  CHECK(model.predict_segment(make_patch(96, 2)) == 0.5f);
}

TEST_CASE("patches shorter than 16 frames are rejected") {
  MVGGish model(1);
  CHECK_THROWS_AS(model.predict_segment(make_patch(15, 1)), Error);
  CHECK_NOTHROW(model.predict_segment(make_patch(16, 1)));
}

TEST_CASE("batched prediction matches one-at-a-time prediction") {
  MVGGish model(9);
  std::vector<LogMelPatch> patches;
  for (int i = 0; i < 5; ++i) patches.push_back(make_patch(i % 2 ? 32 : 16, 100 + i));
  const std::vector<float> batched = model.predict_patches(patches);
  for (size_t i = 0; i < patches.size(); ++i)
    CHECK(batched[i] == doctest::Approx(model.predict_segment(patches[i])).epsilon(1e-5));
}

TEST_CASE("aggregate_audio is the arithmetic mean") {
  CHECK(aggregate_audio({0.2f, 0.4f, 0.9f}) == doctest::Approx(0.5f).epsilon(1e-7));
  CHECK(aggregate_audio({0.73f}) == 0.73f);
  CHECK(aggregate_audio({0.9f, 0.2f, 0.4f}) == aggregate_audio({0.2f, 0.4f, 0.9f}));
  CHECK_THROWS_AS(aggregate_audio({}), Error);

  // Bounded by the per-patch extremes.
  const std::vector<float> p{0.1f, 0.5f, 0.35f, 0.8f};
  const float mean = aggregate_audio(p);
  CHECK(mean >= 0.1f);
  CHECK(mean <= 0.8f);
}

TEST_CASE("predict_clip carries per-patch probabilities and their mean") {
  MVGGish model(2);
  std::vector<LogMelPatch> patches{make_patch(16, 1, "c7"), make_patch(16, 2, "c7")};
  const AudioPrediction pred = predict_clip(model, "c7", patches);
  CHECK(pred.clip_id == "c7");
  CHECK(pred.patch_probs.size() == 2);
  CHECK(pred.p_audio == doctest::Approx((pred.patch_probs[0] + pred.patch_probs[1]) / 2));
}

TEST_CASE("save/load round trip preserves forward outputs") {
  const std::string path = tmp_path("adscreen_model.bin");
  MVGGish a(7);
  const LogMelPatch probe = make_patch(32, 55);
  const float pa = a.predict_segment(probe);
  a.save(path);

  MVGGish b(8);
  CHECK(b.predict_segment(probe) != pa);  // different init
  b.load(path);
  CHECK(b.predict_segment(probe) == pa);
  CHECK(same_values(snapshot(a), snapshot(b)));
  std::remove(path.c_str());
}

TEST_CASE("backbone transfer replaces conv arrays and leaves the head alone") {
  const std::string path = tmp_path("adscreen_backbone.bin");
  MVGGish donor(21);
  donor.save_backbone(path);

  MVGGish target(22);
  target.load_backbone(path, true);

  auto weight_of = [](MVGGish& m, const std::string& prefix) {
    for (auto* set : m.param_sets())
      if (set->prefix() == prefix) return set->find("weight")->value;
    throw Error("missing layer " + prefix);
  };
  Tensor dc = weight_of(donor, "conv2"), tc = weight_of(target, "conv2");
  CHECK(std::memcmp(dc.data(), tc.data(), dc.size() * sizeof(float)) == 0);
  Tensor dh = weight_of(donor, "fc1"), th = weight_of(target, "fc1");
  CHECK(std::memcmp(dh.data(), th.data(), dh.size() * sizeof(float)) != 0);
  std::remove(path.c_str());
}

TEST_CASE("empty backbone file leaves the model unchanged") {
  MVGGish model(4);
  const WeightFile before = snapshot(model);
  WeightFile empty;
  model.load_backbone(empty, false);
  CHECK(same_values(before, snapshot(model)));
}

TEST_CASE("backbone shape conflict errors in strict mode and is skipped otherwise") {
  MVGGish model(4);
  WeightFile bad;
  Tensor wrong({3, 3, 64, 127}, 0.25f);
  bad.put("conv2/weight", wrong);

  bool named = false;
  try {
    model.load_backbone(bad, true);
  } catch (const Error& e) {
    named = std::string(e.what()).find("conv2/weight") != std::string::npos;
  }
  CHECK(named);

  const WeightFile before = snapshot(model);
  model.load_backbone(bad, false);
  CHECK(same_values(before, snapshot(model)));

  WeightFile alien;
  alien.put("mystery/weight", Tensor({2, 2}, 1.0f));
  CHECK_THROWS_AS(model.load_backbone(alien, true), Error);
  model.load_backbone(alien, false);
  CHECK(same_values(before, snapshot(model)));
}

TEST_CASE("training loss falls monotonically on a separable set") {
  MVGGish model(17);
  auto data = margin_set(60, 16, 99, 10.0f, 1e-2f);
  AudioTrainConfig cfg;
  cfg.lr = 1e-3f;
  cfg.batch_size = 64;  // full batch: one exact gradient step per epoch
  cfg.max_epochs = 5;
  cfg.patience = 100;
  cfg.freeze_backbone = true;
  cfg.seed = 5;
  const TrainHistory hist = train_audio(model, data, cfg);
  REQUIRE(hist.train_loss.size() == 5);
  for (size_t i = 1; i < hist.train_loss.size(); ++i)
    CHECK(hist.train_loss[i] < hist.train_loss[i - 1]);
  CHECK(hist.val_loss.size() == 5);
}

TEST_CASE("end-to-end fine-tuning drives a separable set to near-zero loss") {
  MVGGish model(17);
  auto data = separable_set(60, 16, 99);
  AudioTrainConfig cfg;
  cfg.lr = 1e-3f;
  cfg.max_epochs = 5;
  cfg.patience = 100;
  cfg.seed = 5;
  const TrainHistory hist = train_audio(model, data, cfg);
  REQUIRE(hist.train_loss.size() == 5);
  CHECK(hist.train_loss[1] < hist.train_loss[0]);
  CHECK(hist.train_loss.back() < 0.01f);
}

TEST_CASE("patience zero stops at the first epoch without improvement") {
  MVGGish model(6);
  auto data = separable_set(12, 16, 3);
  AudioTrainConfig cfg;
  cfg.lr = 0.0f;  // loss can never improve after the first epoch
  cfg.max_epochs = 50;
  cfg.patience = 0;
  cfg.freeze_backbone = true;
  const TrainHistory hist = train_audio(model, data, cfg);
  CHECK(hist.train_loss.size() == 2);
  CHECK(hist.best_epoch == 0);
}

TEST_CASE("single-class datasets are rejected") {
  MVGGish model(1);
  std::vector<AudioExample> data;
  for (int i = 0; i < 4; ++i) {
    AudioExample ex;
    ex.patch = make_patch(16, i, "c" + std::to_string(i));
    ex.label = 1;
    data.push_back(ex);
  }
  CHECK_THROWS_AS(train_audio(model, data, AudioTrainConfig{}), Error);
  CHECK_THROWS_AS(train_audio(model, {}, AudioTrainConfig{}), Error);
}

TEST_CASE("training is reproducible for equal seeds") {
  auto run = [] {
    MVGGish model(33);
    auto data = separable_set(8, 16, 44);
    AudioTrainConfig cfg;
    cfg.lr = 1e-3f;
    cfg.batch_size = 4;
    cfg.max_epochs = 2;
    cfg.patience = 100;
    cfg.seed = 12;
    train_audio(model, data, cfg);
    return snapshot(model);
  };
  CHECK(same_values(run(), run()));
}

TEST_CASE("frozen backbone trains the head only") {
  MVGGish model(13);
  const WeightFile before = snapshot(model);
  auto data = separable_set(12, 16, 5);
  AudioTrainConfig cfg;
  cfg.lr = 1e-3f;
  cfg.max_epochs = 3;
  cfg.patience = 100;
  cfg.freeze_backbone = true;
  train_audio(model, data, cfg);
  const WeightFile after = snapshot(model);

  for (size_t i = 0; i < before.entries().size(); ++i) {
    const auto& ea = before.entries()[i];
    const auto& eb = after.entries()[i];
    const bool is_head = ea.name.rfind("fc1/", 0) == 0 || ea.name.rfind("fc2/", 0) == 0;
    const bool same =
        std::memcmp(ea.values.data(), eb.values.data(), ea.values.size() * sizeof(float)) == 0;
    if (is_head && ea.name.find("/weight") != std::string::npos)
      CHECK_FALSE(same);
    else if (!is_head)
      CHECK(same);  // convs, BN params, and running stats all frozen
  }
}

TEST_CASE("history csv lists one row per epoch") {
  TrainHistory h;
  h.train_loss = {0.9f, 0.7f};
  h.val_loss = {0.8f, 0.75f};
  const std::string path = tmp_path("adscreen_hist.csv");
  save_history_csv(h, path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "epoch,train_loss,val_loss");
  std::getline(in, line);
  CHECK(line.rfind("1,0.9,0.8", 0) == 0);
  std::getline(in, line);
  CHECK(line.rfind("2,0.7,0.75", 0) == 0);
  std::remove(path.c_str());
}

TEST_CASE("embeddings are 512-wide and deterministic") {
  MVGGish model(3);
  std::vector<LogMelPatch> patches{make_patch(16, 1), make_patch(32, 2)};
  const Tensor e1 = model.embed_patches(patches);
  const Tensor e2 = model.embed_patches(patches);
  REQUIRE(e1.shape() == std::vector<int>{2, 512});
  CHECK(std::memcmp(e1.data(), e2.data(), e1.size() * sizeof(float)) == 0);
}
