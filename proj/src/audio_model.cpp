#include "adscreen/audio_model.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <string>

#include "adscreen/error.hpp"
#include "adscreen/optim.hpp"
#include "adscreen/rng.hpp"

namespace adscreen {

namespace {

// Inference batches are capped by total spectrogram frames so that peak
// im2col scratch stays flat across patch sizes.
constexpr int kBatchFramesBudget = 2400;

Tensor stack_patches(const std::vector<const LogMelPatch*>& group, size_t begin, size_t end) {
  const int k = group[begin]->frames.dim(0);
  Tensor x({static_cast<int>(end - begin), k, kMelBands, 1});
  for (size_t i = begin; i < end; ++i) {
    const Tensor& f = group[i]->frames;
    if (f.rank() != 2 || f.dim(1) != kMelBands)
      throw Error("mvggish: patch must be [k," + std::to_string(kMelBands) + "], got " +
                  f.shape_str());
    std::copy(f.data(), f.data() + f.size(),
              x.data() + (i - begin) * static_cast<size_t>(k) * kMelBands);
  }
  return x;
}

// BCE on the AD probability of a 2-way softmax equals the cross entropy of
// the mapped class index (AD -> 0, HC -> 1), so training reuses the fused
// softmax/xent kernel for stability.
int class_index(int label) { return label == 1 ? 0 : 1; }

float batch_loss_infer(const Tensor& logits, const std::vector<int>& cls) {
  double loss = 0.0;
  for (int i = 0; i < logits.dim(0); ++i) {
    const float a = logits.data()[i * 2 + 0];
    const float b = logits.data()[i * 2 + 1];
    const float m = std::max(a, b);
    const double lse = m + std::log(std::exp(a - m) + std::exp(b - m));
    loss += lse - logits.data()[i * 2 + cls[i]];
  }
  return static_cast<float>(loss / logits.dim(0));
}

}  // namespace

MVGGish::MVGGish(uint64_t seed)
    : conv1_("conv1", 3, 3, 1, 64),
      conv2_("conv2", 3, 3, 64, 128),
      conv3_1_("conv3_1", 3, 3, 128, 256),
      conv3_2_("conv3_2", 3, 3, 256, 256),
      conv4_1_("conv4_1", 3, 3, 256, 512),
      conv4_2_("conv4_2", 3, 3, 512, 512),
      bn1_("bn1", 64),
      bn2_("bn2", 128),
      bn3_1_("bn3_1", 256),
      bn3_2_("bn3_2", 256),
      bn4_1_("bn4_1", 512),
      bn4_2_("bn4_2", 512),
      fc1_("fc1", 512, 512),
      fc2_("fc2", 512, 2) {
  Rng rng(Rng::derive(seed, "mvggish-init"));
  conv1_.init(rng);
  conv2_.init(rng);
  conv3_1_.init(rng);
  conv3_2_.init(rng);
  conv4_1_.init(rng);
  conv4_2_.init(rng);
  fc1_.init(rng);
  fc2_.init(rng);
}

int64_t MVGGish::trainable_param_count() const {
  int64_t total = 0;
  for (auto* set : const_cast<MVGGish*>(this)->param_sets())
    for (size_t i = 0; i < set->count(); ++i)
      if (set->slot(i).trainable) total += static_cast<int64_t>(set->slot(i).value.size());
  return total;
}

std::vector<LayerParams*> MVGGish::param_sets() {
  auto out = backbone_param_sets();
  for (auto* p : head_param_sets()) out.push_back(p);
  return out;
}

std::vector<LayerParams*> MVGGish::backbone_param_sets() {
  return {&conv1_.params(),   &bn1_.params(),   &conv2_.params(),   &bn2_.params(),
          &conv3_1_.params(), &bn3_1_.params(), &conv3_2_.params(), &bn3_2_.params(),
          &conv4_1_.params(), &bn4_1_.params(), &conv4_2_.params(), &bn4_2_.params()};
}

std::vector<LayerParams*> MVGGish::head_param_sets() {
  return {&fc1_.params(), &fc2_.params()};
}

VarPtr<float> MVGGish::block_(const VarPtr<float>& x, Conv2dT<float>& conv,
                              BatchNormT<float>& bn, BnMode mode, GradTape* tape) {
  return bn.forward(relu(conv.forward(x, tape), tape), mode, tape);
}

VarPtr<float> MVGGish::backbone_forward(const VarPtr<float>& x, BnMode mode, GradTape* tape) {
  const auto& xv = x->value;
  if (xv.rank() != 4 || xv.dim(2) != kMelBands || xv.dim(3) != 1)
    throw Error("mvggish: expected input [N,k,64,1], got " + xv.shape_str());
  if (xv.dim(1) < 16)
    throw Error("mvggish: patch has " + std::to_string(xv.dim(1)) +
                " frames; need at least 16 to survive four 2x2 pools");
  auto h = pool_.forward(block_(x, conv1_, bn1_, mode, tape), tape);
  h = pool_.forward(block_(h, conv2_, bn2_, mode, tape), tape);
  h = block_(h, conv3_1_, bn3_1_, mode, tape);
  h = pool_.forward(block_(h, conv3_2_, bn3_2_, mode, tape), tape);
  h = block_(h, conv4_1_, bn4_1_, mode, tape);
  h = pool_.forward(block_(h, conv4_2_, bn4_2_, mode, tape), tape);
  return gap_.forward(h, tape);
}

VarPtr<float> MVGGish::head_forward(const VarPtr<float>& emb, GradTape* tape) {
  return fc2_.forward(relu(fc1_.forward(emb, tape), tape), tape);
}

VarPtr<float> MVGGish::forward(const VarPtr<float>& x, BnMode mode, GradTape* tape) {
  return head_forward(backbone_forward(x, mode, tape), tape);
}

float MVGGish::predict_segment(const LogMelPatch& patch) {
  std::vector<float> p = predict_patches({patch});
  return p[0];
}

std::vector<float> MVGGish::predict_patches(const std::vector<LogMelPatch>& patches) {
  std::vector<float> out(patches.size(), 0.0f);
  // Group by patch length so each forward sees a rectangular batch.
  std::map<int, std::vector<size_t>> by_k;
  for (size_t i = 0; i < patches.size(); ++i) {
    if (patches[i].frames.rank() != 2)
      throw Error("mvggish: patch must be rank 2, got " + patches[i].frames.shape_str());
    by_k[patches[i].frames.dim(0)].push_back(i);
  }
  for (const auto& [k, idx] : by_k) {
    const size_t batch = std::max<size_t>(1, kBatchFramesBudget / std::max(k, 1));
    for (size_t at = 0; at < idx.size(); at += batch) {
      const size_t end = std::min(idx.size(), at + batch);
      std::vector<const LogMelPatch*> group;
      for (size_t i = at; i < end; ++i) group.push_back(&patches[idx[i]]);
      auto logits = forward(make_var(stack_patches(group, 0, group.size())),
                            BnMode::kInfer, nullptr);
      Tensor probs = softmax_last(logits->value);
      for (size_t i = at; i < end; ++i)
        out[idx[i]] = probs.data()[(i - at) * 2];  // column 0 = AD
    }
  }
  return out;
}

Tensor MVGGish::embed_patches(const std::vector<LogMelPatch>& patches) {
  Tensor out({static_cast<int>(patches.size()), 512});
  std::map<int, std::vector<size_t>> by_k;
  for (size_t i = 0; i < patches.size(); ++i) by_k[patches[i].frames.dim(0)].push_back(i);
  for (const auto& [k, idx] : by_k) {
    const size_t batch = std::max<size_t>(1, kBatchFramesBudget / std::max(k, 1));
    for (size_t at = 0; at < idx.size(); at += batch) {
      const size_t end = std::min(idx.size(), at + batch);
      std::vector<const LogMelPatch*> group;
      for (size_t i = at; i < end; ++i) group.push_back(&patches[idx[i]]);
      auto emb = backbone_forward(make_var(stack_patches(group, 0, group.size())),
                                  BnMode::kInfer, nullptr);
      for (size_t i = at; i < end; ++i)
        std::copy(emb->value.data() + (i - at) * 512, emb->value.data() + (i - at + 1) * 512,
                  out.data() + idx[i] * 512);
    }
  }
  return out;
}

void MVGGish::save(const std::string& path) {
  WeightFile file;
  collect_params(param_sets(), file);
  file.save(path);
}

void MVGGish::load(const std::string& path) {
  assign_params(WeightFile::load(path), param_sets());
}

void MVGGish::save_backbone(const std::string& path) {
  WeightFile file;
  collect_params(backbone_param_sets(), file);
  file.save(path);
}

void MVGGish::load_backbone(const WeightFile& file, bool strict) {
  std::map<std::string, ArraySlot*> slots;
  for (auto* set : backbone_param_sets())
    for (size_t i = 0; i < set->count(); ++i) slots[set->slot(i).name] = &set->slot(i);

  std::vector<std::string> conflicts;
  for (const auto& e : file.entries()) {
    auto it = slots.find(e.name);
    if (it == slots.end()) {
      conflicts.push_back(e.name + " (not a backbone array)");
      continue;
    }
    if (it->second->value.shape() != e.shape) {
      conflicts.push_back(e.name + " (shape mismatch)");
      continue;
    }
    std::copy(e.values.begin(), e.values.end(), it->second->value.data());
  }
  if (strict && !conflicts.empty()) {
    std::string msg = "load_backbone:";
    for (const auto& c : conflicts) msg += " " + c;
    throw Error(msg);
  }
}

void MVGGish::load_backbone(const std::string& path, bool strict) {
  load_backbone(WeightFile::load(path), strict);
}

float aggregate_audio(const std::vector<float>& predictions) {
  if (predictions.empty())
    throw Error("aggregate_audio: no per-patch predictions (clip shorter than one patch)");
  double sum = 0.0;
  for (float p : predictions) sum += p;
  return static_cast<float>(sum / static_cast<double>(predictions.size()));
}

AudioPrediction predict_clip(MVGGish& model, const std::string& clip_id,
                             const std::vector<LogMelPatch>& patches) {
  AudioPrediction pred;
  pred.clip_id = clip_id;
  pred.patch_probs = model.predict_patches(patches);
  pred.p_audio = aggregate_audio(pred.patch_probs);
  return pred;
}

namespace {

struct EpochPlan {
  std::vector<std::vector<size_t>> batches;  // uniform patch length within a batch
};

EpochPlan plan_epoch(const std::vector<AudioExample>& data, const std::vector<size_t>& idx,
                     int batch_size, Rng& rng) {
  std::map<int, std::vector<size_t>> by_k;
  for (size_t i : idx) by_k[data[i].patch.frames.dim(0)].push_back(i);
  EpochPlan plan;
  for (auto& [k, list] : by_k) {
    rng.shuffle(list);
    for (size_t at = 0; at < list.size(); at += static_cast<size_t>(batch_size)) {
      const size_t end = std::min(list.size(), at + static_cast<size_t>(batch_size));
      plan.batches.emplace_back(list.begin() + at, list.begin() + end);
    }
  }
  rng.shuffle(plan.batches);
  return plan;
}

Tensor stack_examples(const std::vector<AudioExample>& data, const std::vector<size_t>& idx,
                      std::vector<int>& cls) {
  std::vector<const LogMelPatch*> group;
  cls.clear();
  for (size_t i : idx) {
    group.push_back(&data[i].patch);
    cls.push_back(class_index(data[i].label));
  }
  return stack_patches(group, 0, group.size());
}

}  // namespace

TrainHistory train_audio(MVGGish& model, const std::vector<AudioExample>& dataset,
                         const AudioTrainConfig& cfg) {
  if (dataset.empty()) throw Error("train_audio: empty dataset");
  if (cfg.batch_size <= 0) throw Error("train_audio: batch_size must be positive");
  bool has_ad = false, has_hc = false;
  for (const auto& ex : dataset) (ex.label == 1 ? has_ad : has_hc) = true;
  if (!has_ad || !has_hc) throw Error("train_audio: dataset must contain both classes");

  // Clip-disjoint validation split, seeded; order of first appearance keeps
  // the split independent of patch ordering within a clip.
  std::vector<std::string> clip_order;
  std::set<std::string> seen;
  for (const auto& ex : dataset)
    if (seen.insert(ex.patch.clip_id).second) clip_order.push_back(ex.patch.clip_id);
  std::set<std::string> val_clips;
  if (clip_order.size() >= 2) {
    Rng split_rng(Rng::derive(cfg.seed, "audio-val-split"));
    split_rng.shuffle(clip_order);
    const size_t n_val = std::max<size_t>(
        1, static_cast<size_t>(cfg.val_fraction * static_cast<float>(clip_order.size()) + 0.5f));
    for (size_t i = 0; i < std::min(n_val, clip_order.size() - 1); ++i)
      val_clips.insert(clip_order[i]);
  }

  std::vector<size_t> train_idx, val_idx;
  for (size_t i = 0; i < dataset.size(); ++i)
    (val_clips.count(dataset[i].patch.clip_id) ? val_idx : train_idx).push_back(i);
  const bool monitor_val = !val_idx.empty();

  std::vector<LayerParams*> tuned =
      cfg.freeze_backbone ? model.head_param_sets() : model.param_sets();

  // Frozen backbone: the convolutional stack never changes, so embeddings
  // are computed once and epochs touch only the head.
  Tensor cached_emb;
  if (cfg.freeze_backbone) {
    std::vector<LogMelPatch> all;
    for (const auto& ex : dataset) all.push_back(ex.patch);
    cached_emb = model.embed_patches(all);
  }

  AdamT<float> adam(cfg.lr);
  Rng order_rng(Rng::derive(cfg.seed, "audio-epoch-order"));
  TrainHistory hist;
  ParamSnapshot best;
  float best_loss = 0.0f;
  int bad_epochs = 0;

  auto eval_loss = [&](const std::vector<size_t>& idx) {
    double total = 0.0;
    size_t count = 0;
    std::map<int, std::vector<size_t>> by_k;
    for (size_t i : idx) by_k[dataset[i].patch.frames.dim(0)].push_back(i);
    for (const auto& [k, list] : by_k) {
      const size_t batch = std::max<size_t>(1, kBatchFramesBudget / std::max(k, 1));
      for (size_t at = 0; at < list.size(); at += batch) {
        std::vector<size_t> chunk(list.begin() + at,
                                  list.begin() + std::min(list.size(), at + batch));
        std::vector<int> cls;
        Tensor logits;
        if (cfg.freeze_backbone) {
          Tensor emb({static_cast<int>(chunk.size()), 512});
          for (size_t j = 0; j < chunk.size(); ++j) {
            std::copy(cached_emb.data() + chunk[j] * 512, cached_emb.data() + (chunk[j] + 1) * 512,
                      emb.data() + j * 512);
            cls.push_back(class_index(dataset[chunk[j]].label));
          }
          logits = model.head_forward(make_var(std::move(emb)), nullptr)->value;
        } else {
          Tensor x = stack_examples(dataset, chunk, cls);
          logits = model.forward(make_var(std::move(x)), BnMode::kInfer, nullptr)->value;
        }
        total += static_cast<double>(batch_loss_infer(logits, cls)) * chunk.size();
        count += chunk.size();
      }
    }
    return static_cast<float>(total / static_cast<double>(count));
  };

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    EpochPlan plan = plan_epoch(dataset, train_idx, cfg.batch_size, order_rng);
    double epoch_loss = 0.0;
    size_t epoch_count = 0;
    for (const auto& batch : plan.batches) {
      GradTape tape;
      std::vector<int> cls;
      VarPtr<float> logits;
      if (cfg.freeze_backbone) {
        Tensor emb({static_cast<int>(batch.size()), 512});
        for (size_t j = 0; j < batch.size(); ++j) {
          std::copy(cached_emb.data() + batch[j] * 512, cached_emb.data() + (batch[j] + 1) * 512,
                    emb.data() + j * 512);
          cls.push_back(class_index(dataset[batch[j]].label));
        }
        logits = model.head_forward(make_var(std::move(emb)), &tape);
      } else {
        Tensor x = stack_examples(dataset, batch, cls);
        logits = model.forward(make_var(std::move(x)), BnMode::kTrain, &tape);
      }
      AdamT<float>::zero_grads(tuned);
      const float loss = softmax_xent2_backward(logits, cls);
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
