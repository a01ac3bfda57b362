#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "adscreen/logmel.hpp"
#include "adscreen/nn.hpp"
#include "adscreen/tensor.hpp"
#include "adscreen/train_common.hpp"
#include "adscreen/weights_io.hpp"

namespace adscreen {

// Segment-level audio classifier: four conv blocks with channel plan
// [64], [128], [256,256], [512,512] (3x3 same-padding conv -> ReLU -> BN,
// 2x2 max pool closing each block), global average pooling to a 512-d
// embedding, then a dense 512->512->2 head. Softmax column 0 is the AD
// class, column 1 HC. Global pooling makes the head shape-agnostic: the
// same parameters run on 96x64 and 496x64 patches.
class MVGGish {
 public:
  explicit MVGGish(uint64_t seed = 1);

  int64_t trainable_param_count() const;

  // Fixed layer order; includes BN running stats (non-trainable slots).
  std::vector<LayerParams*> param_sets();
  std::vector<LayerParams*> backbone_param_sets();  // convs + BNs
  std::vector<LayerParams*> head_param_sets();      // fc1, fc2

  // x: [N, k, 64, 1] with k >= 16 (survives four 2x2 pools). Logits [N,2].
  VarPtr<float> forward(const VarPtr<float>& x, BnMode mode, GradTape* tape);
  // Backbone only: [N, k, 64, 1] -> [N, 512] embeddings.
  VarPtr<float> backbone_forward(const VarPtr<float>& x, BnMode mode, GradTape* tape);
  // Head only: [N, 512] -> logits [N, 2]. Pairs with cached embeddings.
  VarPtr<float> head_forward(const VarPtr<float>& emb, GradTape* tape);

  // AD probability for one patch (inference mode, frozen BN stats).
  float predict_segment(const LogMelPatch& patch);
  // Batched inference; results line up with the input order.
  std::vector<float> predict_patches(const std::vector<LogMelPatch>& patches);
  // Batched embeddings, [n, 512], input order preserved.
  Tensor embed_patches(const std::vector<LogMelPatch>& patches);

  void save(const std::string& path);
  void load(const std::string& path);  // strict: every array must match

  // Backbone transfer: arrays in `file` whose names match a conv/BN slot
  // here are copied in; everything else keeps its current values. strict
  // mode errors on shape conflicts or unknown array names.
  void save_backbone(const std::string& path);
  void load_backbone(const WeightFile& file, bool strict);
  void load_backbone(const std::string& path, bool strict);

 private:
  VarPtr<float> block_(const VarPtr<float>& x, Conv2dT<float>& conv, BatchNormT<float>& bn,
                       BnMode mode, GradTape* tape);

  Conv2dT<float> conv1_, conv2_, conv3_1_, conv3_2_, conv4_1_, conv4_2_;
  BatchNormT<float> bn1_, bn2_, bn3_1_, bn3_2_, bn4_1_, bn4_2_;
  MaxPool2dT<float> pool_;
  GlobalAvgPoolT<float> gap_;
  DenseT<float> fc1_, fc2_;
};

// Per-clip audio prediction: per-patch AD probabilities and their mean.
struct AudioPrediction {
  std::string clip_id;
  std::vector<float> patch_probs;
  float p_audio = 0.0f;
};

// Arithmetic mean of per-patch probabilities. Empty input errors (the clip
// was shorter than one patch).
float aggregate_audio(const std::vector<float>& predictions);

AudioPrediction predict_clip(MVGGish& model, const std::string& clip_id,
                             const std::vector<LogMelPatch>& patches);

// One training example: a patch labeled with its subject's diagnosis
// (1 = AD, 0 = HC). patch.clip_id groups patches for the validation split.
struct AudioExample {
  LogMelPatch patch;
  int label = 0;
};

struct AudioTrainConfig {
  float lr = 1e-6f;
  int batch_size = 32;
  int patience = 30;      // epochs past the best validation loss
  int max_epochs = 100;
  float val_fraction = 0.1f;  // fraction of clips held out, clip-disjoint
  bool freeze_backbone = false;
  uint64_t seed = 1;
};

// Mini-batch Adam on BCE over patch labels. Validation clips (val_fraction
// of distinct clip ids, seeded, clip-disjoint) drive early stopping: training
// halts once the validation loss has not improved for more than `patience`
// epochs, and the best-epoch weights are restored. With fewer than two
// distinct clips there is no held-out set and the training loss is monitored
// instead. freeze_backbone trains only the dense head on embeddings cached
// once from the frozen convolutional stack (BN in inference mode, running
// stats untouched).
TrainHistory train_audio(MVGGish& model, const std::vector<AudioExample>& dataset,
                         const AudioTrainConfig& cfg);

}  // namespace adscreen
