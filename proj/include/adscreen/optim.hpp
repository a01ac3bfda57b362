#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "adscreen/error.hpp"
#include "adscreen/nn.hpp"

namespace adscreen {

// Adam with bias correction. First-/second-moment state is keyed by slot
// identity, so the same optimizer instance must be reused across steps but
// layers must outlive it. lr=0 or an all-zero gradient leaves parameters
// bit-identical.
template <typename T>
class AdamT {
 public:
  explicit AdamT(T lr, T beta1 = T(0.9), T beta2 = T(0.999), T eps = T(1e-8))
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

  void step(const std::vector<LayerParamsT<T>*>& params) {
    for (auto* set : params)
      for (size_t i = 0; i < set->count(); ++i) {
        auto& slot = set->slot(i);
        if (!slot.trainable) continue;
        if (!slot.grad.all_finite())
          throw Error("adam: non-finite gradient in " + slot.name);
        auto& st = state_[&slot];
        if (st.t == 0) {
          st.m = TensorT<T>(slot.value.shape(), T(0));
          st.v = TensorT<T>(slot.value.shape(), T(0));
        }
        st.t += 1;
        const T bc1 = T(1) - static_cast<T>(std::pow(static_cast<double>(b1_), st.t));
        const T bc2 = T(1) - static_cast<T>(std::pow(static_cast<double>(b2_), st.t));
        for (size_t j = 0; j < slot.value.size(); ++j) {
          const T g = slot.grad.data()[j];
          st.m.data()[j] = b1_ * st.m.data()[j] + (T(1) - b1_) * g;
          st.v.data()[j] = b2_ * st.v.data()[j] + (T(1) - b2_) * g * g;
          const T mhat = st.m.data()[j] / bc1;
          const T vhat = st.v.data()[j] / bc2;
          slot.value.data()[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
      }
  }

  static void zero_grads(const std::vector<LayerParamsT<T>*>& params) {
    for (auto* set : params) set->zero_grads();
  }

  T lr() const { return lr_; }

 private:
  struct State {
    TensorT<T> m, v;
    int64_t t = 0;
  };
  std::unordered_map<const ArraySlotT<T>*, State> state_;
  T lr_, b1_, b2_, eps_;
};

using Adam = AdamT<float>;

// Snapshot/restore of parameter values (not optimizer state); used to keep
// the best weights under early stopping.
template <typename T>
class ParamSnapshotT {
 public:
  void capture(const std::vector<LayerParamsT<T>*>& params) {
    values_.clear();
    for (auto* set : params)
      for (size_t i = 0; i < set->count(); ++i) values_.push_back(set->slot(i).value);
    captured_ = true;
  }

  void restore(const std::vector<LayerParamsT<T>*>& params) const {
    if (!captured_) throw Error("param snapshot: restore before capture");
    size_t k = 0;
    for (auto* set : params)
      for (size_t i = 0; i < set->count(); ++i) {
        auto& slot = set->slot(i);
        if (k >= values_.size() || !slot.value.same_shape(values_[k]))
          throw Error("param snapshot: layout changed since capture");
        slot.value = values_[k++];
      }
  }

  bool captured() const { return captured_; }

 private:
  std::vector<TensorT<T>> values_;
  bool captured_ = false;
};

using ParamSnapshot = ParamSnapshotT<float>;

}  // namespace adscreen
