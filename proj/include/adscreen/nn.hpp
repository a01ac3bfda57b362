#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "adscreen/error.hpp"
#include "adscreen/gemm.hpp"
#include "adscreen/rng.hpp"
#include "adscreen/tensor.hpp"

namespace adscreen {

// A named parameter array plus its gradient. `trainable` gates both the
// optimizer and gradient checking; running statistics live here too so the
// weight container sees every array that defines model state.
template <typename T>
struct ArraySlotT {
  std::string name;  // qualified, e.g. "conv1/weight"
  TensorT<T> value;
  TensorT<T> grad;
  bool trainable = true;

  ArraySlotT(std::string n, TensorT<T> v, bool train)
      : name(std::move(n)), value(std::move(v)), grad(value.shape(), T(0)), trainable(train) {}

  void zero_grad() { grad.zero(); }
};

// Parameter set of one layer. Slots are stored in declaration order so
// serialization and optimizer traversal are deterministic.
template <typename T>
class LayerParamsT {
 public:
  explicit LayerParamsT(std::string prefix) : prefix_(std::move(prefix)) {}

  ArraySlotT<T>& add(const std::string& local, TensorT<T> value, bool trainable = true) {
    slots_.push_back(std::make_unique<ArraySlotT<T>>(prefix_ + "/" + local, std::move(value), trainable));
    return *slots_.back();
  }

  const std::string& prefix() const { return prefix_; }
  size_t count() const { return slots_.size(); }
  ArraySlotT<T>& slot(size_t i) { return *slots_[i]; }
  const ArraySlotT<T>& slot(size_t i) const { return *slots_[i]; }

  ArraySlotT<T>* find(const std::string& local) {
    const std::string full = prefix_ + "/" + local;
    for (auto& s : slots_)
      if (s->name == full) return s.get();
    return nullptr;
  }

  void zero_grads() {
    for (auto& s : slots_) s->zero_grad();
  }

 private:
  std::string prefix_;
  std::vector<std::unique_ptr<ArraySlotT<T>>> slots_;
};

// Value/gradient pair flowing between ops. Gradients accumulate, so one
// output feeding several consumers just sums their contributions. The grad
// buffer stays empty until an op records itself on a tape, which keeps
// inference at half the memory of training.
template <typename T>
struct VarT {
  TensorT<T> value;
  TensorT<T> grad;

  explicit VarT(TensorT<T> v) : value(std::move(v)) {}

  void ensure_grad() {
    if (!grad.same_shape(value)) grad = TensorT<T>(value.shape(), T(0));
  }
};

template <typename T>
using VarPtr = std::shared_ptr<VarT<T>>;

template <typename T>
VarPtr<T> make_var(TensorT<T> v) {
  return std::make_shared<VarT<T>>(std::move(v));
}

// Reverse-mode tape: forward passes append closures, backward() replays them
// in reverse. Closures capture the VarPtrs they need, which also keeps the
// saved activations alive.
template <typename T>
class GradTapeT {
 public:
  void record(std::function<void()> backward) { ops_.push_back(std::move(backward)); }

  void backward() {
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
    ops_.clear();
  }

  size_t size() const { return ops_.size(); }
  void clear() { ops_.clear(); }

 private:
  std::vector<std::function<void()>> ops_;
};

// ---------------------------------------------------------------------------
// Initialization

// He-uniform: limit sqrt(6 / fan_in), suited to ReLU stacks.
template <typename T>
void he_uniform_fill(TensorT<T>& w, int fan_in, Rng& rng) {
  if (fan_in <= 0) throw Error("he_uniform_fill: fan_in must be positive");
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (size_t i = 0; i < w.size(); ++i) w.data()[i] = static_cast<T>(rng.uniform(-limit, limit));
}

// ---------------------------------------------------------------------------
// Free-standing elementwise ops

enum class Activation { kRelu, kSigmoid };

template <typename T>
TensorT<T> activation(const TensorT<T>& x, Activation kind) {
  TensorT<T> y(x.shape());
  if (kind == Activation::kRelu) {
    for (size_t i = 0; i < x.size(); ++i) y.data()[i] = x.data()[i] > T(0) ? x.data()[i] : T(0);
  } else {
    for (size_t i = 0; i < x.size(); ++i) y.data()[i] = T(1) / (T(1) + std::exp(-x.data()[i]));
  }
  return y;
}

// Softmax across the last axis, stabilized by the row max.
template <typename T>
TensorT<T> softmax_last(const TensorT<T>& x) {
  if (x.rank() < 1) throw Error("softmax_last: rank must be >= 1");
  const int d = x.dim(x.rank() - 1);
  const size_t rows = x.size() / static_cast<size_t>(d);
  TensorT<T> y(x.shape());
  for (size_t r = 0; r < rows; ++r) {
    const T* xr = x.data() + r * d;
    T* yr = y.data() + r * d;
    T mx = xr[0];
    for (int i = 1; i < d; ++i) mx = std::max(mx, xr[i]);
    T sum = T(0);
    for (int i = 0; i < d; ++i) {
      yr[i] = std::exp(xr[i] - mx);
      sum += yr[i];
    }
    for (int i = 0; i < d; ++i) yr[i] /= sum;
  }
  return y;
}

// Mean binary cross-entropy with clamping so exact 0/1 predictions stay finite.
template <typename T>
T bce_loss(const TensorT<T>& pred, const TensorT<T>& target, T eps = T(1e-7)) {
  if (!pred.same_shape(target)) throw Error("bce_loss: pred/target shape mismatch");
  if (pred.size() == 0) throw Error("bce_loss: empty input");
  double acc = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) {
    const double p = std::min(std::max(static_cast<double>(pred.data()[i]), static_cast<double>(eps)),
                              1.0 - static_cast<double>(eps));
    const double t = static_cast<double>(target.data()[i]);
    if (t != 0.0 && t != 1.0) throw Error("bce_loss: target must be 0 or 1");
    acc += -(t * std::log(p) + (1.0 - t) * std::log(1.0 - p));
  }
  return static_cast<T>(acc / static_cast<double>(pred.size()));
}

// ---------------------------------------------------------------------------
// Tape ops on Vars

template <typename T>
VarPtr<T> relu(const VarPtr<T>& x, GradTapeT<T>* tape) {
  auto y = make_var(activation(x->value, Activation::kRelu));
  if (tape) {
    x->ensure_grad();
    y->ensure_grad();
    tape->record([x, y]() {
      for (size_t i = 0; i < x->grad.size(); ++i)
        if (x->value.data()[i] > T(0)) x->grad.data()[i] += y->grad.data()[i];
    });
  }
  return y;
}

template <typename T>
VarPtr<T> sigmoid(const VarPtr<T>& x, GradTapeT<T>* tape) {
  auto y = make_var(activation(x->value, Activation::kSigmoid));
  if (tape) {
    x->ensure_grad();
    y->ensure_grad();
    tape->record([x, y]() {
      for (size_t i = 0; i < x->grad.size(); ++i) {
        const T s = y->value.data()[i];
        x->grad.data()[i] += y->grad.data()[i] * s * (T(1) - s);
      }
    });
  }
  return y;
}

template <typename T>
VarPtr<T> softmax(const VarPtr<T>& x, GradTapeT<T>* tape) {
  auto y = make_var(softmax_last(x->value));
  if (tape) {
    x->ensure_grad();
    y->ensure_grad();
    const int d = x->value.dim(x->value.rank() - 1);
    tape->record([x, y, d]() {
      const size_t rows = y->value.size() / static_cast<size_t>(d);
      for (size_t r = 0; r < rows; ++r) {
        const T* yv = y->value.data() + r * d;
        const T* dy = y->grad.data() + r * d;
        T dot = T(0);
        for (int i = 0; i < d; ++i) dot += dy[i] * yv[i];
        T* dx = x->grad.data() + r * d;
        for (int i = 0; i < d; ++i) dx[i] += yv[i] * (dy[i] - dot);
      }
    });
  }
  return y;
}

template <typename T>
VarPtr<T> add(const VarPtr<T>& a, const VarPtr<T>& b, GradTapeT<T>* tape) {
  if (!a->value.same_shape(b->value)) throw Error("add: shape mismatch");
  TensorT<T> out(a->value.shape());
  for (size_t i = 0; i < out.size(); ++i) out.data()[i] = a->value.data()[i] + b->value.data()[i];
  auto y = make_var(std::move(out));
  if (tape) {
    a->ensure_grad();
    b->ensure_grad();
    y->ensure_grad();
    tape->record([a, b, y]() {
      for (size_t i = 0; i < y->grad.size(); ++i) {
        a->grad.data()[i] += y->grad.data()[i];
        b->grad.data()[i] += y->grad.data()[i];
      }
    });
  }
  return y;
}

// Concatenate along the last axis; all inputs share the leading shape.
template <typename T>
VarPtr<T> concat_last(const std::vector<VarPtr<T>>& parts, GradTapeT<T>* tape) {
  if (parts.empty()) throw Error("concat_last: no inputs");
  const auto& lead = parts[0]->value;
  const int lead_rank = lead.rank();
  size_t rows = lead.size() / static_cast<size_t>(lead.dim(lead_rank - 1));
  int total = 0;
  for (const auto& p : parts) {
    if (p->value.rank() != lead_rank) throw Error("concat_last: rank mismatch");
    for (int i = 0; i + 1 < lead_rank; ++i)
      if (p->value.dim(i) != lead.dim(i)) throw Error("concat_last: leading shape mismatch");
    total += p->value.dim(lead_rank - 1);
  }
  std::vector<int> out_shape = lead.shape();
  out_shape.back() = total;
  TensorT<T> out(out_shape);
  size_t off = 0;
  for (const auto& p : parts) {
    const int d = p->value.dim(lead_rank - 1);
    for (size_t r = 0; r < rows; ++r)
      for (int i = 0; i < d; ++i) out.data()[r * total + off + i] = p->value.data()[r * d + i];
    off += static_cast<size_t>(d);
  }
  auto y = make_var(std::move(out));
  if (tape) {
    for (const auto& p : parts) p->ensure_grad();
    y->ensure_grad();
    tape->record([parts, y, rows, total]() {
      size_t o = 0;
      for (const auto& p : parts) {
        const int d = p->value.dim(p->value.rank() - 1);
        for (size_t r = 0; r < rows; ++r)
          for (int i = 0; i < d; ++i) p->grad.data()[r * d + i] += y->grad.data()[r * total + o + i];
        o += static_cast<size_t>(d);
      }
    });
  }
  return y;
}

// Mean over rows selected by a {0,1} mask: x [N,S,D], mask [N,S] -> [N,D].
// Rows with an all-zero mask are rejected; every sequence keeps at least one
// unmasked position by construction upstream.
template <typename T>
VarPtr<T> masked_mean_rows(const VarPtr<T>& x, const TensorT<T>& mask, GradTapeT<T>* tape) {
  if (x->value.rank() != 3) throw Error("masked_mean_rows: expected rank-3 input");
  const int n = x->value.dim(0), s = x->value.dim(1), d = x->value.dim(2);
  if (mask.rank() != 2 || mask.dim(0) != n || mask.dim(1) != s)
    throw Error("masked_mean_rows: mask shape mismatch");
  TensorT<T> out({n, d}, T(0));
  std::vector<T> denom(static_cast<size_t>(n), T(0));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < s; ++j) {
      const T m = mask.data()[i * s + j];
      if (m == T(0)) continue;
      denom[i] += m;
      for (int c = 0; c < d; ++c) out.data()[i * d + c] += m * x->value.at3(i, j, c);
    }
    if (denom[i] == T(0)) throw Error("masked_mean_rows: sequence with empty mask");
    for (int c = 0; c < d; ++c) out.data()[i * d + c] /= denom[i];
  }
  auto y = make_var(std::move(out));
  if (tape) {
    x->ensure_grad();
    y->ensure_grad();
    tape->record([x, y, mask, denom, n, s, d]() {
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < s; ++j) {
          const T m = mask.data()[i * s + j];
          if (m == T(0)) continue;
          const T scale = m / denom[i];
          for (int c = 0; c < d; ++c)
            x->grad.data()[(static_cast<size_t>(i) * s + j) * d + c] += scale * y->grad.data()[i * d + c];
        }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Dense

template <typename T>
class DenseT {
 public:
  DenseT(std::string name, int din, int dout)
      : params_(std::move(name)), din_(din), dout_(dout) {
    weight_ = &params_.add("weight", TensorT<T>({din, dout}, T(0)));
    bias_ = &params_.add("bias", TensorT<T>({dout}, T(0)));
  }

  void init(Rng& rng) { he_uniform_fill(weight_->value, din_, rng); }

  int input_dim() const { return din_; }
  int output_dim() const { return dout_; }
  LayerParamsT<T>& params() { return params_; }

  // Input rank >= 2; every leading axis is batch, the last must equal din.
  VarPtr<T> forward(const VarPtr<T>& x, GradTapeT<T>* tape) {
    const auto& xv = x->value;
    if (xv.rank() < 2 || xv.dim(xv.rank() - 1) != din_)
      throw Error(params_.prefix() + ": input last dim must be " + std::to_string(din_) +
                  ", got " + xv.shape_str());
    const int m = static_cast<int>(xv.size()) / din_;
    std::vector<int> out_shape = xv.shape();
    out_shape.back() = dout_;
    TensorT<T> out(out_shape);
    gemm(false, false, m, dout_, din_, T(1), xv.data(), din_, weight_->value.data(), dout_, T(0),
         out.data(), dout_);
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < dout_; ++c) out.data()[static_cast<size_t>(r) * dout_ + c] += bias_->value.data()[c];
    auto y = make_var(std::move(out));
    if (tape) {
      x->ensure_grad();
      y->ensure_grad();
      ArraySlotT<T>* w = weight_;
      ArraySlotT<T>* b = bias_;
      const int din = din_, dout = dout_;
      tape->record([x, y, w, b, m, din, dout]() {
        // dW += X^T dY, db += column sums, dX += dY W^T
        gemm(true, false, din, dout, m, T(1), x->value.data(), din, y->grad.data(), dout, T(1),
             w->grad.data(), dout);
        for (int r = 0; r < m; ++r)
          for (int c = 0; c < dout; ++c) b->grad.data()[c] += y->grad.data()[static_cast<size_t>(r) * dout + c];
        gemm(false, true, m, din, dout, T(1), y->grad.data(), dout, w->value.data(), dout, T(1),
             x->grad.data(), din);
      });
    }
    return y;
  }

 private:
  LayerParamsT<T> params_;
  ArraySlotT<T>* weight_;
  ArraySlotT<T>* bias_;
  int din_, dout_;
};

// ---------------------------------------------------------------------------
// Conv2d, NHWC, 'same' or 'valid' padding

enum class Padding { kSame, kValid };

template <typename T>
class Conv2dT {
 public:
  Conv2dT(std::string name, int kh, int kw, int cin, int cout, int stride = 1,
          Padding pad = Padding::kSame)
      : params_(std::move(name)), kh_(kh), kw_(kw), cin_(cin), cout_(cout), stride_(stride), pad_(pad) {
    if (kh <= 0 || kw <= 0 || cin <= 0 || cout <= 0 || stride <= 0)
      throw Error("conv2d: non-positive geometry");
    weight_ = &params_.add("weight", TensorT<T>({kh, kw, cin, cout}, T(0)));
    bias_ = &params_.add("bias", TensorT<T>({cout}, T(0)));
  }

  void init(Rng& rng) { he_uniform_fill(weight_->value, kh_ * kw_ * cin_, rng); }

  LayerParamsT<T>& params() { return params_; }
  int out_channels() const { return cout_; }

  VarPtr<T> forward(const VarPtr<T>& x, GradTapeT<T>* tape) {
    const auto& xv = x->value;
    if (xv.rank() != 4) throw Error(params_.prefix() + ": expected NHWC input, got " + xv.shape_str());
    const int n = xv.dim(0), h = xv.dim(1), w = xv.dim(2), c = xv.dim(3);
    if (c != cin_)
      throw Error(params_.prefix() + ": expected " + std::to_string(cin_) + " input channels, got " +
                  std::to_string(c));
    int oh, ow, pad_top, pad_left;
    geometry(h, w, oh, ow, pad_top, pad_left);
    const int patch = kh_ * kw_ * cin_;
    TensorT<T> out({n, oh, ow, cout_});
    std::vector<T> col(static_cast<size_t>(oh) * ow * patch);
    for (int s = 0; s < n; ++s) {
      im2col(xv.data() + static_cast<size_t>(s) * h * w * c, h, w, oh, ow, pad_top, pad_left, col.data());
      T* dst = out.data() + static_cast<size_t>(s) * oh * ow * cout_;
      gemm(false, false, oh * ow, cout_, patch, T(1), col.data(), patch, weight_->value.data(), cout_,
           T(0), dst, cout_);
      for (int r = 0; r < oh * ow; ++r)
        for (int f = 0; f < cout_; ++f) dst[static_cast<size_t>(r) * cout_ + f] += bias_->value.data()[f];
    }
    auto y = make_var(std::move(out));
    if (tape) {
      x->ensure_grad();
      y->ensure_grad();
      ArraySlotT<T>* wslot = weight_;
      ArraySlotT<T>* bslot = bias_;
      Conv2dT<T>* self = this;
      tape->record([self, x, y, wslot, bslot, n, h, w, c, oh, ow, pad_top, pad_left]() {
        const int patch = self->kh_ * self->kw_ * self->cin_;
        const int cout = self->cout_;
        std::vector<T> col(static_cast<size_t>(oh) * ow * patch);
        std::vector<T> dcol(col.size());
        for (int s = 0; s < n; ++s) {
          self->im2col(x->value.data() + static_cast<size_t>(s) * h * w * c, h, w, oh, ow, pad_top,
                       pad_left, col.data());
          const T* dy = y->grad.data() + static_cast<size_t>(s) * oh * ow * cout;
          gemm(true, false, patch, cout, oh * ow, T(1), col.data(), patch, dy, cout, T(1),
               wslot->grad.data(), cout);
          for (int r = 0; r < oh * ow; ++r)
            for (int f = 0; f < cout; ++f) bslot->grad.data()[f] += dy[static_cast<size_t>(r) * cout + f];
          gemm(false, true, oh * ow, patch, cout, T(1), dy, cout, wslot->value.data(), cout, T(0),
               dcol.data(), patch);
          self->col2im_add(dcol.data(), h, w, oh, ow, pad_top, pad_left,
                           x->grad.data() + static_cast<size_t>(s) * h * w * c);
        }
      });
    }
    return y;
  }

 private:
  void geometry(int h, int w, int& oh, int& ow, int& pad_top, int& pad_left) const {
    if (pad_ == Padding::kSame) {
      oh = (h + stride_ - 1) / stride_;
      ow = (w + stride_ - 1) / stride_;
      const int ph = std::max((oh - 1) * stride_ + kh_ - h, 0);
      const int pw = std::max((ow - 1) * stride_ + kw_ - w, 0);
      pad_top = ph / 2;
      pad_left = pw / 2;
    } else {
      if (h < kh_ || w < kw_)
        throw Error(params_.prefix() + ": input " + std::to_string(h) + "x" + std::to_string(w) +
                    " smaller than kernel");
      oh = (h - kh_) / stride_ + 1;
      ow = (w - kw_) / stride_ + 1;
      pad_top = 0;
      pad_left = 0;
    }
  }

  // col layout: [oh*ow, kh*kw*cin], zero-filled where the window leaves the image.
  void im2col(const T* x, int h, int w, int oh, int ow, int pad_top, int pad_left, T* col) const {
    const int patch = kh_ * kw_ * cin_;
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        T* row = col + (static_cast<size_t>(oy) * ow + ox) * patch;
        int idx = 0;
        for (int ky = 0; ky < kh_; ++ky) {
          const int iy = oy * stride_ - pad_top + ky;
          for (int kx = 0; kx < kw_; ++kx) {
            const int ix = ox * stride_ - pad_left + kx;
            if (iy < 0 || iy >= h || ix < 0 || ix >= w) {
              for (int ci = 0; ci < cin_; ++ci) row[idx++] = T(0);
            } else {
              const T* src = x + (static_cast<size_t>(iy) * w + ix) * cin_;
              for (int ci = 0; ci < cin_; ++ci) row[idx++] = src[ci];
            }
          }
        }
      }
  }

  void col2im_add(const T* dcol, int h, int w, int oh, int ow, int pad_top, int pad_left, T* dx) const {
    const int patch = kh_ * kw_ * cin_;
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        const T* row = dcol + (static_cast<size_t>(oy) * ow + ox) * patch;
        int idx = 0;
        for (int ky = 0; ky < kh_; ++ky) {
          const int iy = oy * stride_ - pad_top + ky;
          for (int kx = 0; kx < kw_; ++kx) {
            const int ix = ox * stride_ - pad_left + kx;
            if (iy < 0 || iy >= h || ix < 0 || ix >= w) {
              idx += cin_;
            } else {
              T* dst = dx + (static_cast<size_t>(iy) * w + ix) * cin_;
              for (int ci = 0; ci < cin_; ++ci) dst[ci] += row[idx++];
            }
          }
        }
      }
  }

  LayerParamsT<T> params_;
  ArraySlotT<T>* weight_;
  ArraySlotT<T>* bias_;
  int kh_, kw_, cin_, cout_, stride_;
  Padding pad_;
};

// ---------------------------------------------------------------------------
// MaxPool2d 2x2 stride 2 (trailing odd row/column dropped)

template <typename T>
class MaxPool2dT {
 public:
  VarPtr<T> forward(const VarPtr<T>& x, GradTapeT<T>* tape) {
    const auto& xv = x->value;
    if (xv.rank() != 4) throw Error("maxpool2d: expected NHWC input, got " + xv.shape_str());
    const int n = xv.dim(0), h = xv.dim(1), w = xv.dim(2), c = xv.dim(3);
    if (h < 2 || w < 2) throw Error("maxpool2d: spatial dims must be >= 2, got " + xv.shape_str());
    const int oh = h / 2, ow = w / 2;
    TensorT<T> out({n, oh, ow, c});
    auto arg = std::make_shared<std::vector<int32_t>>(out.size());
    for (int s = 0; s < n; ++s)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox)
          for (int ci = 0; ci < c; ++ci) {
            T best = -std::numeric_limits<T>::infinity();
            int32_t best_idx = 0;
            for (int dy = 0; dy < 2; ++dy)
              for (int dx = 0; dx < 2; ++dx) {
                const int iy = oy * 2 + dy, ix = ox * 2 + dx;
                const size_t idx = ((static_cast<size_t>(s) * h + iy) * w + ix) * c + ci;
                const T v = xv.data()[idx];
                if (v > best) {  // strict: ties keep the first (row-major) max
                  best = v;
                  best_idx = static_cast<int32_t>(idx);
                }
              }
            const size_t o = ((static_cast<size_t>(s) * oh + oy) * ow + ox) * c + ci;
            out.data()[o] = best;
            (*arg)[o] = best_idx;
          }
    auto y = make_var(std::move(out));
    if (tape) {
      x->ensure_grad();
      y->ensure_grad();
      tape->record([x, y, arg]() {
        for (size_t o = 0; o < y->grad.size(); ++o) x->grad.data()[(*arg)[o]] += y->grad.data()[o];
      });
    }
    return y;
  }
};

// ---------------------------------------------------------------------------
// Global average pool: [N,H,W,C] -> [N,C]

template <typename T>
class GlobalAvgPoolT {
 public:
  VarPtr<T> forward(const VarPtr<T>& x, GradTapeT<T>* tape) {
    const auto& xv = x->value;
    if (xv.rank() != 4) throw Error("global_avg_pool: expected NHWC input, got " + xv.shape_str());
    const int n = xv.dim(0), h = xv.dim(1), w = xv.dim(2), c = xv.dim(3);
    TensorT<T> out({n, c}, T(0));
    const T inv = T(1) / static_cast<T>(h * w);
    for (int s = 0; s < n; ++s) {
      const T* src = xv.data() + static_cast<size_t>(s) * h * w * c;
      T* dst = out.data() + static_cast<size_t>(s) * c;
      for (int p = 0; p < h * w; ++p)
        for (int ci = 0; ci < c; ++ci) dst[ci] += src[static_cast<size_t>(p) * c + ci];
      for (int ci = 0; ci < c; ++ci) dst[ci] *= inv;
    }
    auto y = make_var(std::move(out));
    if (tape) {
      x->ensure_grad();
      y->ensure_grad();
      tape->record([x, y, n, h, w, c, inv]() {
        for (int s = 0; s < n; ++s) {
          const T* dy = y->grad.data() + static_cast<size_t>(s) * c;
          T* dx = x->grad.data() + static_cast<size_t>(s) * h * w * c;
          for (int p = 0; p < h * w; ++p)
            for (int ci = 0; ci < c; ++ci) dx[static_cast<size_t>(p) * c + ci] += dy[ci] * inv;
        }
      });
    }
    return y;
  }
};

// ---------------------------------------------------------------------------
// BatchNorm over the last (channel) axis; biased batch variance

enum class BnMode { kTrain, kInfer };

template <typename T>
class BatchNormT {
 public:
  BatchNormT(std::string name, int channels, T momentum = T(0.99), T eps = T(1e-3))
      : params_(std::move(name)), channels_(channels), momentum_(momentum), eps_(eps) {
    gamma_ = &params_.add("gamma", TensorT<T>({channels}, T(1)));
    beta_ = &params_.add("beta", TensorT<T>({channels}, T(0)));
    run_mean_ = &params_.add("running_mean", TensorT<T>({channels}, T(0)), /*trainable=*/false);
    run_var_ = &params_.add("running_var", TensorT<T>({channels}, T(1)), /*trainable=*/false);
  }

  LayerParamsT<T>& params() { return params_; }
  int channels() const { return channels_; }

  VarPtr<T> forward(const VarPtr<T>& x, BnMode mode, GradTapeT<T>* tape) {
    const auto& xv = x->value;
    if (xv.rank() < 2 || xv.dim(xv.rank() - 1) != channels_)
      throw Error(params_.prefix() + ": channel axis must be " + std::to_string(channels_) + ", got " +
                  xv.shape_str());
    const size_t m = xv.size() / static_cast<size_t>(channels_);
    if (m == 0) throw Error(params_.prefix() + ": empty batch");
    TensorT<T> out(xv.shape());
    if (mode == BnMode::kInfer) {
      auto rmean = std::make_shared<std::vector<T>>(channels_);
      auto ristd = std::make_shared<std::vector<T>>(channels_);
      for (int c = 0; c < channels_; ++c) {
        (*rmean)[c] = run_mean_->value.data()[c];
        (*ristd)[c] = T(1) / std::sqrt(run_var_->value.data()[c] + eps_);
      }
      for (size_t r = 0; r < m; ++r)
        for (int c = 0; c < channels_; ++c) {
          const T xh = (xv.data()[r * channels_ + c] - (*rmean)[c]) * (*ristd)[c];
          out.data()[r * channels_ + c] = gamma_->value.data()[c] * xh + beta_->value.data()[c];
        }
      auto y = make_var(std::move(out));
      if (tape) {
        x->ensure_grad();
        y->ensure_grad();
        ArraySlotT<T>* g = gamma_;
        ArraySlotT<T>* b = beta_;
        const int ch = channels_;
        tape->record([x, y, g, b, rmean, ristd, m, ch]() {
          // Running stats are constants here, so the map is affine per channel.
          for (size_t r = 0; r < m; ++r)
            for (int c = 0; c < ch; ++c) {
              const T dy = y->grad.data()[r * ch + c];
              const T xh = (x->value.data()[r * ch + c] - (*rmean)[c]) * (*ristd)[c];
              x->grad.data()[r * ch + c] += dy * g->value.data()[c] * (*ristd)[c];
              g->grad.data()[c] += dy * xh;
              b->grad.data()[c] += dy;
            }
        });
      }
      return y;
    }

    // Train mode: batch statistics, then update the running estimates.
    auto mean = std::make_shared<std::vector<T>>(channels_, T(0));
    auto var = std::make_shared<std::vector<T>>(channels_, T(0));
    for (size_t r = 0; r < m; ++r)
      for (int c = 0; c < channels_; ++c) (*mean)[c] += xv.data()[r * channels_ + c];
    for (int c = 0; c < channels_; ++c) (*mean)[c] /= static_cast<T>(m);
    for (size_t r = 0; r < m; ++r)
      for (int c = 0; c < channels_; ++c) {
        const T d = xv.data()[r * channels_ + c] - (*mean)[c];
        (*var)[c] += d * d;
      }
    for (int c = 0; c < channels_; ++c) (*var)[c] /= static_cast<T>(m);

    auto xhat = std::make_shared<TensorT<T>>(xv.shape());
    std::vector<T> inv_std(channels_);
    for (int c = 0; c < channels_; ++c) inv_std[c] = T(1) / std::sqrt((*var)[c] + eps_);
    for (size_t r = 0; r < m; ++r)
      for (int c = 0; c < channels_; ++c) {
        const T xh = (xv.data()[r * channels_ + c] - (*mean)[c]) * inv_std[c];
        xhat->data()[r * channels_ + c] = xh;
        out.data()[r * channels_ + c] = gamma_->value.data()[c] * xh + beta_->value.data()[c];
      }
    for (int c = 0; c < channels_; ++c) {
      run_mean_->value.data()[c] = momentum_ * run_mean_->value.data()[c] + (T(1) - momentum_) * (*mean)[c];
      run_var_->value.data()[c] = momentum_ * run_var_->value.data()[c] + (T(1) - momentum_) * (*var)[c];
    }
    auto y = make_var(std::move(out));
    if (tape) {
      x->ensure_grad();
      y->ensure_grad();
      ArraySlotT<T>* g = gamma_;
      ArraySlotT<T>* b = beta_;
      auto istd = std::make_shared<std::vector<T>>(inv_std);
      const int ch = channels_;
      tape->record([x, y, g, b, xhat, istd, m, ch]() {
        // Standard train-mode backward through batch statistics.
        std::vector<T> sum_dy(ch, T(0)), sum_dy_xhat(ch, T(0));
        for (size_t r = 0; r < m; ++r)
          for (int c = 0; c < ch; ++c) {
            const T dy = y->grad.data()[r * ch + c];
            sum_dy[c] += dy;
            sum_dy_xhat[c] += dy * xhat->data()[r * ch + c];
          }
        for (int c = 0; c < ch; ++c) {
          b->grad.data()[c] += sum_dy[c];
          g->grad.data()[c] += sum_dy_xhat[c];
        }
        const T inv_m = T(1) / static_cast<T>(m);
        for (size_t r = 0; r < m; ++r)
          for (int c = 0; c < ch; ++c) {
            const T dy = y->grad.data()[r * ch + c];
            const T xh = xhat->data()[r * ch + c];
            x->grad.data()[r * ch + c] +=
                g->value.data()[c] * (*istd)[c] * inv_m *
                (static_cast<T>(m) * dy - sum_dy[c] - xh * sum_dy_xhat[c]);
          }
      });
    }
    return y;
  }

 private:
  LayerParamsT<T> params_;
  ArraySlotT<T>* gamma_;
  ArraySlotT<T>* beta_;
  ArraySlotT<T>* run_mean_;
  ArraySlotT<T>* run_var_;
  int channels_;
  T momentum_, eps_;
};

// ---------------------------------------------------------------------------
// LayerNorm over the last axis

template <typename T>
class LayerNormT {
 public:
  LayerNormT(std::string name, int dim, T eps = T(1e-5))
      : params_(std::move(name)), dim_(dim), eps_(eps) {
    gamma_ = &params_.add("gamma", TensorT<T>({dim}, T(1)));
    beta_ = &params_.add("beta", TensorT<T>({dim}, T(0)));
  }

  LayerParamsT<T>& params() { return params_; }

  VarPtr<T> forward(const VarPtr<T>& x, GradTapeT<T>* tape) {
    const auto& xv = x->value;
    if (xv.rank() < 1 || xv.dim(xv.rank() - 1) != dim_)
      throw Error(params_.prefix() + ": last dim must be " + std::to_string(dim_) + ", got " +
                  xv.shape_str());
    const size_t rows = xv.size() / static_cast<size_t>(dim_);
    TensorT<T> out(xv.shape());
    auto xhat = std::make_shared<TensorT<T>>(xv.shape());
    auto inv_std = std::make_shared<std::vector<T>>(rows);
    for (size_t r = 0; r < rows; ++r) {
      const T* xr = xv.data() + r * dim_;
      T mu = T(0);
      for (int i = 0; i < dim_; ++i) mu += xr[i];
      mu /= static_cast<T>(dim_);
      T var = T(0);
      for (int i = 0; i < dim_; ++i) {
        const T d = xr[i] - mu;
        var += d * d;
      }
      var /= static_cast<T>(dim_);
      const T istd = T(1) / std::sqrt(var + eps_);
      (*inv_std)[r] = istd;
      for (int i = 0; i < dim_; ++i) {
        const T xh = (xr[i] - mu) * istd;
        xhat->data()[r * dim_ + i] = xh;
        out.data()[r * dim_ + i] = gamma_->value.data()[i] * xh + beta_->value.data()[i];
      }
    }
    auto y = make_var(std::move(out));
    if (tape) {
      x->ensure_grad();
      y->ensure_grad();
      ArraySlotT<T>* g = gamma_;
      ArraySlotT<T>* b = beta_;
      const int d = dim_;
      tape->record([x, y, g, b, xhat, inv_std, rows, d]() {
        for (size_t r = 0; r < rows; ++r) {
          const T* dy = y->grad.data() + r * d;
          const T* xh = xhat->data() + r * d;
          T sum_dyg = T(0), sum_dyg_xh = T(0);
          for (int i = 0; i < d; ++i) {
            const T dyg = dy[i] * g->value.data()[i];
            sum_dyg += dyg;
            sum_dyg_xh += dyg * xh[i];
            g->grad.data()[i] += dy[i] * xh[i];
            b->grad.data()[i] += dy[i];
          }
          const T inv_d = T(1) / static_cast<T>(d);
          for (int i = 0; i < d; ++i) {
            const T dyg = dy[i] * g->value.data()[i];
            x->grad.data()[r * d + i] +=
                (*inv_std)[r] * (dyg - inv_d * sum_dyg - inv_d * xh[i] * sum_dyg_xh);
          }
        }
      });
    }
    return y;
  }

 private:
  LayerParamsT<T> params_;
  ArraySlotT<T>* gamma_;
  ArraySlotT<T>* beta_;
  int dim_;
  T eps_;
};

// ---------------------------------------------------------------------------
// Conv1d over time ('valid'), input [N,T,D] -> [N,T-width+1,filters]

template <typename T>
class Conv1dT {
 public:
  Conv1dT(std::string name, int width, int din, int filters)
      : params_(std::move(name)), width_(width), din_(din), filters_(filters) {
    weight_ = &params_.add("weight", TensorT<T>({width, din, filters}, T(0)));
    bias_ = &params_.add("bias", TensorT<T>({filters}, T(0)));
  }

  void init(Rng& rng) { he_uniform_fill(weight_->value, width_ * din_, rng); }

  LayerParamsT<T>& params() { return params_; }
  int width() const { return width_; }

  VarPtr<T> forward(const VarPtr<T>& x, GradTapeT<T>* tape) {
    const auto& xv = x->value;
    if (xv.rank() != 3 || xv.dim(2) != din_)
      throw Error(params_.prefix() + ": expected [N,T," + std::to_string(din_) + "], got " +
                  xv.shape_str());
    const int n = xv.dim(0), t = xv.dim(1);
    if (t < width_)
      throw Error(params_.prefix() + ": sequence length " + std::to_string(t) +
                  " shorter than filter width " + std::to_string(width_));
    const int ot = t - width_ + 1;
    const int patch = width_ * din_;
    TensorT<T> out({n, ot, filters_});
    // Each window is contiguous in [T,D]; copy the overlapping rows into a
    // dense col matrix so the GEMM sees a plain [ot, patch] operand.
    std::vector<T> col(static_cast<size_t>(ot) * patch);
    for (int s = 0; s < n; ++s) {
      const T* xs = xv.data() + static_cast<size_t>(s) * t * din_;
      for (int r = 0; r < ot; ++r)
        std::copy(xs + static_cast<size_t>(r) * din_, xs + static_cast<size_t>(r) * din_ + patch,
                  col.data() + static_cast<size_t>(r) * patch);
      T* dst = out.data() + static_cast<size_t>(s) * ot * filters_;
      gemm(false, false, ot, filters_, patch, T(1), col.data(), patch, weight_->value.data(),
           filters_, T(0), dst, filters_);
      for (int r = 0; r < ot; ++r)
        for (int f = 0; f < filters_; ++f) dst[static_cast<size_t>(r) * filters_ + f] += bias_->value.data()[f];
    }
    auto y = make_var(std::move(out));
    if (tape) {
      x->ensure_grad();
      y->ensure_grad();
      ArraySlotT<T>* w = weight_;
      ArraySlotT<T>* b = bias_;
      const int din = din_, filters = filters_, patch_sz = patch;
      tape->record([x, y, w, b, n, t, ot, din, filters, patch_sz]() {
        std::vector<T> col(static_cast<size_t>(ot) * patch_sz);
        std::vector<T> dcol(col.size());
        for (int s = 0; s < n; ++s) {
          const T* xs = x->value.data() + static_cast<size_t>(s) * t * din;
          for (int r = 0; r < ot; ++r)
            std::copy(xs + static_cast<size_t>(r) * din, xs + static_cast<size_t>(r) * din + patch_sz,
                      col.data() + static_cast<size_t>(r) * patch_sz);
          const T* dy = y->grad.data() + static_cast<size_t>(s) * ot * filters;
          gemm(true, false, patch_sz, filters, ot, T(1), col.data(), patch_sz, dy, filters, T(1),
               w->grad.data(), filters);
          for (int r = 0; r < ot; ++r)
            for (int f = 0; f < filters; ++f) b->grad.data()[f] += dy[static_cast<size_t>(r) * filters + f];
          gemm(false, true, ot, patch_sz, filters, T(1), dy, filters, w->value.data(), filters, T(0),
               dcol.data(), patch_sz);
          T* dx = x->grad.data() + static_cast<size_t>(s) * t * din;
          for (int r = 0; r < ot; ++r)
            for (int i = 0; i < patch_sz; ++i)
              dx[static_cast<size_t>(r) * din + i] += dcol[static_cast<size_t>(r) * patch_sz + i];
        }
      });
    }
    return y;
  }

 private:
  LayerParamsT<T> params_;
  ArraySlotT<T>* weight_;
  ArraySlotT<T>* bias_;
  int width_, din_, filters_;
};

// Max over the time axis: [N,T,F] -> [N,F]; ties keep the earliest frame.
template <typename T>
VarPtr<T> max_over_time(const VarPtr<T>& x, GradTapeT<T>* tape) {
  const auto& xv = x->value;
  if (xv.rank() != 3) throw Error("max_over_time: expected [N,T,F], got " + xv.shape_str());
  const int n = xv.dim(0), t = xv.dim(1), f = xv.dim(2);
  TensorT<T> out({n, f});
  auto arg = std::make_shared<std::vector<int32_t>>(static_cast<size_t>(n) * f);
  for (int s = 0; s < n; ++s)
    for (int c = 0; c < f; ++c) {
      T best = xv.at3(s, 0, c);
      int32_t bi = 0;
      for (int i = 1; i < t; ++i) {
        const T v = xv.at3(s, i, c);
        if (v > best) {
          best = v;
          bi = i;
        }
      }
      out.data()[static_cast<size_t>(s) * f + c] = best;
      (*arg)[static_cast<size_t>(s) * f + c] = bi;
    }
  auto y = make_var(std::move(out));
  if (tape) {
    x->ensure_grad();
    y->ensure_grad();
    tape->record([x, y, arg, n, t, f]() {
      for (int s = 0; s < n; ++s)
        for (int c = 0; c < f; ++c) {
          const int i = (*arg)[static_cast<size_t>(s) * f + c];
          x->grad.data()[(static_cast<size_t>(s) * t + i) * f + c] +=
              y->grad.data()[static_cast<size_t>(s) * f + c];
        }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Embedding lookup. Ids are row indices; pad_id (if >= 0) stays frozen at its
// initial value by skipping its gradient.

template <typename T>
class EmbeddingT {
 public:
  EmbeddingT(std::string name, int vocab, int dim, int pad_id = -1)
      : params_(std::move(name)), vocab_(vocab), dim_(dim), pad_id_(pad_id) {
    weight_ = &params_.add("weight", TensorT<T>({vocab, dim}, T(0)));
  }

  LayerParamsT<T>& params() { return params_; }
  TensorT<T>& table() { return weight_->value; }
  int dim() const { return dim_; }
  int vocab() const { return vocab_; }

  // ids: [n, s] row-major.
  VarPtr<T> forward(const std::vector<int>& ids, int n, int s, GradTapeT<T>* tape) {
    if (static_cast<size_t>(n) * s != ids.size()) throw Error(params_.prefix() + ": id count mismatch");
    TensorT<T> out({n, s, dim_});
    for (size_t p = 0; p < ids.size(); ++p) {
      const int id = ids[p];
      if (id < 0 || id >= vocab_)
        throw Error(params_.prefix() + ": id " + std::to_string(id) + " out of range [0," +
                    std::to_string(vocab_) + ")");
      const T* src = weight_->value.data() + static_cast<size_t>(id) * dim_;
      T* dst = out.data() + p * dim_;
      for (int i = 0; i < dim_; ++i) dst[i] = src[i];
    }
    auto y = make_var(std::move(out));
    if (tape) {
      y->ensure_grad();
      ArraySlotT<T>* w = weight_;
      const int dim = dim_, pad = pad_id_;
      auto ids_copy = std::make_shared<std::vector<int>>(ids);
      tape->record([y, w, ids_copy, dim, pad]() {
        for (size_t p = 0; p < ids_copy->size(); ++p) {
          const int id = (*ids_copy)[p];
          if (id == pad) continue;
          T* dst = w->grad.data() + static_cast<size_t>(id) * dim;
          const T* src = y->grad.data() + p * dim;
          for (int i = 0; i < dim; ++i) dst[i] += src[i];
        }
      });
    }
    return y;
  }

 private:
  LayerParamsT<T> params_;
  ArraySlotT<T>* weight_;
  int vocab_, dim_, pad_id_;
};

// ---------------------------------------------------------------------------
// Scaled dot-product multi-head self-attention with an additive key mask.
// mask[n,s] = 1 keeps the position, 0 pushes its score to -1e9 before softmax.

template <typename T>
class MultiHeadAttentionT {
 public:
  MultiHeadAttentionT(const std::string& name, int dim, int heads)
      : wq_(name + "/wq", dim, dim),
        wk_(name + "/wk", dim, dim),
        wv_(name + "/wv", dim, dim),
        wo_(name + "/wo", dim, dim),
        dim_(dim),
        heads_(heads) {
    if (dim % heads != 0) throw Error(name + ": dim must be divisible by heads");
  }

  void init(Rng& rng) {
    wq_.init(rng);
    wk_.init(rng);
    wv_.init(rng);
    wo_.init(rng);
  }

  std::vector<LayerParamsT<T>*> param_sets() {
    return {&wq_.params(), &wk_.params(), &wv_.params(), &wo_.params()};
  }

  VarPtr<T> forward(const VarPtr<T>& x, const TensorT<T>& mask, GradTapeT<T>* tape) {
    const auto& xv = x->value;
    if (xv.rank() != 3 || xv.dim(2) != dim_)
      throw Error("attention: expected [N,S," + std::to_string(dim_) + "], got " + xv.shape_str());
    const int n = xv.dim(0), s = xv.dim(1);
    if (mask.rank() != 2 || mask.dim(0) != n || mask.dim(1) != s)
      throw Error("attention: mask shape mismatch");
    auto q = wq_.forward(x, tape);
    auto k = wk_.forward(x, tape);
    auto v = wv_.forward(x, tape);
    auto ctx = attend(q, k, v, mask, n, s, tape);
    return wo_.forward(ctx, tape);
  }

  // Attention probabilities of the last forward, [N,H,S,S]. Inference aid.
  const TensorT<T>& last_probs() const { return last_probs_; }

 private:
  VarPtr<T> attend(const VarPtr<T>& q, const VarPtr<T>& k, const VarPtr<T>& v, const TensorT<T>& mask,
                   int n, int s, GradTapeT<T>* tape) {
    const int h = heads_, dh = dim_ / heads_;
    const T scale = T(1) / static_cast<T>(std::sqrt(static_cast<double>(dh)));
    auto probs = std::make_shared<TensorT<T>>(std::vector<int>{n, h, s, s});
    TensorT<T> out({n, s, dim_});
    // Head slices are strided views of [N,S,dim]; gather into dense buffers
    // per (sample, head) so the small GEMMs stay simple.
    std::vector<T> qh(static_cast<size_t>(s) * dh), kh(qh.size()), vh(qh.size()), ch(qh.size());
    std::vector<T> sc(static_cast<size_t>(s) * s);
    for (int b = 0; b < n; ++b)
      for (int head = 0; head < h; ++head) {
        gather_head(q->value, b, head, dh, qh.data());
        gather_head(k->value, b, head, dh, kh.data());
        gather_head(v->value, b, head, dh, vh.data());
        gemm(false, true, s, s, dh, scale, qh.data(), dh, kh.data(), dh, T(0), sc.data(), s);
        T* p = probs->data() + ((static_cast<size_t>(b) * h + head) * s) * s;
        for (int i = 0; i < s; ++i) {
          T mx = -std::numeric_limits<T>::infinity();
          for (int j = 0; j < s; ++j) {
            if (mask.data()[b * s + j] == T(0)) sc[static_cast<size_t>(i) * s + j] = T(-1e9);
            mx = std::max(mx, sc[static_cast<size_t>(i) * s + j]);
          }
          T sum = T(0);
          for (int j = 0; j < s; ++j) {
            const T e = std::exp(sc[static_cast<size_t>(i) * s + j] - mx);
            p[static_cast<size_t>(i) * s + j] = e;
            sum += e;
          }
          for (int j = 0; j < s; ++j) p[static_cast<size_t>(i) * s + j] /= sum;
        }
        gemm(false, false, s, dh, s, T(1), p, s, vh.data(), dh, T(0), ch.data(), dh);
        scatter_head(ch.data(), b, head, dh, out);
      }
    last_probs_ = *probs;
    auto y = make_var(std::move(out));
    if (tape) {
      q->ensure_grad();
      k->ensure_grad();
      v->ensure_grad();
      y->ensure_grad();
      const int dim = dim_;
      tape->record([q, k, v, y, probs, n, s, h, dh, dim, scale]() {
        std::vector<T> qh(static_cast<size_t>(s) * dh), kh(qh.size()), vh(qh.size());
        std::vector<T> dyh(qh.size()), dqh(qh.size()), dkh(qh.size()), dvh(qh.size());
        std::vector<T> dp(static_cast<size_t>(s) * s), ds(dp.size());
        for (int b = 0; b < n; ++b)
          for (int head = 0; head < h; ++head) {
            gather_head_from(q->value, b, head, dh, dim, qh.data());
            gather_head_from(k->value, b, head, dh, dim, kh.data());
            gather_head_from(v->value, b, head, dh, dim, vh.data());
            gather_head_from(y->grad, b, head, dh, dim, dyh.data());
            const T* p = probs->data() + ((static_cast<size_t>(b) * h + head) * s) * s;
            // dV = P^T dY ; dP = dY V^T ; dS = P*(dP - rowdot) ; dQ = dS K*scale ; dK = dS^T Q*scale
            gemm(true, false, s, dh, s, T(1), p, s, dyh.data(), dh, T(0), dvh.data(), dh);
            gemm(false, true, s, s, dh, T(1), dyh.data(), dh, vh.data(), dh, T(0), dp.data(), s);
            for (int i = 0; i < s; ++i) {
              T dot = T(0);
              for (int j = 0; j < s; ++j)
                dot += dp[static_cast<size_t>(i) * s + j] * p[static_cast<size_t>(i) * s + j];
              for (int j = 0; j < s; ++j)
                ds[static_cast<size_t>(i) * s + j] =
                    p[static_cast<size_t>(i) * s + j] * (dp[static_cast<size_t>(i) * s + j] - dot);
            }
            gemm(false, false, s, dh, s, scale, ds.data(), s, kh.data(), dh, T(0), dqh.data(), dh);
            gemm(true, false, s, dh, s, scale, ds.data(), s, qh.data(), dh, T(0), dkh.data(), dh);
            scatter_head_add(dqh.data(), b, head, dh, dim, q->grad);
            scatter_head_add(dkh.data(), b, head, dh, dim, k->grad);
            scatter_head_add(dvh.data(), b, head, dh, dim, v->grad);
          }
      });
    }
    return y;
  }

  void gather_head(const TensorT<T>& x, int b, int head, int dh, T* dst) const {
    gather_head_from(x, b, head, dh, dim_, dst);
  }

  static void gather_head_from(const TensorT<T>& x, int b, int head, int dh, int dim, T* dst) {
    const int s = x.dim(1);
    for (int i = 0; i < s; ++i) {
      const T* src = x.data() + (static_cast<size_t>(b) * s + i) * dim + static_cast<size_t>(head) * dh;
      for (int j = 0; j < dh; ++j) dst[static_cast<size_t>(i) * dh + j] = src[j];
    }
  }

  void scatter_head(const T* src, int b, int head, int dh, TensorT<T>& out) const {
    const int s = out.dim(1);
    for (int i = 0; i < s; ++i) {
      T* dst = out.data() + (static_cast<size_t>(b) * s + i) * dim_ + static_cast<size_t>(head) * dh;
      for (int j = 0; j < dh; ++j) dst[j] = src[static_cast<size_t>(i) * dh + j];
    }
  }

  static void scatter_head_add(const T* src, int b, int head, int dh, int dim, TensorT<T>& out) {
    const int s = out.dim(1);
    for (int i = 0; i < s; ++i) {
      T* dst = out.data() + (static_cast<size_t>(b) * s + i) * dim + static_cast<size_t>(head) * dh;
      for (int j = 0; j < dh; ++j) dst[j] += src[static_cast<size_t>(i) * dh + j];
    }
  }

  DenseT<T> wq_, wk_, wv_, wo_;
  int dim_, heads_;
  TensorT<T> last_probs_;
};

// ---------------------------------------------------------------------------
// Fused losses: compute the scalar and seed input gradients in one step.

// Two-class softmax cross-entropy on logits [N,2] with integer labels.
// Returns mean loss; adds (softmax - onehot)/N to logits->grad.
template <typename T>
T softmax_xent2_backward(const VarPtr<T>& logits, const std::vector<int>& labels) {
  const auto& z = logits->value;
  if (z.rank() != 2 || z.dim(1) != 2) throw Error("softmax_xent2: expected [N,2] logits");
  const int n = z.dim(0);
  if (static_cast<size_t>(n) != labels.size()) throw Error("softmax_xent2: label count mismatch");
  logits->ensure_grad();
  TensorT<T> p = softmax_last(z);
  double loss = 0.0;
  const double eps = 1e-12;
  for (int i = 0; i < n; ++i) {
    const int t = labels[i];
    if (t != 0 && t != 1) throw Error("softmax_xent2: label must be 0 or 1");
    loss += -std::log(std::max(static_cast<double>(p.data()[i * 2 + t]), eps));
    for (int c = 0; c < 2; ++c)
      logits->grad.data()[i * 2 + c] +=
          (p.data()[i * 2 + c] - (c == t ? T(1) : T(0))) / static_cast<T>(n);
  }
  return static_cast<T>(loss / n);
}

// Mean BCE on sigmoid outputs; expects `pred` produced by sigmoid(z) so the
// caller seeds the probability gradient here and the tape handles the rest.
template <typename T>
T bce_backward(const VarPtr<T>& pred, const TensorT<T>& target, T eps = T(1e-7)) {
  const T loss = bce_loss(pred->value, target, eps);
  pred->ensure_grad();
  const size_t n = pred->value.size();
  for (size_t i = 0; i < n; ++i) {
    const T p = std::min(std::max(pred->value.data()[i], eps), T(1) - eps);
    const T t = target.data()[i];
    pred->grad.data()[i] += (p - t) / (p * (T(1) - p)) / static_cast<T>(n);
  }
  return loss;
}

using ArraySlot = ArraySlotT<float>;
using LayerParams = LayerParamsT<float>;
using GradTape = GradTapeT<float>;
using Var = VarT<float>;

}  // namespace adscreen
