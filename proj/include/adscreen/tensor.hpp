#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "adscreen/error.hpp"

namespace adscreen {

// Dense n-dimensional array, row-major. The single carrier for features,
// activations, gradients and weights. f32 in production paths, f64 for
// gradient checks.
template <typename T>
class TensorT {
 public:
  TensorT() = default;

  explicit TensorT(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.assign(checked_size(shape_), T(0));
  }

  TensorT(std::vector<int> shape, T fill_value) : shape_(std::move(shape)) {
    data_.assign(checked_size(shape_), fill_value);
  }

  TensorT(std::vector<int> shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (checked_size(shape_) != data_.size()) {
      throw Error("tensor: shape " + shape_str() + " wants " + std::to_string(checked_size(shape_)) +
                  " values, got " + std::to_string(data_.size()));
    }
  }

  static TensorT full(std::vector<int> shape, T v) {
    TensorT t(std::move(shape));
    t.fill(v);
    return t;
  }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }

  T& operator[](size_t i) { return data_[i]; }
  const T& operator[](size_t i) const { return data_[i]; }

  // Convenience accessors for the common ranks.
  T& at2(int i, int j) { return data_[static_cast<size_t>(i) * shape_[1] + j]; }
  const T& at2(int i, int j) const { return data_[static_cast<size_t>(i) * shape_[1] + j]; }
  T& at3(int i, int j, int k) {
    return data_[(static_cast<size_t>(i) * shape_[1] + j) * shape_[2] + k];
  }
  const T& at3(int i, int j, int k) const {
    return data_[(static_cast<size_t>(i) * shape_[1] + j) * shape_[2] + k];
  }
  T& at4(int i, int j, int k, int l) {
    return data_[((static_cast<size_t>(i) * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
  }
  const T& at4(int i, int j, int k, int l) const {
    return data_[((static_cast<size_t>(i) * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
  void zero() { fill(T(0)); }

  bool same_shape(const TensorT& o) const { return shape_ == o.shape_; }

  TensorT reshaped(std::vector<int> shape) const {
    if (checked_size(shape) != data_.size()) {
      throw Error("tensor: reshape to incompatible size");
    }
    return TensorT(std::move(shape), data_);
  }

  bool all_finite() const {
    for (const T v : data_) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }

  template <typename U>
  TensorT<U> cast() const {
    std::vector<U> d(data_.size());
    for (size_t i = 0; i < data_.size(); ++i) d[i] = static_cast<U>(data_[i]);
    return TensorT<U>(shape_, std::move(d));
  }

  std::string shape_str() const {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
    os << "]";
    return os.str();
  }

  static size_t checked_size(const std::vector<int>& shape) {
    size_t n = 1;
    for (const int d : shape) {
      if (d <= 0) throw Error("tensor: non-positive extent in shape");
      n *= static_cast<size_t>(d);
    }
    return n;
  }

 private:
  std::vector<int> shape_;
  std::vector<T> data_;
};

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;

}  // namespace adscreen
