#pragma once

#include <map>
#include <string>
#include <vector>

#include "adscreen/nn.hpp"
#include "adscreen/tensor.hpp"

namespace adscreen {

// Single-file weight container: a text header listing every array (name,
// dtype, shape, byte offset, byte size) followed by the raw little-endian
// payload. Round-trips bit-exactly.
//
//   ADSWEIGHTS 1
//   arrays <count>
//   array <name> dtype f32 shape <d0> <d1> ... offset <bytes> size <bytes>
//   ...
//   data <payload-bytes>
//   <raw payload>
struct WeightEntry {
  std::string name;
  std::vector<int> shape;
  std::vector<float> values;
};

class WeightFile {
 public:
  void put(const std::string& name, const std::vector<int>& shape, const float* data);
  void put(const std::string& name, const Tensor& t) { put(name, t.shape(), t.data()); }

  bool contains(const std::string& name) const;
  const WeightEntry& get(const std::string& name) const;  // throws if absent
  const std::vector<WeightEntry>& entries() const { return entries_; }

  void save(const std::string& path) const;
  static WeightFile load(const std::string& path);

 private:
  std::vector<WeightEntry> entries_;
  std::map<std::string, size_t> index_;
};

// Every slot of every layer (trainable or not) goes into the container.
void collect_params(const std::vector<LayerParams*>& params, WeightFile& out);

// Strict by name set: file and model must describe the same arrays with the
// same shapes; any difference throws listing the offending names.
void assign_params(const WeightFile& file, const std::vector<LayerParams*>& params);

}  // namespace adscreen
