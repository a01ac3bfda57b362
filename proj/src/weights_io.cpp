#include "adscreen/weights_io.hpp"

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "adscreen/error.hpp"

namespace adscreen {
namespace {

// Payloads are written as raw f32 little-endian. On a big-endian host the
// bytes would need swapping; all supported targets are little-endian, so
// refuse loudly instead of silently corrupting weights.
void require_little_endian() {
  const uint32_t probe = 1;
  unsigned char b;
  std::memcpy(&b, &probe, 1);
  if (b != 1) throw Error("weight container: big-endian hosts are not supported");
}

}  // namespace

void WeightFile::put(const std::string& name, const std::vector<int>& shape, const float* data) {
  if (name.empty() || name.find_first_of(" \t\r\n") != std::string::npos)
    throw Error("weight container: invalid array name '" + name + "'");
  if (index_.count(name)) throw Error("weight container: duplicate array '" + name + "'");
  WeightEntry e;
  e.name = name;
  e.shape = shape;
  size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw Error("weight container: non-positive extent in '" + name + "'");
    n *= static_cast<size_t>(d);
  }
  e.values.assign(data, data + n);
  index_[name] = entries_.size();
  entries_.push_back(std::move(e));
}

bool WeightFile::contains(const std::string& name) const { return index_.count(name) != 0; }

const WeightEntry& WeightFile::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("weight container: missing array '" + name + "'");
  return entries_[it->second];
}

void WeightFile::save(const std::string& path) const {
  require_little_endian();
  std::ostringstream header;
  header << "ADSWEIGHTS 1\n";
  header << "arrays " << entries_.size() << "\n";
  size_t offset = 0;
  for (const auto& e : entries_) {
    const size_t bytes = e.values.size() * sizeof(float);
    header << "array " << e.name << " dtype f32 shape";
    for (int d : e.shape) header << " " << d;
    header << " offset " << offset << " size " << bytes << "\n";
    offset += bytes;
  }
  header << "data " << offset << "\n";
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("weight container: cannot open '" + path + "' for writing");
  const std::string h = header.str();
  out.write(h.data(), static_cast<std::streamsize>(h.size()));
  for (const auto& e : entries_)
    out.write(reinterpret_cast<const char*>(e.values.data()),
              static_cast<std::streamsize>(e.values.size() * sizeof(float)));
  if (!out) throw Error("weight container: write failed for '" + path + "'");
}

WeightFile WeightFile::load(const std::string& path) {
  require_little_endian();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("weight container: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line != "ADSWEIGHTS 1")
    throw Error("weight container: '" + path + "' has no ADSWEIGHTS 1 header");
  size_t count = 0;
  {
    if (!std::getline(in, line)) throw Error("weight container: truncated header in '" + path + "'");
    std::istringstream ls(line);
    std::string kw;
    if (!(ls >> kw >> count) || kw != "arrays")
      throw Error("weight container: bad arrays line in '" + path + "'");
  }
  struct Pending {
    WeightEntry entry;
    size_t offset = 0, bytes = 0;
  };
  std::vector<Pending> pending;
  pending.reserve(count);
  for (size_t i = 0; i < count; ++i) {
    if (!std::getline(in, line)) throw Error("weight container: truncated header in '" + path + "'");
    std::istringstream ls(line);
    std::string kw, name, kshape, kdtype, dtype;
    if (!(ls >> kw >> name >> kdtype >> dtype >> kshape) || kw != "array" || kdtype != "dtype" ||
        kshape != "shape")
      throw Error("weight container: bad array line '" + line + "'");
    if (dtype != "f32") throw Error("weight container: unsupported dtype '" + dtype + "' in '" + name + "'");
    Pending p;
    p.entry.name = name;
    std::string tok;
    size_t n = 1;
    while (ls >> tok) {
      if (tok == "offset") break;
      const int d = std::stoi(tok);
      if (d <= 0) throw Error("weight container: non-positive extent in '" + name + "'");
      p.entry.shape.push_back(d);
      n *= static_cast<size_t>(d);
    }
    std::string ksize;
    if (tok != "offset" || !(ls >> p.offset >> ksize >> p.bytes) || ksize != "size")
      throw Error("weight container: bad array line '" + line + "'");
    if (p.bytes != n * sizeof(float))
      throw Error("weight container: size/shape mismatch for '" + name + "'");
    pending.push_back(std::move(p));
  }
  size_t payload = 0;
  {
    if (!std::getline(in, line)) throw Error("weight container: missing data line in '" + path + "'");
    std::istringstream ls(line);
    std::string kw;
    if (!(ls >> kw >> payload) || kw != "data")
      throw Error("weight container: bad data line in '" + path + "'");
  }
  std::vector<char> raw(payload);
  if (payload > 0) {
    in.read(raw.data(), static_cast<std::streamsize>(payload));
    if (static_cast<size_t>(in.gcount()) != payload)
      throw Error("weight container: payload truncated in '" + path + "'");
  }
  WeightFile wf;
  for (auto& p : pending) {
    if (p.offset + p.bytes > payload)
      throw Error("weight container: array '" + p.entry.name + "' extends past payload");
    p.entry.values.resize(p.bytes / sizeof(float));
    std::memcpy(p.entry.values.data(), raw.data() + p.offset, p.bytes);
    if (wf.index_.count(p.entry.name))
      throw Error("weight container: duplicate array '" + p.entry.name + "'");
    wf.index_[p.entry.name] = wf.entries_.size();
    wf.entries_.push_back(std::move(p.entry));
  }
  return wf;
}

void collect_params(const std::vector<LayerParams*>& params, WeightFile& out) {
  for (auto* set : params)
    for (size_t i = 0; i < set->count(); ++i) {
      const auto& slot = set->slot(i);
      out.put(slot.name, slot.value.shape(), slot.value.data());
    }
}

void assign_params(const WeightFile& file, const std::vector<LayerParams*>& params) {
  std::vector<std::string> problems;
  size_t expected = 0;
  for (auto* set : params)
    for (size_t i = 0; i < set->count(); ++i) {
      auto& slot = set->slot(i);
      ++expected;
      if (!file.contains(slot.name)) {
        problems.push_back("missing " + slot.name);
        continue;
      }
      const auto& e = file.get(slot.name);
      if (e.shape != slot.value.shape()) {
        problems.push_back("shape mismatch " + slot.name);
        continue;
      }
      std::copy(e.values.begin(), e.values.end(), slot.value.data());
    }
  if (file.entries().size() != expected) {
    for (const auto& e : file.entries()) {
      bool known = false;
      for (auto* set : params)
        for (size_t i = 0; i < set->count() && !known; ++i) known = set->slot(i).name == e.name;
      if (!known) problems.push_back("unexpected " + e.name);
    }
  }
  if (!problems.empty()) {
    std::string msg = "weight container does not match model:";
    for (const auto& p : problems) msg += " [" + p + "]";
    throw Error(msg);
  }
}

}  // namespace adscreen
