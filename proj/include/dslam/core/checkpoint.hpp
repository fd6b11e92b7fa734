#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>

#include "dslam/core/param_store.hpp"
#include "dslam/core/tensor.hpp"

namespace dslam {

// Named-tensor container: magic "DSCK", one version byte, then per entry a
// name, a shape header, and little-endian 64-bit float data.
namespace ckpt {

constexpr char kMagic[4] = {'D', 'S', 'C', 'K'};
constexpr uint8_t kVersion = 1;

inline void write_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {(unsigned char)(v), (unsigned char)(v >> 8), (unsigned char)(v >> 16),
                        (unsigned char)(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return uint32_t(b[0]) | (uint32_t(b[1]) << 8) | (uint32_t(b[2]) << 16) | (uint32_t(b[3]) << 24);
}

inline void write_f64(std::ostream& os, const double* p, size_t n) {
  for (size_t i = 0; i < n; ++i) {
    uint64_t bits;
    std::memcpy(&bits, &p[i], 8);
    unsigned char b[8];
    for (int k = 0; k < 8; ++k) b[k] = (unsigned char)(bits >> (8 * k));
    os.write(reinterpret_cast<const char*>(b), 8);
  }
}

inline void read_f64(std::istream& is, double* p, size_t n) {
  for (size_t i = 0; i < n; ++i) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    uint64_t bits = 0;
    for (int k = 0; k < 8; ++k) bits |= uint64_t(b[k]) << (8 * k);
    std::memcpy(&p[i], &bits, 8);
  }
}

}  // namespace ckpt

inline void save_checkpoint(const std::string& path, const std::map<std::string, Tensor>& tensors) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  os.write(ckpt::kMagic, 4);
  os.put(char(ckpt::kVersion));
  ckpt::write_u32(os, uint32_t(tensors.size()));
  for (const auto& [name, t] : tensors) {
    if (name.size() > 0xffff) throw std::invalid_argument("checkpoint name too long: " + name);
    ckpt::write_u32(os, uint32_t(name.size()));
    os.write(name.data(), std::streamsize(name.size()));
    os.put(char(t.ndim()));
    for (int i = 0; i < t.ndim(); ++i) ckpt::write_u32(os, uint32_t(t.dim(i)));
    ckpt::write_f64(os, t.data(), size_t(t.numel()));
  }
  if (!os) throw std::runtime_error("checkpoint write failed: " + path);
}

inline void save_checkpoint(const std::string& path, const ParamStore& store) {
  std::map<std::string, Tensor> tensors;
  for (const auto& [name, e] : store) tensors.emplace(name, e.value);
  save_checkpoint(path, tensors);
}

inline std::map<std::string, Tensor> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, ckpt::kMagic, 4) != 0)
    throw std::runtime_error("bad checkpoint magic in " + path);
  const int version = is.get();
  if (version != ckpt::kVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version) +
                             " in " + path + " (expected " + std::to_string(ckpt::kVersion) +
                             ")");
  const uint32_t count = ckpt::read_u32(is);
  std::map<std::string, Tensor> out;
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t name_len = ckpt::read_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), std::streamsize(name_len));
    const int ndim = is.get();
    if (ndim < 1 || ndim > 4) throw std::runtime_error("bad tensor rank in checkpoint " + path);
    Shape s;
    s.ndim = ndim;
    for (int k = 0; k < ndim; ++k) s.d[k] = int(ckpt::read_u32(is));
    Tensor t(s);
    ckpt::read_f64(is, t.data(), size_t(t.numel()));
    if (!is) throw std::runtime_error("truncated checkpoint: " + path);
    out.emplace(std::move(name), std::move(t));
  }
  return out;
}

// Load values for parameters that already exist in the store (shape-checked).
inline void load_checkpoint_into(const std::string& path, ParamStore& store) {
  store.restore(load_checkpoint(path));
}

}  // namespace dslam
