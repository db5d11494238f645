#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "gf/param_store.hpp"

namespace gf {

// Parameter checkpoint container. Layout:
//   magic "GFCK" | u32 version | u32 param count
//   per parameter: u32 name length | name bytes | u8 dtype (0=f32, 1=f64)
//                  | u32 rank | u64 extents... | raw little-endian scalars
// Round-trips bit-exactly.

namespace detail {

inline void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(char(uint8_t(v >> (8 * i))));
}
inline void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(char(uint8_t(v >> (8 * i))));
}

struct ByteReader {
  const uint8_t* p;
  size_t n, pos = 0;
  void need(size_t k) const {
    if (pos + k > n) throw std::runtime_error("checkpoint: truncated file");
  }
  uint8_t u8() {
    need(1);
    return p[pos++];
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t(p[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(p[pos + i]) << (8 * i);
    pos += 8;
    return v;
  }
  std::string str(size_t k) {
    need(k);
    std::string s(reinterpret_cast<const char*>(p + pos), k);
    pos += k;
    return s;
  }
};

template <class S>
constexpr uint8_t dtype_tag() {
  return sizeof(S) == 4 ? 0 : 1;
}

}  // namespace detail

template <class S>
void save_checkpoint(const std::string& path, const ParamStore<S>& store) {
  static_assert(sizeof(S) == 4 || sizeof(S) == 8);
  std::string out;
  out += "GFCK";
  detail::put_u32(out, 1u);
  detail::put_u32(out, uint32_t(store.entries.size()));
  for (const auto& [name, e] : store.entries) {
    detail::put_u32(out, uint32_t(name.size()));
    out += name;
    out.push_back(char(detail::dtype_tag<S>()));
    detail::put_u32(out, uint32_t(e.value.shape.size()));
    for (int d : e.value.shape) detail::put_u64(out, uint64_t(d));
    for (const S& v : e.value.data) {
      if constexpr (sizeof(S) == 4)
        detail::put_u32(out, std::bit_cast<uint32_t>(v));
      else
        detail::put_u64(out, std::bit_cast<uint64_t>(v));
    }
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  f.write(out.data(), std::streamsize(out.size()));
  if (!f) throw std::runtime_error("checkpoint: write failed for " + path);
}

// Loads into a fresh store: values from the file, moments zeroed, step 0.
template <class S>
ParamStore<S> load_checkpoint(const std::string& path) {
  static_assert(sizeof(S) == 4 || sizeof(S) == 8);
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open " + path);
  std::vector<uint8_t> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  detail::ByteReader r{buf.data(), buf.size()};
  if (r.str(4) != "GFCK") throw std::runtime_error("checkpoint: bad magic in " + path);
  const uint32_t version = r.u32();
  if (version != 1) throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  const uint32_t count = r.u32();
  ParamStore<S> store;
  for (uint32_t i = 0; i < count; ++i) {
    const std::string name = r.str(r.u32());
    const uint8_t tag = r.u8();
    if (tag != detail::dtype_tag<S>())
      throw std::runtime_error("checkpoint: dtype tag " + std::to_string(int(tag)) +
                               " does not match requested precision for " + name);
    const uint32_t rank = r.u32();
    std::vector<int> shape(rank);
    for (uint32_t d = 0; d < rank; ++d) shape[d] = int(r.u64());
    Tensor<S> t(shape);
    for (S& v : t.data) {
      if constexpr (sizeof(S) == 4)
        v = std::bit_cast<S>(r.u32());
      else
        v = std::bit_cast<S>(r.u64());
    }
    store.add(name, std::move(t));
  }
  return store;
}

}  // namespace gf
