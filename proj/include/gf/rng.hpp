#pragma once

#include <cstdint>
#include <cmath>
#include <string_view>

namespace gf {

// SplitMix64. Every random draw in the project flows through this generator,
// never through std distributions, so identical seeds give identical results
// on every platform and compiler.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1)
  double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // inclusive bounds
  int64_t uniform_int(int64_t lo, int64_t hi) {
    uint64_t span = uint64_t(hi - lo) + 1;
    return lo + int64_t(next_u64() % span);
  }

  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = next_double();
    double u2 = next_double();
    if (u1 < 1e-300) u1 = 1e-300;
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

 private:
  uint64_t state_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// Derives an independent stream seed from a base seed and a named purpose
// ("split", "shuffle", "crop", ...) plus up to three indices. FNV-1a over the
// tag, then SplitMix64 finalization of the whole tuple.
inline uint64_t derive_seed(uint64_t base, std::string_view tag, uint64_t a = 0,
                            uint64_t b = 0, uint64_t c = 0) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (char ch : tag) {
    h ^= uint64_t(uint8_t(ch));
    h *= 0x100000001b3ull;
  }
  auto mix = [](uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  };
  uint64_t s = mix(base + 0x9e3779b97f4a7c15ull);
  s = mix(s ^ h);
  s = mix(s ^ (a + 0x9e3779b97f4a7c15ull));
  s = mix(s ^ (b + 0x632be59bd9b4e019ull));
  s = mix(s ^ (c + 0xd1b54a32d192ed03ull));
  return s;
}

}  // namespace gf
