#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace embkit {

// splitmix64 finalizer; used to derive independent seeds from a base seed.
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline uint64_t derive_seed(uint64_t base, uint64_t tag) {
  return splitmix64(base ^ splitmix64(tag));
}

inline uint64_t derive_seed(uint64_t base, uint64_t tag_a, uint64_t tag_b) {
  return derive_seed(derive_seed(base, tag_a), tag_b);
}

inline uint64_t derive_seed(uint64_t base, uint64_t a, uint64_t b, uint64_t c) {
  return derive_seed(derive_seed(base, a, b), c);
}

// Deterministic RNG. mt19937_64 output is pinned by the standard; the
// bounded / unit / shuffle helpers are hand-rolled because the std
// distributions are implementation-defined and would break cross-platform
// replay of seeded draws.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next() { return engine_(); }

  // Unbiased integer in [0, n) via rejection sampling.
  uint64_t below(uint64_t n) {
    if (n == 0) return 0;
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t r;
    do {
      r = next();
    } while (r >= limit);
    return r % n;
  }

  // Uniform double in [0, 1) with 53 random bits.
  double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  // k distinct indices drawn uniformly from [0, n), in draw order
  // (partial Fisher-Yates).
  std::vector<size_t> distinct(size_t n, size_t k);

 private:
  std::mt19937_64 engine_;
};

inline std::vector<size_t> Rng::distinct(size_t n, size_t k) {
  std::vector<size_t> pool(n);
  for (size_t i = 0; i < n; ++i) pool[i] = i;
  if (k > n) k = n;
  std::vector<size_t> out;
  out.reserve(k);
  for (size_t i = 0; i < k; ++i) {
    const size_t j = i + static_cast<size_t>(below(n - i));
    std::swap(pool[i], pool[j]);
    out.push_back(pool[i]);
  }
  return out;
}

}  // namespace embkit
