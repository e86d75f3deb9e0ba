#pragma once

#include <cstdint>
#include <string_view>

namespace lanerl {

/// Deterministic 64-bit generator (splitmix64). The standard distributions
/// are implementation-defined, so uniform draws are spelled out here to keep
/// outputs bit-identical across compilers.
class Rng {
 public:
  Rng() : state_(0x9e3779b97f4a7c15ull) {}
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  /// Uniform integer in [lo, hi] inclusive.
  int uniform_int(int lo, int hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(next_u64() % span);
  }

  bool bernoulli(double p) { return next_double() < p; }

  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
};

/// FNV-1a, used for stable content hashes (cache keys, config hashes).
inline std::uint64_t fnv1a(std::string_view s, std::uint64_t seed = 0xcbf29ce484222325ull) {
  std::uint64_t h = seed;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

/// Derives an independent seed stream from a master seed and a stream name.
/// One master seed fans out to scenario, network-init, sampler, and schedule
/// streams; the rule is fixed so runs are reproducible component by component.
inline std::uint64_t seed_stream(std::uint64_t master, std::string_view stream_name) {
  Rng mix(master ^ fnv1a(stream_name));
  return mix.next_u64();
}

/// Per-index substream (e.g. one seed per episode).
inline std::uint64_t seed_at(std::uint64_t stream_seed, std::uint64_t index) {
  Rng mix(stream_seed ^ (0x632be59bd9b4e019ull * (index + 1)));
  return mix.next_u64();
}

}  // namespace lanerl
