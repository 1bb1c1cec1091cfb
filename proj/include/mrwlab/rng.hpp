#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>

namespace mrwlab {

// SplitMix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Seed of replicate `index` under top-level `seed`. Depends only on the pair,
// never on which worker runs the replicate.
constexpr std::uint64_t stream_seed(std::uint64_t seed,
                                    std::uint64_t index) noexcept {
  return splitmix64(splitmix64(seed) ^ splitmix64(index + 0x632BE59BD9B4E019ULL));
}

// Thin wrapper over mt19937_64. Uniform variates are produced from the raw
// 64-bit output directly so sequences do not depend on the standard
// library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // Uniform on (0, 1].
  double uniform_pos() { return 1.0 - uniform(); }

 private:
  std::mt19937_64 engine_;
};

// Number of worker threads for replicate loops. Read from MRWLAB_WORKERS;
// defaults to 1. Never affects results.
std::size_t worker_count();

// Runs body(r) for r in [0, n) over worker_count() threads. Each index runs
// exactly once; callers store per-index results and reduce in index order.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace mrwlab
