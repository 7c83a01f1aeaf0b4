#pragma once

#include <cstdint>
#include <vector>

#include "ttd/tensor.hpp"

namespace ttd {

// Counter-based deterministic RNG: draw i of stream (seed, stream_id) is a
// pure function of (seed, stream_id, i).  No global state; every experiment
// owns its streams, so runs are bitwise reproducible.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
      : key_(mix(seed ^ mix(stream + 0x9E3779B97F4A7C15ull))), counter_(0) {}

  std::uint64_t next_u64() { return mix(key_ + (++counter_) * 0x9E3779B97F4A7C15ull); }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; consumes exactly two draws.
  double normal();

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

  Tensor normal_tensor(std::vector<std::int64_t> shape, double stddev = 1.0);
  Tensor uniform_tensor(std::vector<std::int64_t> shape, double lo, double hi);

  // Derived stream with an independent key; deterministic in (this, tag).
  Rng fork(std::uint64_t tag) const { return Rng(key_, 0x5851F42D4C957F2Dull ^ tag); }

  std::uint64_t counter() const { return counter_; }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  std::uint64_t key_;
  std::uint64_t counter_;
};

}  // namespace ttd
