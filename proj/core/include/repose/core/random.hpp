#pragma once

// Seeded RNG with hand-written transforms. std::mt19937_64 output is pinned
// by the standard, but the <random> distributions are implementation-defined,
// so uniform/normal/int draws are derived here to keep artifacts byte-stable
// across standard libraries.

#include <cstdint>
#include <random>

namespace repose::core {

class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed), seed_(seed) {}

  uint64_t raw() { return gen_(); }

  // Uniform in [0,1) with 53-bit resolution.
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n), unbiased via rejection.
  uint64_t uniform_int(uint64_t n);

  // Standard normal via Box-Muller; second draw is cached.
  double normal();

  // Derive an independent stream (e.g. one per subject / purpose).
  Rng fork(uint64_t stream_id) const;

  uint64_t seed() const { return seed_; }

 private:
  std::mt19937_64 gen_;
  uint64_t seed_ = 0;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace repose::core
