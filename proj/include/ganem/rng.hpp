#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace ganem {

// Deterministic PRNG with named substreams. Raw mt19937_64 output is fully
// specified by the standard; all value transforms below are explicit (no
// std::*_distribution), so draws are bit-identical across platforms and
// standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  // Independent stream derived from this stream's seed and a label.
  // Substreams of the same parent with different names never collide in
  // practice; drawing from the parent does not perturb its substreams.
  Rng substream(std::string_view name) const;

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller (cosine branch).
  double normal();

  double normal(double mean, double sd) { return mean + sd * normal(); }

  // Uniform integer in [0, n). n must be positive.
  int uniform_int(int n);

  // Index drawn from an (approximately normalized) probability vector.
  int categorical(std::span<const double> probs);

  // Fisher-Yates shuffle.
  template <class T>
  void shuffle(std::vector<T>& items) {
    for (int i = static_cast<int>(items.size()) - 1; i > 0; --i) {
      std::swap(items[i], items[uniform_int(i + 1)]);
    }
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace ganem
