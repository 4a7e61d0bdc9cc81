#include "ganem/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace ganem {

namespace {

// FNV-1a over the parent seed and the stream name.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view name) {
  std::uint64_t h = 14695981039346656037ull ^ (seed * 0x9E3779B97F4A7C15ull);
  for (unsigned char c : name) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

Rng Rng::substream(std::string_view name) const {
  return Rng(derive_seed(seed_, name));
}

double Rng::normal() {
  // u1 in (0, 1] keeps the log finite.
  double u1 = 1.0 - uniform();
  double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

int Rng::uniform_int(int n) {
  if (n <= 0) throw std::invalid_argument("Rng::uniform_int: n must be positive");
  int v = static_cast<int>(uniform() * n);
  return v < n ? v : n - 1;
}

int Rng::categorical(std::span<const double> probs) {
  if (probs.empty()) throw std::invalid_argument("Rng::categorical: empty probability vector");
  double u = uniform();
  double cum = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    cum += probs[i];
    if (u < cum) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size()) - 1;
}

}  // namespace ganem
