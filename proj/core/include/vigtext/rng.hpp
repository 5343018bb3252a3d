#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace vigtext {

// Portable seeded generator. std::mt19937_64's output sequence is fixed by
// the standard; the std distributions are not, so every conversion to
// floats or bounded integers happens here with a documented formula.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  // 53 high bits scaled to [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Box-Muller, one value per call.
  double normal();
  // Uniform integer in [0, n) by rejection; n > 0.
  std::uint64_t below(std::uint64_t n);
  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);
// Independent stream seed for a named purpose.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream);
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace vigtext
