#pragma once

#include <cstdint>
#include <random>

namespace srfloc {

// Seeded RNG wrapper. std::mt19937_64 output is fully specified by the
// standard; the distribution mapping below is hand-rolled because the
// std::*_distribution classes are implementation-defined and would break
// byte-stable artifacts across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Uniform integer in [0, n), n > 0. Rejection sampling, no modulo bias.
  std::uint64_t uniform_index(std::uint64_t n);

  // Uniform in [0, 1) with 53 bits of randomness.
  double uniform_double();

  double uniform_range(double lo, double hi);

  // Inclusive bounds.
  int uniform_int(int lo, int hi);

  // Zero-mean Gaussian via Box-Muller. One spare value is cached.
  double gaussian(double sigma);

  // Gaussian rejected until |x| <= max_abs. Requires max_abs > 0.
  double gaussian_truncated(double sigma, double max_abs);

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// splitmix64 step; used to derive independent stream seeds from a base seed.
std::uint64_t mix_seed(std::uint64_t base, std::uint64_t salt);

}  // namespace srfloc
