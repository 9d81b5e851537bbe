#pragma once

#include <cstdint>
#include <random>

#include "sparsedm/tensor.hpp"

namespace sparsedm {

/// Independent random streams derived from one run seed. Adding a new stream
/// never changes the draws of the existing ones.
enum class Stream : std::uint32_t {
  init = 1,
  data = 2,
  noise = 3,
  teacher = 4,
  sample = 5,
  eval = 6,
  bench = 7,
};

/// Seeded generator used throughout: std::mt19937_64 seeded through
/// std::seed_seq{seed_lo, seed_hi, stream}. Uniform and normal variates are
/// produced by this class (not std:: distributions) so draws are identical
/// across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, Stream stream = Stream::init);

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  /// Uniform integer in [0, bound).
  std::uint64_t uniform_int(std::uint64_t bound);
  /// Standard normal via Box-Muller; pairs are cached.
  double normal();

  Tensor normal_tensor(Eigen::Index rows, Eigen::Index cols);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace sparsedm
