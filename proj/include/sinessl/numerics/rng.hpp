#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace sinessl {

/// Reproducible random stream identified by (master seed, stream id).
class Rng {
 public:
  Rng(std::uint64_t master_seed, std::uint64_t stream_id);

  double uniform();  // [0, 1)
  double uniform(double lo, double hi);
  double normal();
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);
  /// Uniform integer in [lo, hi], inclusive.
  long integer(long lo, long hi);
  bool bernoulli(double p) { return uniform() < p; }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> unit_{0.0, 1.0};
};

inline Rng seeded_rng(std::uint64_t master_seed, std::uint64_t stream_id) { return Rng(master_seed, stream_id); }

/// Mixes several identifiers into one stream id (splitmix64 finalizer chain).
std::uint64_t stream_key(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0);

}  // namespace sinessl
