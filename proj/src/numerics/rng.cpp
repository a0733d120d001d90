#include "sinessl/numerics/rng.hpp"

#include "sinessl/errors.hpp"

namespace sinessl {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace

Rng::Rng(std::uint64_t master_seed, std::uint64_t stream_id) : engine_(make_engine(master_seed, stream_id)) {}

double Rng::uniform() { return unit_(engine_); }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * unit_(engine_); }

double Rng::normal() { return normal_(engine_); }

std::size_t Rng::index(std::size_t n) {
  if (n == 0) throw ContractError("Rng::index needs n > 0");
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
}

long Rng::integer(long lo, long hi) {
  if (hi < lo) throw ContractError("Rng::integer needs lo <= hi");
  return std::uniform_int_distribution<long>(lo, hi)(engine_);
}

std::uint64_t stream_key(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return splitmix64(splitmix64(splitmix64(a) ^ b) ^ c);
}

}  // namespace sinessl
