#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace pprec {

// splitmix64; used to derive independent child seeds from one root seed.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Deterministic child seed for a named component of a run.
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view tag) {
  std::uint64_t state = root ^ fnv1a64(tag);
  return splitmix64(state);
}

inline std::uint64_t derive_seed(std::uint64_t root, std::string_view tag, std::uint64_t index) {
  std::uint64_t state = root ^ fnv1a64(tag) ^ (0x9e3779b97f4a7c15ULL * (index + 1));
  return splitmix64(state);
}

// Thin wrapper so every consumer draws from the same engine type.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(gen_); }
  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(gen_);
  }
  double normal(double mean, double stddev) {
    return std::normal_distribution<double>(mean, stddev)(gen_);
  }
  // Uniform integer in [0, n).
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(gen_);
  }
  std::int64_t integer(std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(gen_);
  }
  bool bernoulli(double p) { return uniform() < p; }

  std::mt19937_64& engine() { return gen_; }

private:
  std::mt19937_64 gen_;
};

}  // namespace pprec
