#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace wcgan {

/// Stateless 64-bit mixer (splitmix64 finalizer). Used to derive independent
/// seeds from a parent seed so that adding a stream never perturbs another.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  return mix64(mix64(seed) ^ mix64(stream + 0x632BE59BD9B4E019ull));
}

// FNV-1a over the name, then mixed with the seed.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view name) noexcept;

/// Deterministic random stream. All randomness in the library flows through
/// one of these; there is no ambient entropy.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  double normal(double mean = 0.0, double stddev = 1.0);
  double uniform(double lo = 0.0, double hi = 1.0);
  bool bernoulli(double p);
  std::size_t uniform_index(std::size_t n);
  std::vector<std::size_t> permutation(std::size_t n);
  void fill_normal(std::vector<double>& out, double mean = 0.0, double stddev = 1.0);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace wcgan
