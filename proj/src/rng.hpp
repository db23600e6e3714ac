#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace csf {

/// Seeded random stream. Distribution objects are created per call so the
/// engine state alone determines every future draw; that keeps checkpointed
/// streams resumable.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  double uniform() {
    return std::uniform_real_distribution<double>(0.0, 1.0)(engine_);
  }
  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }
  std::uint64_t next_u64() { return engine_(); }

  /// Child stream whose seed is a deterministic function of this stream.
  Rng split() { return Rng(next_u64()); }

  std::vector<std::uint64_t> state() const;
  void set_state(const std::vector<std::uint64_t>& words);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

/// Stable 64-bit hash (FNV-1a) used to derive per-network seeds from names.
std::uint64_t hash_name(const std::string& name);

}  // namespace csf
