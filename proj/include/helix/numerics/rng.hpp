#pragma once

#include <cstdint>
#include <vector>

namespace helix::numerics {

/// SplitMix64 step. Used for seeding and for deriving child streams.
std::uint64_t splitmix64(std::uint64_t& state) noexcept;

/// xoshiro256** generator seeded through SplitMix64.
///
/// All derived distributions are implemented here rather than through
/// <random> distributions so that sequences are identical across standard
/// library implementations:
///   uniform()   = (next() >> 11) * 2^-53
///   normal()    = Box-Muller on two uniforms, second value cached
///   below(n)    = Lemire multiply-shift with rejection
///   split()     = child seeded from next() mixed with a stream constant
class Rng {
 public:
  explicit Rng(std::uint64_t seed) noexcept;

  /// Stateless derivation of an independent stream, e.g. per restart or per epoch.
  static Rng derive(std::uint64_t seed, std::uint64_t stream) noexcept;

  std::uint64_t next() noexcept;
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  double normal() noexcept;
  double normal(double mean, double stddev) noexcept { return mean + stddev * normal(); }
  std::uint64_t below(std::uint64_t n) noexcept;
  Rng split() noexcept;

  template <class T>
  void shuffle(std::vector<T>& v) noexcept {
    for (std::size_t i = v.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace helix::numerics
