#pragma once

// Philox4x32-10 counter-based generator (Salmon et al., SC'11). Every draw is
// a pure function of (key, counter), so any entry of any tensor can be
// produced independently of generation order or thread count.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace randlora {

class Philox4x32 {
public:
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static constexpr int kRounds = 10;

  static constexpr Counter apply(Counter ctr, Key key) noexcept {
    for (int round = 0; round < kRounds; ++round) {
      if (round > 0) {
        key[0] += kWeyl0;
        key[1] += kWeyl1;
      }
      ctr = single_round(ctr, key);
    }
    return ctr;
  }

  static constexpr Key key_from_seed(std::uint64_t seed) noexcept {
    return {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  }

private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

  static constexpr Counter single_round(const Counter& c, const Key& k) noexcept {
    const std::uint64_t p0 = std::uint64_t{kMul0} * c[0];
    const std::uint64_t p1 = std::uint64_t{kMul1} * c[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
  }
};

/// Two independent uniforms in [0, 1) with 53 bits each, drawn at a counter.
struct UniformPair {
  double u0;
  double u1;
};

inline UniformPair uniform_pair(std::uint64_t seed, const Philox4x32::Counter& ctr) noexcept {
  const auto out = Philox4x32::apply(ctr, Philox4x32::key_from_seed(seed));
  const std::uint64_t a = (std::uint64_t{out[0]} << 32) | out[1];
  const std::uint64_t b = (std::uint64_t{out[2]} << 32) | out[3];
  constexpr double kScale = 0x1.0p-53;
  return {static_cast<double>(a >> 11) * kScale, static_cast<double>(b >> 11) * kScale};
}

/// Standard normal draw via Box-Muller on one counter.
inline double normal_at(std::uint64_t seed, const Philox4x32::Counter& ctr) noexcept {
  const auto [u0, u1] = uniform_pair(seed, ctr);
  const double radius = std::sqrt(-2.0 * std::log1p(-u0));
  return radius * std::cos(2.0 * std::numbers::pi * u1);
}

/// Sequential stream over a fixed (seed, stream id) pair. Used for parameter
/// initialization and synthetic data where a running sequence is natural.
class CounterStream {
public:
  CounterStream(std::uint64_t seed, std::uint32_t stream, std::uint32_t substream = 0) noexcept
      : seed_(seed), stream_(stream), substream_(substream) {}

  double uniform() noexcept { return uniform_pair(seed_, next_counter()).u0; }
  double normal() noexcept { return normal_at(seed_, next_counter()); }

private:
  Philox4x32::Counter next_counter() noexcept {
    const std::uint64_t i = index_++;
    return {stream_, substream_, static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(i >> 32)};
  }

  std::uint64_t seed_;
  std::uint32_t stream_;
  std::uint32_t substream_;
  std::uint64_t index_ = 0;
};

} // namespace randlora
