#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace fdtlab {

// Philox4x32-10 counter-based generator (Salmon et al., SC'11). The output
// for a given (key, counter) is a pure function, which is what makes every
// Gaussian increment addressable by (seed, stream, step, component).
namespace philox {

using Counter = std::array<std::uint32_t, 4>;
using Key = std::array<std::uint32_t, 2>;

inline constexpr std::uint32_t kMul0 = 0xD2511F53u;
inline constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
inline constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
inline constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

constexpr Counter round(const Counter& c, const Key& k) {
  const std::uint64_t p0 = std::uint64_t{kMul0} * c[0];
  const std::uint64_t p1 = std::uint64_t{kMul1} * c[2];
  const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
  const auto lo0 = static_cast<std::uint32_t>(p0);
  const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
  const auto lo1 = static_cast<std::uint32_t>(p1);
  return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
}

constexpr Counter generate(Counter c, Key k) {
  for (int r = 0; r < 10; ++r) {
    if (r > 0) {
      k[0] += kWeyl0;
      k[1] += kWeyl1;
    }
    c = round(c, k);
  }
  return c;
}

}  // namespace philox

/// SplitMix64 finalizer; used to derive independent master seeds per purpose.
constexpr std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t tag) {
  return splitmix64(master ^ splitmix64(tag + 0x632BE59BD9B4E019ull));
}

constexpr std::uint64_t tag_of(std::string_view name) {
  // FNV-1a
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (char ch : name) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001B3ull;
  }
  return h;
}

inline std::uint64_t derive_seed(std::uint64_t master, std::string_view purpose) {
  return derive_seed(master, tag_of(purpose));
}

/// Addressable Gaussian stream for one trajectory.
///
/// normal(step, component) depends only on (master_seed, stream_id, step,
/// component); no internal state advances, so paths can be replayed,
/// interleaved, or split across workers without changing a single bit.
class RngStream {
 public:
  RngStream() = default;
  RngStream(std::uint64_t master_seed, std::uint64_t stream_id)
      : seed_(master_seed), stream_(stream_id) {}

  std::uint64_t master_seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_; }

  double normal(std::uint64_t step, std::uint32_t component) const {
    const auto w = block(step, component >> 1);
    const double u1 = to_open_unit(w[0], w[1]);
    const double u2 = to_half_open_unit(w[2], w[3]);
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    return (component & 1u) ? radius * std::sin(angle) : radius * std::cos(angle);
  }

  /// Components 2b and 2b+1 from a single generator call.
  std::array<double, 2> normal_pair(std::uint64_t step, std::uint32_t pair) const {
    const auto w = block(step, pair);
    const double u1 = to_open_unit(w[0], w[1]);
    const double u2 = to_half_open_unit(w[2], w[3]);
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    return {radius * std::cos(angle), radius * std::sin(angle)};
  }

  /// Uniform on [0,1); lives in a counter region disjoint from normal().
  double uniform(std::uint64_t step, std::uint32_t component) const {
    const auto w = block(step, 0x8000u | (component >> 1));
    return (component & 1u) ? to_half_open_unit(w[2], w[3]) : to_half_open_unit(w[0], w[1]);
  }

  philox::Counter block(std::uint64_t step, std::uint32_t block_index) const {
    const philox::Counter ctr{static_cast<std::uint32_t>(step), static_cast<std::uint32_t>(step >> 32),
                              static_cast<std::uint32_t>(stream_),
                              static_cast<std::uint32_t>(((stream_ >> 32) & 0xFFFFu) << 16) |
                                  (block_index & 0xFFFFu)};
    const philox::Key key{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32)};
    return philox::generate(ctr, key);
  }

 private:
  static double to_open_unit(std::uint32_t hi, std::uint32_t lo) {
    const std::uint64_t bits = (std::uint64_t{hi} << 32 | lo) >> 11;
    return (static_cast<double>(bits) + 1.0) * 0x1.0p-53;
  }
  static double to_half_open_unit(std::uint32_t hi, std::uint32_t lo) {
    const std::uint64_t bits = (std::uint64_t{hi} << 32 | lo) >> 11;
    return static_cast<double>(bits) * 0x1.0p-53;
  }

  std::uint64_t seed_ = 0;
  std::uint64_t stream_ = 0;
};

}  // namespace fdtlab
