#pragma once

// Counter-based Gaussian generation. Every variate is a pure function of
// (seed, stream, index), so results never depend on evaluation order or on
// how work is split between threads.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string_view>

namespace spdelab {

using Philox4x32Counter = std::array<std::uint32_t, 4>;
using Philox4x32Key = std::array<std::uint32_t, 2>;

// Philox4x32 with 10 rounds (Salmon et al., Random123).
inline Philox4x32Counter philox4x32_10(Philox4x32Counter ctr, Philox4x32Key key) noexcept {
  constexpr std::uint32_t kMul0 = 0xD2511F53u;
  constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
    const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kWeyl0;
    key[1] += kWeyl1;
  }
  return ctr;
}

// FNV-1a over the label bytes; stream labels are short fixed strings such as
// "W", "V" or "B/17".
constexpr std::uint64_t stream_id(std::string_view label) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : label) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Seed of the k-th independent replica drawn from a base seed.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t k) noexcept {
  return splitmix64(base ^ splitmix64(k + 0x632be59bd9b4e019ull));
}

class CounterNormal {
 public:
  CounterNormal(std::uint64_t seed, std::uint64_t stream) noexcept
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        stream_(stream) {}

  // Standard normal variate number `index` of this stream.
  double operator()(std::uint64_t index) const noexcept {
    const auto pair = normal_pair(index >> 1);
    return (index & 1u) ? pair[1] : pair[0];
  }

  // out[k] = (*this)(first + k)
  void fill(std::uint64_t first, std::span<double> out) const noexcept {
    std::size_t k = 0;
    std::uint64_t index = first;
    if ((index & 1u) && k < out.size()) {
      out[k++] = (*this)(index++);
    }
    for (; k + 1 < out.size(); k += 2, index += 2) {
      const auto pair = normal_pair(index >> 1);
      out[k] = pair[0];
      out[k + 1] = pair[1];
    }
    if (k < out.size()) out[k] = (*this)(index);
  }

  std::array<double, 2> normal_pair(std::uint64_t block) const noexcept {
    const Philox4x32Counter ctr{static_cast<std::uint32_t>(block),
                                static_cast<std::uint32_t>(block >> 32),
                                static_cast<std::uint32_t>(stream_),
                                static_cast<std::uint32_t>(stream_ >> 32)};
    const auto w = philox4x32_10(ctr, key_);
    const std::uint64_t a = (std::uint64_t{w[0]} << 32) | w[1];
    const std::uint64_t b = (std::uint64_t{w[2]} << 32) | w[3];
    constexpr double kInv53 = 1.0 / 9007199254740992.0;
    const double u1 = (static_cast<double>(a >> 11) + 0.5) * kInv53;
    const double u2 = (static_cast<double>(b >> 11) + 0.5) * kInv53;
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    return {radius * std::cos(angle), radius * std::sin(angle)};
  }

 private:
  Philox4x32Key key_;
  std::uint64_t stream_;
};

}  // namespace spdelab
