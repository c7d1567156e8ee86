#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <numbers>

#include "mecnoma/types.hpp"

namespace mecnoma::harness {

// Channel draws are reproducible from a 64-bit seed:
//   * raw stream: SplitMix64, i.e. word i (i = 0, 1, ...) is
//     mix64(seed + (i + 1) * 0x9E3779B97F4A7C15) with Stafford's mix13
//     finalizer;
//   * uniforms: u = ((word >> 11) + 0.5) * 2^-53, strictly inside (0, 1);
//   * entry e (user-major, then row, then column) uses words 2e and 2e + 1
//     through Box-Muller: r = sqrt(-ln u0), phi = 2 pi u1, and
//     h = sqrt(variance) * r * (cos phi + i sin phi), so E|h|^2 = variance
//     with variance / 2 per real dimension.

inline constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ULL;

inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline std::uint64_t splitmix_word(std::uint64_t seed, std::uint64_t index) {
  return mix64(seed + (index + 1) * kGoldenGamma);
}

inline double unit_open(std::uint64_t word) {
  return (static_cast<double>(word >> 11) + 0.5) * 0x1.0p-53;
}

/// Per-trial seed: seed XOR mix64(trial + 1).
inline std::uint64_t child_seed(std::uint64_t seed, std::uint64_t trial) { return seed ^ mix64(trial + 1); }

/// i.i.d. circularly-symmetric complex Gaussian channels with per-entry
/// variance `variance`, decoded in user-index order.
inline ChannelSet generate_channels(std::uint64_t seed, double variance, std::size_t n_users, std::size_t n_rx,
                                    std::size_t n_tx) {
  if (!(variance > 0.0)) throw Error(ErrorKind::invalid_value, "channel variance must be > 0");
  ChannelSet ch;
  ch.decoding_order = ChannelSet::identity_order(n_users);
  const double amp = std::sqrt(variance);
  std::uint64_t entry = 0;
  for (std::size_t k = 0; k < n_users; ++k) {
    CMatrix h(static_cast<Eigen::Index>(n_rx), static_cast<Eigen::Index>(n_tx));
    for (std::size_t r = 0; r < n_rx; ++r) {
      for (std::size_t c = 0; c < n_tx; ++c, ++entry) {
        const double u0 = unit_open(splitmix_word(seed, 2 * entry));
        const double u1 = unit_open(splitmix_word(seed, 2 * entry + 1));
        const double radius = amp * std::sqrt(-std::log(u0));
        const double phi = 2.0 * std::numbers::pi * u1;
        h(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = Complex(radius * std::cos(phi), radius * std::sin(phi));
      }
    }
    ch.channels.push_back(std::move(h));
  }
  return ch;
}

/// FNV-1a over the raw bytes of every channel entry and the decoding order.
inline std::uint64_t channel_checksum(const ChannelSet& ch) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& m : ch.channels) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      for (Eigen::Index r = 0; r < m.rows(); ++r) {
        const double re = m(r, c).real();
        const double im = m(r, c).imag();
        feed(&re, sizeof re);
        feed(&im, sizeof im);
      }
    }
  }
  for (std::size_t u : ch.decoding_order) {
    const std::uint64_t v = u;
    feed(&v, sizeof v);
  }
  return h;
}

}  // namespace mecnoma::harness
