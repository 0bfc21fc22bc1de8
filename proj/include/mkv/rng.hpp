#pragma once

// Counter-based random streams. Every draw is a pure function of
// (seed, stream, purpose, step, index), so results do not depend on the order
// in which particles, steps or replicas are processed.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace mkv {

using Philox4x32Counter = std::array<std::uint32_t, 4>;
using Philox4x32Key = std::array<std::uint32_t, 2>;

/// Philox4x32 with 10 rounds (Salmon et al. counter-based generator).
inline Philox4x32Counter philox4x32_10(Philox4x32Counter ctr, Philox4x32Key key) {
    constexpr std::uint32_t kM0 = 0xD2511F53u, kM1 = 0xCD9E8D57u;
    constexpr std::uint32_t kW0 = 0x9E3779B9u, kW1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
        std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * ctr[0];
        std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * ctr[2];
        auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
        auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += kW0;
        key[1] += kW1;
    }
    return ctr;
}

/// SplitMix64 finaliser, used to derive replica seeds from a master seed.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t child) {
    return splitmix64(master ^ splitmix64(child + 0x632BE59BD9B4E019ULL));
}

enum class RngPurpose : std::uint32_t { Init = 1, Noise = 2, Replica = 3, Bootstrap = 4 };

/// Four 32-bit words for (stream, purpose, step, index) under `seed`.
inline Philox4x32Counter stream_block(std::uint64_t seed, std::uint64_t stream, RngPurpose purpose,
                                      std::uint64_t step, std::uint32_t index) {
    Philox4x32Counter ctr{index, static_cast<std::uint32_t>(step),
                          static_cast<std::uint32_t>((step >> 32) & 0xFFFFFFu) |
                              (static_cast<std::uint32_t>(purpose) << 24),
                          static_cast<std::uint32_t>(stream)};
    // the upper half of the stream id is folded into the key
    std::uint64_t k = seed ^ splitmix64(stream >> 32);
    return philox4x32_10(ctr, {static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(k >> 32)});
}

/// Uniform in (0, 1) from two 32-bit words (53 bits, never 0 or 1).
inline double uniform_open(std::uint32_t hi, std::uint32_t lo) {
    std::uint64_t bits = (static_cast<std::uint64_t>(hi) << 21) ^ (lo >> 11);
    bits &= (1ULL << 53) - 1;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

/// Two independent standard normals (Box-Muller) from one Philox block.
inline std::array<double, 2> normal_pair(const Philox4x32Counter& b) {
    double u1 = uniform_open(b[0], b[1]);
    double u2 = uniform_open(b[2], b[3]);
    double rad = std::sqrt(-2.0 * std::log(u1));
    double ang = 2.0 * std::numbers::pi * u2;
    return {rad * std::cos(ang), rad * std::sin(ang)};
}

/// Fills `out[0..n)` with standard normals for (stream, purpose, step).
template <class Out>
void stream_normals(std::uint64_t seed, std::uint64_t stream, RngPurpose purpose, std::uint64_t step, int n,
                    Out&& out) {
    for (int j = 0; j < n; j += 2) {
        auto z = normal_pair(stream_block(seed, stream, purpose, step, static_cast<std::uint32_t>(j / 2)));
        out[j] = z[0];
        if (j + 1 < n) out[j + 1] = z[1];
    }
}

/// Uniforms in (0, 1) for (stream, purpose, step), two per block.
template <class Out>
void stream_uniforms(std::uint64_t seed, std::uint64_t stream, RngPurpose purpose, std::uint64_t step, int n,
                     Out&& out, std::uint32_t first_index = 0) {
    for (int j = 0; j < n; j += 2) {
        auto b = stream_block(seed, stream, purpose, step, first_index + static_cast<std::uint32_t>(j / 2));
        out[j] = uniform_open(b[0], b[1]);
        if (j + 1 < n) out[j + 1] = uniform_open(b[2], b[3]);
    }
}

} // namespace mkv
