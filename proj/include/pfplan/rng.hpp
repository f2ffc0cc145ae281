#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace pfplan {

// SplitMix64 finalizer (Steele/Lea/Flood; Vigna's fixed-increment variant).
constexpr std::uint64_t splitmix64(std::uint64_t z) noexcept {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Folds a word into a stream id / derived seed. Chainable:
// mix_stream(mix_stream(domain, i), t) gives every (domain, i, t) its own id.
constexpr std::uint64_t mix_stream(std::uint64_t base, std::uint64_t word) noexcept {
    return splitmix64(splitmix64(base) ^ word);
}

// Stream-id domains; keeps environment draws, particle draws and derived
// per-cell seeds on disjoint streams of the same master seed.
namespace stream_domain {
inline constexpr std::uint64_t env_transition = 0xE1;
inline constexpr std::uint64_t env_observation = 0xE2;
inline constexpr std::uint64_t particle = 0xA1;
inline constexpr std::uint64_t cell = 0xC1;
inline constexpr std::uint64_t replication = 0xB1;
inline constexpr std::uint64_t shared_noise = 0x51;
inline constexpr std::uint64_t planner = 0x52;
inline constexpr std::uint64_t probe = 0xD1;
}  // namespace stream_domain

// Philox4x32-10 block (Salmon et al., "Parallel random numbers: as easy as
// 1, 2, 3"). Counter-based: the value is a pure function of (key, counter),
// so any parallel schedule replays bit-exactly.
constexpr std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                                     std::array<std::uint32_t, 2> key) noexcept {
    constexpr std::uint32_t kMul0 = 0xD2511F53u;
    constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
    constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
    constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
        const std::uint64_t p0 = static_cast<std::uint64_t>(kMul0) * ctr[0];
        const std::uint64_t p1 = static_cast<std::uint64_t>(kMul1) * ctr[2];
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

// One logical random stream, keyed by (seed, stream id). Cheap to construct;
// consumers make a fresh stream per (particle, time) pair and never share.
class RngStream {
  public:
    RngStream(std::uint64_t seed, std::uint64_t stream) noexcept
        : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
          stream_lo_(static_cast<std::uint32_t>(stream)),
          stream_hi_(static_cast<std::uint32_t>(stream >> 32)) {}

    std::uint64_t next_u64() noexcept {
        if (pos_ == 2) refill();
        return buf_[pos_++];
    }

    // Uniform on [0, 1), 53-bit resolution.
    double uniform() noexcept {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller; consumes exactly two 64-bit draws.
    double normal() noexcept {
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log1p(-u1));
        return r * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

  private:
    void refill() noexcept {
        const auto block = philox4x32_10(
            {static_cast<std::uint32_t>(block_index_),
             static_cast<std::uint32_t>(block_index_ >> 32), stream_lo_, stream_hi_},
            key_);
        buf_[0] = (static_cast<std::uint64_t>(block[0]) << 32) | block[1];
        buf_[1] = (static_cast<std::uint64_t>(block[2]) << 32) | block[3];
        ++block_index_;
        pos_ = 0;
    }

    std::array<std::uint32_t, 2> key_;
    std::uint32_t stream_lo_;
    std::uint32_t stream_hi_;
    std::uint64_t block_index_ = 0;
    std::array<std::uint64_t, 2> buf_{};
    int pos_ = 2;
};

// Per-cell seed for sweep grids: (master, N index, seed index), as documented
// in the CLI help. Extra grid axes chain additional words in front.
constexpr std::uint64_t derive_cell_seed(std::uint64_t master, std::uint64_t n_index,
                                         std::uint64_t seed_index) noexcept {
    return mix_stream(mix_stream(mix_stream(master, stream_domain::cell), n_index), seed_index);
}

}  // namespace pfplan
