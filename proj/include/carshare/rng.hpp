#pragma once

#include <cmath>
#include <cstdint>

namespace carshare {

/// Splittable counter hash (splitmix64). Used to derive independent
/// replication streams from (seed, index) so results do not depend on
/// thread scheduling.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// xoshiro256++ — small, fast, fully reproducible across platforms
/// (std:: distributions are implementation-defined, so sampling below is
/// done from raw bits by hand).
class Rng {
  public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t x = seed;
        for (auto& w : s_) w = (x = splitmix64(x));
    }
    /// Stream for replication `index` of a run seeded with `seed`.
    static Rng stream(std::uint64_t seed, std::uint64_t index) {
        return Rng(splitmix64(seed ^ splitmix64(index + 0x5851f42d4c957f2dULL)));
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform double in (0, 1]; safe as a log argument.
    double uniform_pos() { return double((next_u64() >> 11) + 1) * 0x1.0p-53; }

    /// Uniform integer in [0, n).
    std::uint64_t uniform_below(std::uint64_t n) {
        // Lemire rejection; unbiased.
        std::uint64_t x = next_u64();
        __uint128_t m = __uint128_t(x) * n;
        auto lo = std::uint64_t(m);
        if (lo < n) {
            const std::uint64_t thresh = (-n) % n;
            while (lo < thresh) {
                x = next_u64();
                m = __uint128_t(x) * n;
                lo = std::uint64_t(m);
            }
        }
        return std::uint64_t(m >> 64);
    }

    double exponential(double rate) { return -std::log(uniform_pos()) / rate; }

  private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    std::uint64_t s_[4];
};

} // namespace carshare
