#pragma once

#include <cstdint>

namespace meshfree {

/// SplitMix64 generator. Chosen over <random> engines because the stream of
/// doubles it produces is fully specified here, independent of the standard
/// library implementation, so seeded runs reproduce bit-exactly everywhere.
///
/// Stream splitting: stream(seed, k) hashes (seed, k) into an independent
/// state, so realization k of a study draws from its own sequence and adding
/// realizations never disturbs earlier ones.
class SplitMix64 {
  public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    static SplitMix64 stream(std::uint64_t seed, std::uint64_t stream_id) {
        SplitMix64 g(seed);
        const std::uint64_t a = g.next_u64();
        SplitMix64 h(stream_id * 0x9E3779B97F4A7C15ULL + 0x2545F4914F6CDD1DULL);
        return SplitMix64(a ^ h.next_u64());
    }

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1) with 53 random bits.
    double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform in [-amplitude, +amplitude].
    double next_symmetric(double amplitude) { return amplitude * (2.0 * next_unit() - 1.0); }

  private:
    std::uint64_t state_;
};

}  // namespace meshfree
