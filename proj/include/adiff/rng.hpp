#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace adiff {

// ---------------------------------------------------------------------------
// CounterRng: counter-based generator built on the SplitMix64 finalizer.
//
//   word(seed, stream, i) = mix64(mix64(seed ^ (stream * 0x9E3779B97F4A7C15))
//                                 + (i + 1) * 0x9E3779B97F4A7C15)
//
// Every output is a pure function of (seed, stream, counter), so any stream
// can be reproduced independently and in any order. split(k) derives stream k.
// Uniforms take the top 53 bits; normals use the Box-Muller cosine branch on
// two consecutive words (one normal per pair, no caching).
// ---------------------------------------------------------------------------
class CounterRng {
public:
    static constexpr std::uint64_t golden = 0x9E3779B97F4A7C15ULL;

    explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
        : seed_(seed), stream_(stream), key_(mix64(seed ^ (stream * golden))) {}

    static constexpr std::uint64_t mix64(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    CounterRng split(std::uint64_t stream) const {
        return CounterRng(mix64(seed_ + golden * (stream_ + 1)), stream);
    }

    std::uint64_t next_u64() { return mix64(key_ + (++counter_) * golden); }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n), n > 0; rejection removes modulo bias.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t v;
        do {
            v = next_u64();
        } while (v >= limit);
        return v % n;
    }

    double normal() {
        const double u1 = 1.0 - uniform(); // (0, 1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    std::uint64_t seed() const { return seed_; }
    std::uint64_t counter() const { return counter_; }

private:
    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

} // namespace adiff
