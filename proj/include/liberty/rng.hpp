#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace liberty {

// splitmix64 finalizer, used to mix seeds and derive independent streams.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d49fbb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
    return mix64(mix64(a) ^ b);
}

inline std::uint64_t hash_tag(std::string_view tag) {
    // FNV-1a, stable across platforms
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : tag) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

// Seedable, splittable PRNG. The generator algorithm is pinned (mt19937_64 with
// an explicit Box-Muller transform) so datasets replay identically across
// platforms; the identifier below is recorded in dataset manifests.
class Rng {
public:
    static constexpr const char* kPrngId = "mt19937_64/box-muller/v1";

    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // Independent stream derived from (seed, tag, index).
    static Rng derive(std::uint64_t seed, std::string_view tag, std::uint64_t index = 0) {
        return Rng(mix64(mix64(seed, hash_tag(tag)), index));
    }

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double next_uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    // Uniform integer in [0, n).
    std::uint64_t next_below(std::uint64_t n) {
        // modulo bias is negligible for the pool sizes used here
        return n ? engine_() % n : 0;
    }

    double next_gaussian(double mean, double stddev) {
        if (stddev == 0.0) return mean;
        double u1 = next_uniform();
        double u2 = next_uniform();
        while (u1 <= 0.0) u1 = next_uniform();
        double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
        return mean + stddev * z;
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace liberty
