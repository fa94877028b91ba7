#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace reebflow {

inline std::uint64_t splitmix64(std::uint64_t& s) {
    std::uint64_t z = (s += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
    }
    return h;
}

/**
 * xoshiro256** with explicit helpers for uniform and normal variates.
 *
 * All randomness in the project flows through substreams derived from a
 * master seed as stream(seed, tag, index); work items own their stream, so
 * results do not depend on how items are scheduled across threads.
 */
class Rng {
public:
    Rng() : Rng(0, "default", 0) {}

    Rng(std::uint64_t seed, std::string_view tag, std::uint64_t index) {
        std::uint64_t s = seed ^ fnv1a(tag);
        s += 0x632be59bd9b4e019ull * (index + 1);
        for (auto& w : state_) w = splitmix64(s);
        have_spare_ = false;
        spare_ = 0.0;
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    /// Uniform in [0,1) with 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform in [a,b).
    double uniform(double a, double b) { return a + (b - a) * uniform(); }

    /// Standard normal via the polar method (portable across platforms,
    /// unlike std::normal_distribution).
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double m = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * m;
        have_spare_ = true;
        return u * m;
    }

    /// Exponential with the given mean.
    double exponential(double mean) {
        double u;
        do { u = uniform(); } while (u <= 0.0);
        return -mean * std::log(u);
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    std::uint64_t state_[4];
    bool have_spare_;
    double spare_;
};

}  // namespace reebflow
