#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace npt {

// splitmix64 step; used both as a stream expander and as the seed hash.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Deterministic stream derivation: mixing is order sensitive, so
// derive_seed(a, b) != derive_seed(b, a) in general.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt) {
    std::uint64_t s = base ^ (0xd1b54a32d192ed03ull * (salt + 1));
    return splitmix64(s);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::string_view purpose) {
    std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a over the purpose label
    for (char c : purpose) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
    }
    return derive_seed(base, h);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::string_view purpose, std::uint64_t salt) {
    return derive_seed(derive_seed(base, purpose), salt);
}

// xoshiro256** with hand-rolled uniform/normal draws so the bit stream is the
// same on every platform for a given seed.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& w : s_) w = splitmix64(sm);
        have_cached_normal_ = false;
        cached_normal_ = 0.0;
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // standard normal via Box-Muller; second value cached
    double normal() {
        if (have_cached_normal_) {
            have_cached_normal_ = false;
            return cached_normal_;
        }
        double u1 = uniform();
        if (u1 <= 0.0) u1 = 0x1.0p-53;
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        cached_normal_ = r * std::sin(a);
        have_cached_normal_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // uniform integer in [0, n); n > 0. Modulo bias is negligible for the
    // dataset-scale n used here.
    std::uint64_t uniform_below(std::uint64_t n) { return next_u64() % n; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(uniform_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t s_[4];
    bool have_cached_normal_;
    double cached_normal_;
};

}  // namespace npt
