#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace blum {

// Seed mixer (splitmix64). Also used to derive per-stream seeds.
inline std::uint64_t splitmix64_next(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// xoshiro256++ with splitmix64 seeding. Self-contained so that identical
// seeds give identical corpora, parameters and reports on every rerun of
// the same binary, independent of the standard library's distributions.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : origin_(seed) {
        std::uint64_t sm = seed;
        for (auto& w : s_) w = splitmix64_next(sm);
        has_spare_ = false;
        spare_ = 0.0;
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

    // [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // [0, n)
    std::uint64_t uniform_index(std::uint64_t n) {
        return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    // [lo, hi] inclusive
    long long uniform_int(long long lo, long long hi) {
        return lo + static_cast<long long>(uniform_index(static_cast<std::uint64_t>(hi - lo + 1)));
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Box-Muller with cached spare.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * M_PI * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Knuth inversion for small means, normal approximation above.
    int poisson(double mean) {
        if (mean <= 0.0) return 0;
        if (mean < 30.0) {
            const double limit = std::exp(-mean);
            double prod = uniform();
            int k = 0;
            while (prod > limit) {
                prod *= uniform();
                ++k;
            }
            return k;
        }
        const double v = mean + std::sqrt(mean) * normal();
        return v < 0.0 ? 0 : static_cast<int>(v + 0.5);
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = uniform_index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

    // Independent child stream, derived from the construction seed only:
    // insensitive to how much of this stream has been consumed.
    Rng stream(std::string_view tag) const {
        std::uint64_t mixed = origin_ ^ fnv1a64(tag);
        return Rng(splitmix64_next(mixed));
    }

    Rng stream(std::uint64_t index) const {
        std::uint64_t mixed = origin_ ^ (0x9e3779b97f4a7c15ULL * (index + 1));
        return Rng(splitmix64_next(mixed));
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t origin_;
    std::uint64_t s_[4];
    bool has_spare_;
    double spare_;
};

// Derives the stream seed used for shard-parallel generation: shard i of a
// run seeded with `seed` always sees the same substream.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) {
    std::uint64_t mixed = seed ^ fnv1a64(tag);
    return splitmix64_next(mixed);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag, std::uint64_t index) {
    std::uint64_t mixed = seed ^ fnv1a64(tag) ^ (0x9e3779b97f4a7c15ULL * (index + 1));
    return splitmix64_next(mixed);
}

}  // namespace blum
