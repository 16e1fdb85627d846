#pragma once

#include <cstdint>
#include <string_view>

#include "rsl/normal.hpp"

namespace rsl {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace detail

/// Counter-based deterministic generator. Each (seed, stream name, substream id)
/// triple addresses an independent value sequence, so parallel consumers can draw
/// from disjoint streams without coordination and results are independent of
/// thread count. Stream names used in this library:
///   "prices"       generator offer prices
///   "caps"         per-zone capacity splits
///   "ctx"          context profile noise
///   "innov"        VAR innovation vectors
///   "batch"        contextual training batch indices
///   "encoder-init" MLP weight initialization
///   "bootstrap"    block-bootstrap replicates
class StreamRng {
public:
    StreamRng(std::uint64_t seed, std::string_view stream, std::uint64_t substream = 0)
        : key_(detail::splitmix64(seed ^ detail::splitmix64(detail::fnv1a(stream) + substream))) {}

    std::uint64_t next_u64() { return detail::splitmix64(key_ + 0x632be59bd9b4e019ULL * ++counter_); }

    /// Uniform double in [0, 1): top 53 bits of the counter hash.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    std::uint64_t uniform_index(std::uint64_t n) { return next_u64() % n; }

    /// Standard normal via inverse-CDF transform (deterministic across platforms).
    double normal() {
        double p;
        do {
            p = uniform();
        } while (p <= 0.0);
        return inverse_normal_cdf(p);
    }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace rsl
