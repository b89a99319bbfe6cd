#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <string_view>

#include "seqfreq/errors.hpp"

namespace seqfreq {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t basis) {
    std::uint64_t h = basis ^ 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace detail

/// Splittable counter-keyed random stream (xoshiro256** core).
///
/// Every stream is fully determined by its 64-bit key: replaying from the
/// same key yields the byte-identical draw sequence. Child streams are
/// keyed by hashing (parent key, label), so a cell such as
/// "ds/3/arch/lstm-l2-h200/seed/7" always sees the same randomness no
/// matter which worker touches it or in what order.
class RngStream {
public:
    explicit RngStream(std::uint64_t key) : key_(key) {
        std::uint64_t x = key;
        for (auto& s : state_) s = detail::splitmix64(x);
    }

    /// Deterministic child stream for a nonempty label.
    RngStream derive(std::string_view label) const {
        if (label.empty()) throw ConfigError("RngStream::derive: empty label");
        std::uint64_t x = detail::fnv1a64(label, key_);
        return RngStream(detail::splitmix64(x));
    }

    std::uint64_t key() const { return key_; }

    std::uint64_t next_u64() {
        const std::uint64_t result = std::rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = std::rotl(state_[3], 45);
        return result;
    }

    /// Uniform draw from [0, bound). Unbiased via threshold rejection.
    std::uint64_t next_below(std::uint64_t bound) {
        if (bound == 0) throw ConfigError("RngStream::next_below: zero bound");
        const std::uint64_t threshold = (0 - bound) % bound;
        for (;;) {
            const std::uint64_t r = next_u64();
            if (r >= threshold) return r % bound;
        }
    }

    /// Uniform draw from [0, 1), 53-bit resolution.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Uniform draw from [lo, hi).
    double next_uniform(double lo, double hi) {
        return lo + (hi - lo) * next_double();
    }

    bool next_bool() { return (next_u64() >> 63) != 0; }

private:
    std::array<std::uint64_t, 4> state_{};
    std::uint64_t key_ = 0;
};

} // namespace seqfreq
