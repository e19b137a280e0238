// Counter-based random streams. Every consumer of randomness (noise, phase,
// parameter sampling, weight init, bit source, per-point eval seeds) owns a
// named stream derived from one master seed, so drawing more from one stream
// never perturbs another.
#ifndef BPSHAPE_RNG_HPP
#define BPSHAPE_RNG_HPP

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace bpshape::rng {

namespace detail {

// splitmix64 finalizer; good statistical quality for simulation use.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t hash_name(std::string_view name) noexcept {
    // FNV-1a 64
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : name) {
        h ^= static_cast<std::uint8_t>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace detail

/// Derives a 64-bit stream key from (seed, stream name, salt).
constexpr std::uint64_t stream_key(std::uint64_t seed, std::string_view name,
                                   std::uint64_t salt = 0) noexcept {
    std::uint64_t k = detail::mix64(seed);
    k = detail::mix64(k ^ detail::hash_name(name));
    return detail::mix64(k ^ salt);
}

/// A counter-based generator: output i depends only on (key, i), so the
/// stream state is the pair (key, counter) and replay is exact.
class Stream {
public:
    Stream() = default;
    explicit Stream(std::uint64_t key) : key_(key) {}
    Stream(std::uint64_t seed, std::string_view name, std::uint64_t salt = 0)
        : key_(stream_key(seed, name, salt)) {}

    std::uint64_t key() const noexcept { return key_; }
    std::uint64_t counter() const noexcept { return counter_; }
    void set_counter(std::uint64_t c) noexcept { counter_ = c; }

    std::uint64_t next_u64() noexcept {
        return detail::mix64(key_ ^ (counter_++ * 0x9e3779b97f4a7c15ULL));
    }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller; consumes exactly two counter steps,
    /// so the state stays a plain (key, counter) pair.
    double gaussian() noexcept {
        const double u1 = 1.0 - uniform(); // (0, 1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Uniform integer in [0, 2^bits) taken from the high bits.
    std::uint64_t bits(unsigned nbits) noexcept {
        return nbits == 0 ? 0 : next_u64() >> (64 - nbits);
    }

private:
    std::uint64_t key_ = 0;
    std::uint64_t counter_ = 0;
};

} // namespace bpshape::rng

#endif
