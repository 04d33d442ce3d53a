#pragma once

#include <cmath>
#include <cstdint>

namespace xdlm {

// Counter-based pseudo-randomness: every draw is a pure 64-bit hash of
// (seed, a, b, c).  Samplers and the trainer key each draw by logical
// coordinates such as (seed, step, position, category), so results are
// independent of evaluation order and reproduce bit-for-bit across runs
// and platforms.

namespace detail {

// SplitMix64 finalizer; good avalanche for counter inputs.
constexpr std::uint64_t mix64(std::uint64_t x) {
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
}

constexpr std::uint64_t golden = 0x9e3779b97f4a7c15ULL;

}  // namespace detail

constexpr std::uint64_t keyed_bits(std::uint64_t seed, std::uint64_t a = 0,
                                   std::uint64_t b = 0, std::uint64_t c = 0) {
    std::uint64_t h = detail::mix64(seed + detail::golden);
    h = detail::mix64(h ^ (a + detail::golden));
    h = detail::mix64(h ^ (b + detail::golden));
    h = detail::mix64(h ^ (c + detail::golden));
    return h;
}

// Uniform double strictly inside (0, 1): 53 random bits, offset by half an ulp
// so that 0 and 1 are unreachable (safe to pass to log).
inline double keyed_uniform(std::uint64_t seed, std::uint64_t a = 0,
                            std::uint64_t b = 0, std::uint64_t c = 0) {
    return (static_cast<double>(keyed_bits(seed, a, b, c) >> 11) + 0.5) * 0x1.0p-53;
}

inline double keyed_gumbel(std::uint64_t seed, std::uint64_t a = 0,
                           std::uint64_t b = 0, std::uint64_t c = 0) {
    return -std::log(-std::log(keyed_uniform(seed, a, b, c)));
}

// n must be >= 1; result in [0, n).  Modulo bias is < n / 2^64, irrelevant here.
inline int keyed_below(std::uint64_t seed, int n, std::uint64_t a = 0,
                       std::uint64_t b = 0, std::uint64_t c = 0) {
    return static_cast<int>(keyed_bits(seed, a, b, c) % static_cast<std::uint64_t>(n));
}

// Fixed stream tags so different consumers of the same user seed never collide
// on (a, b, c) coordinates; passed as the `a` slot.
enum stream_tag : std::uint64_t {
    stream_corrupt = 1,
    stream_time = 2,
    stream_batch_pick = 3,
    stream_init_state = 4,
    stream_step_draw = 5,
    stream_param_init = 6,
    stream_verify = 7,
    stream_bench = 8,
    stream_ancestral = 9,
    stream_confidence = 10,
};

}  // namespace xdlm
