#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <utility>

namespace cisir {

/// SplitMix64 finalizer, used to derive independent stream keys.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Derives a generator keyed by an ordered tuple of counters, e.g.
/// (seed, epoch, group). Streams for different keys are independent and
/// the result does not depend on the order in which keys are requested.
inline std::mt19937_64 keyed_rng(std::initializer_list<std::uint64_t> key)
{
    std::uint64_t h = 0x243f6a8885a308d3ULL;
    for (std::uint64_t k : key) {
        h = mix64(h ^ mix64(k));
    }
    return std::mt19937_64(h);
}

/// Uniform integer in [0, bound) from a 64-bit engine (bias < 2^-40 for
/// the sizes used here).
inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound)
{
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(rng()) * bound) >> 64);
}

/// Uniform double in [0, 1).
inline double uniform01(std::mt19937_64& rng)
{
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Fisher-Yates shuffle with a portable index draw.
template <typename T>
void shuffle_in_place(std::span<T> values, std::mt19937_64& rng)
{
    for (std::size_t i = values.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(uniform_below(rng, i));
        std::swap(values[i - 1], values[j]);
    }
}

} // namespace cisir
