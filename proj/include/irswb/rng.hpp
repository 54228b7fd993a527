#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace irswb {

using RngStream = std::mt19937_64;

inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t h, std::uint64_t v) {
    return mix64(h ^ (v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2)));
}

/// Derive an independent, reproducible stream from a seed and a path of
/// integer tags, e.g. substream(seed, {kTrialTag, trial, l_count}). Streams
/// with different paths are uncorrelated for practical purposes, and results
/// never depend on which thread consumed which stream.
inline RngStream substream(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
    std::uint64_t h = mix64(seed);
    for (std::uint64_t p : path)
        h = hash_combine(h, p);
    return RngStream(h);
}

/// One draw of a circularly-symmetric complex Gaussian CN(0, variance).
inline std::complex<double> sample_cn(RngStream& rng, double variance) {
    if (variance <= 0.0)
        return {0.0, 0.0};
    std::normal_distribution<double> n(0.0, std::sqrt(0.5 * variance));
    const double re = n(rng);
    const double im = n(rng);
    return {re, im};
}

} // namespace irswb
