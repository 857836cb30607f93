#pragma once

#include <cstdint>
#include <random>

namespace skelres {

/// splitmix64 finalizer; used to derive independent stream seeds from one
/// master seed so shuffles, crops and dropout masks replay exactly.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a = 0, std::uint64_t b = 0,
                                 std::uint64_t c = 0) {
    return mix64(base ^ mix64(a ^ mix64(b ^ mix64(c))));
}

/// Uniform draw from [0, n). Modulo bias is negligible at the ranges used
/// here and the result does not depend on the standard library's
/// distribution internals.
inline std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t n) { return rng() % n; }

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform_real(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace skelres
