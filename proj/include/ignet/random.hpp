#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace ignet {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Independent stream seed for a (seed, coordinates...) tuple, so per-item
// randomness does not depend on which worker handles the item.
inline std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> coords)
{
    std::uint64_t h = splitmix64(seed);
    for (std::uint64_t c : coords)
        h = splitmix64(h ^ splitmix64(c + 0x632be59bd9b4e019ULL));
    return h;
}

inline Rng derive_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> coords)
{
    return Rng(derive_seed(seed, coords));
}

inline double uniform(Rng& rng, double lo, double hi)
{
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

} // namespace ignet
