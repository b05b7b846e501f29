#pragma once

#include <cstdint>
#include <random>

namespace rydcrit {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seed for an independent stream `index` under `master`. Streams depend only
/// on (master, index), never on scheduling.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
    return splitmix64(splitmix64(master) ^ (index * 0xd1b54a32d192ed03ULL + 1));
}

inline Rng make_stream(std::uint64_t master, std::uint64_t index) {
    return Rng(derive_seed(master, index));
}

/// Uniform draw in the open interval (0, 1).
inline double uniform_open(Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double r = 0.0;
    while (r <= 0.0) r = u(rng);
    return r;
}

}  // namespace rydcrit
