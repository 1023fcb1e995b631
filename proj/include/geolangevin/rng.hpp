#pragma once

#include <cstdint>
#include <random>

#include "geolangevin/linalg.hpp"

namespace geolangevin {

/// SplitMix64 finalizer; mixes (seed, index) pairs into independent stream seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Per-trajectory random stream. Streams for (seed, index) depend only on that
/// pair, so ensemble results do not depend on scheduling.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed, std::uint64_t index = 0)
        : engine_(splitmix64(splitmix64(seed) ^ splitmix64(index + 0x632BE59BD9B4E019ULL))) {}

    double gaussian() { return normal_(engine_); }
    double uniform() { return uniform_(engine_); }

    Vec gaussian_vec(int d) {
        Vec z(d);
        for (int i = 0; i < d; ++i) z[i] = gaussian();
        return z;
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

} // namespace geolangevin
